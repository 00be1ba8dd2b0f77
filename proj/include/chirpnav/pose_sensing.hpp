#pragma once

// Range, angle and yaw features from per-channel phases and pair bin differences.

#include "chirpnav/channel_sim.hpp"
#include "chirpnav/phase_extract.hpp"

#include <Eigen/Core>

#include <optional>
#include <span>
#include <vector>

namespace chirpnav {

// ---- range ----

struct MultipathProfile {
  std::vector<double> power;
  /// Delay per profile bin, seconds (round trip).
  double bin_spacing_s = 0.0;
  /// Round-trip delay of the detected direct path.
  double direct_delay_s = 0.0;
};

struct RangeOptions {
  std::size_t ifft_len = 1024;
  /// Fraction of the profile maximum (power) that marks the direct path.
  double threshold = 0.25;
  int min_channels = 8;
};

struct RangeResult {
  std::optional<double> range_m;
  MultipathProfile profile;
};

/// theta: antennas x channel slots; weight > 0 marks usable entries. Channels
/// are indices on a uniform grid of spacing_hz.
RangeResult estimate_range(const Eigen::MatrixXd& theta, const Eigen::MatrixXd& weight,
                           std::span<const int> channels, double spacing_hz, const RangeOptions& opts = {});
RangeResult estimate_range(const PhaseSet& ps, int tag, double spacing_hz, const RangeOptions& opts = {});

// ---- angle ----

/// Unit-magnitude M x N matrix of phasors over channel slots where the tag is
/// seen on every antenna.
Eigen::MatrixXcd virtual_matrix(const PhaseSet& ps, int tag);

struct AngleOptions {
  double grid_step_deg = 0.1;
  double eigen_gap = 10.0;
  /// Signal eigenvalues must exceed this fraction of the largest one; keeps the
  /// small spread from channel-dependent steering out of the signal subspace.
  double signal_floor = 1e-2;
  bool forward_backward = true;
};

struct AngleResult {
  /// Broadside angle, radians in (-pi/2, pi/2); sin(phi) is the steering coordinate.
  double phi = 0.0;
  int k_hat = 1;
  /// Fewer than two snapshots: conventional beamforming was used.
  bool degraded = false;
};

/// Subspace angle estimate on a uniform linear array. Throws ContractViolation
/// for circular arrays or when X has fewer than 2 rows.
AngleResult estimate_angle(const Eigen::MatrixXcd& x, const ArrayGeometry& arr, double fc,
                           const AngleOptions& opts = {});

/// Harmonic mean of angles shifted into (0, pi) and shifted back.
double harmonic_mean_angle(std::span<const double> phis);

struct Elevation {
  double xi = 0.0;
  bool clamped = false;
};

/// xi = arccos(h / d); h > d clamps to xi = 0 and flags it.
Elevation elevation_from_barometer(double h, double d);

/// [cos(phi) sin(xi), sin(phi) sin(xi), cos(xi)].
Vec3 angle_vector(double phi, double xi);

struct Direction {
  Vec3 a = Vec3::UnitX();
  double phi = 0.0;
  Elevation elevation;
};

/// Lifts the linear-array angle (whose sine is a_y) to 3D with the barometric elevation.
Direction direction_from_array(double phi_array, double h, double d);

// ---- rotation ----

/// Rotational shift of tag T1: (fc D / 2c) omega sin(xi) sin(phi_u - psi), where
/// phi_u is the azimuth of the propagation direction from the MAV to the array.
double rotational_shift(double omega, double phi_u, double psi, double diameter, double fc, double sin_xi = 1.0);

struct RotationOptions {
  double omega_min = 0.1;
  /// Standard deviation of each pair difference, Hz.
  double sigma_b_hz = 0.0;
  double sigma_floor_rad = 0.0;
};

struct RotationResult {
  std::optional<double> psi;
  double sigma = 0.0;
  bool clamped = false;
};

/// Inverts the rotational-shift model of both orthogonal pairs for yaw.
RotationResult estimate_rotation(double delta_b1_hz, double delta_b2_hz, double phi_u, double omega,
                                 double diameter, double fc, double sin_xi = 1.0, const RotationOptions& opts = {});

// ---- features ----

struct PoseFeature {
  double t = 0.0;
  double d = 0.0;
  Vec3 a = Vec3::UnitX();
  std::optional<double> psi;
  double sigma_d = 0.0;
  double sigma_a = 0.0;
  double sigma_psi = 0.0;
  bool elevation_clamped = false;
  bool angle_degraded = false;
  /// False when too few channels were usable for the range or angle.
  bool has_range = true;
  bool has_angle = true;
};

}  // namespace chirpnav
