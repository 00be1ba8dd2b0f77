#pragma once

// Ground-truth world: MAV trajectories, tag geometry on the landing gear,
// and synthetic IMU / barometer streams.
//
// World frame is z-up with gravity (0, 0, 9.81) as the specific-force offset.
// Attitude is yaw-only (level body); the body angular velocity is (0, 0, yaw rate).

#include "chirpnav/common.hpp"

#include <array>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace chirpnav {

struct RigidState {
  double t = 0.0;
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Quat q = Quat::Identity();
  Vec3 omega = Vec3::Zero();  // body frame
  Vec3 a = Vec3::Zero();      // world frame
};

enum class TagId : int { T1 = 0, T1p = 1, T2 = 2, T2p = 3 };
inline constexpr int kTagCount = 4;

struct TagLayout {
  double diameter = 0.66;
  /// Body-frame positions in order T1, T1', T2, T2'.
  std::array<Vec3, kTagCount> body;
  std::array<double, kTagCount> shift_hz{1e6, 2e6, 3e6, 4e6};

  /// T1 on +x, T2 on +y, primes opposite, all at radius D/2 in the body z=0 plane.
  static TagLayout standard(double diameter = 0.66);
  void validate() const;
  double max_shift() const;
};

struct TagKinematics {
  std::array<Vec3, kTagCount> position;
  /// Full tag velocity v + R (omega x r).
  std::array<Vec3, kTagCount> velocity;
  /// Rotational part R (omega x r) alone.
  std::array<Vec3, kTagCount> rotational;
};

TagKinematics tag_world_positions(const RigidState& s, const TagLayout& layout);

/// One propagation path. The direct path (excess 0) is implicit and always present.
struct MultipathRay {
  double excess_path_m = 0.0;
  Complex gain{0.5, 0.0};
  /// Arrival direction relative to the direct path, in azimuth.
  double azimuth_offset_rad = 0.0;
  /// -1 applies to every tag.
  int tag = -1;
};

enum class TrajectoryKind { stationary, line, circle, square, yaw_ramp };

TrajectoryKind trajectory_from_string(const std::string& s);
std::string to_string(TrajectoryKind k);

struct NoiseProfile {
  double phase_sigma_rad = 0.0;
  double bin_sigma_hz = 0.0;
  double accel_density = 0.0;  // m/s^2/sqrt(Hz)
  double gyro_density = 0.0;   // rad/s/sqrt(Hz)
  double baro_sigma_m = 0.0;
  std::array<double, kTagCount> cfo_hz{0.0, 0.0, 0.0, 0.0};
  std::vector<MultipathRay> rays;
};

struct Scenario {
  TrajectoryKind kind = TrajectoryKind::circle;
  double duration_s = 60.0;
  double speed_mps = 2.5;
  double radius_m = 5.0;        // circle
  double side_m = 8.0;          // square
  double length_m = 10.0;       // line
  double accel_max_mps2 = 2.0;  // line / square speed profile
  double yaw_rate_radps = 0.3;  // line / square constant yaw rate
  double hover_s = 1.0;         // stationary pre-roll
  double ramp_s = 2.0;          // circle speed ramp
  double initial_yaw_rad = 0.0;
  Vec3 center = Vec3(0.0, 0.0, 1.5);
  Vec3 controller = Vec3(-20.0, 0.0, 0.0);
  double imu_rate_hz = 100.0;
  double feature_rate_hz = 10.0;
  NoiseProfile noise;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Analytic state at time t in [0, duration]. Throws RangeError outside.
RigidState sample_state(const Scenario& scn, double t);

struct ImuSample {
  double t = 0.0;
  Vec3 acc = Vec3::Zero();
  Vec3 gyro = Vec3::Zero();
};

/// IMU stream at imu_rate over [0, duration], seeded from scn.seed.
std::vector<ImuSample> synth_imu(const Scenario& scn);

/// Noise-free specific force and gyro for a state.
ImuSample ideal_imu(const RigidState& s);

/// Barometric altitude h = p_z + noise.
double barometer(const RigidState& s, double sigma, std::mt19937_64& rng);

}  // namespace chirpnav
