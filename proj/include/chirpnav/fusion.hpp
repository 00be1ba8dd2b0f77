#pragma once

// Sliding-window backscatter-inertial estimation.
//
// States live in a world-aligned frame (z up). Each state carries p, v (world)
// and q (body to world); the error state is [dp dv dtheta] with the attitude
// perturbed on the right, q <- q * Exp(dtheta). The anchor rho is shared.

#include "chirpnav/pose_sensing.hpp"
#include "chirpnav/scene.hpp"

#include <Eigen/Core>

#include <deque>
#include <optional>
#include <span>
#include <vector>

namespace chirpnav {

using Mat9 = Eigen::Matrix<double, 9, 9>;
using Vec7 = Eigen::Matrix<double, 7, 1>;
using Vec9 = Eigen::Matrix<double, 9, 1>;

struct NavState {
  double t = 0.0;
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Quat q = Quat::Identity();
};

struct ImuNoise {
  double accel_density = 0.004;  // m/s^2/sqrt(Hz)
  double gyro_density = 3e-4;    // rad/s/sqrt(Hz)
};

struct Preintegrated {
  Vec3 alpha = Vec3::Zero();
  Vec3 beta = Vec3::Zero();
  Quat gamma = Quat::Identity();
  double dt = 0.0;
  /// Covariance of [alpha beta theta].
  Mat9 cov = Mat9::Zero();
};

/// Integrates samples over [t0, t1] (samples linearly interpolated, RK4 with
/// `substeps` steps per sample interval). `cov_trace`, when given,
/// receives the covariance after every step. Throws ContractViolation for an
/// empty or unordered stream or one that does not cover [t0, t1].
Preintegrated preintegrate(std::span<const ImuSample> imu, double t0, double t1, const ImuNoise& noise,
                           int substeps = 8, std::vector<Mat9>* cov_trace = nullptr);

/// Predicts the next state from a preintegrated segment.
NavState propagate(const NavState& s, const Preintegrated& pre);

// ---- residual blocks ----

struct BackscatterJacobian {
  Eigen::Matrix<double, 7, 9> state = Eigen::Matrix<double, 7, 9>::Zero();
  Eigen::Matrix<double, 7, 3> rho = Eigen::Matrix<double, 7, 3>::Zero();
};

struct ImuJacobian {
  Mat9 from = Mat9::Zero();
  Mat9 to = Mat9::Zero();
};

/// Attitude measurement from yaw psi with roll/pitch taken from `reference`.
Quat measured_attitude(double psi, const Quat& reference);

/// [|d^2 - u.u|, a x u, 2 vec(q_meas^-1 q)], u = p - rho.
Vec7 backscatter_residual(const NavState& s, const Vec3& rho, const PoseFeature& z, const Quat& q_meas,
                          BackscatterJacobian* jac = nullptr);

/// Information (inverse covariance) of the backscatter block. Rows of missing
/// parts are zero, and so are the roll/pitch rows.
Eigen::Matrix<double, 7, 7> backscatter_information(const PoseFeature& z);

Vec9 imu_residual(const NavState& a, const NavState& b, const Preintegrated& pre, ImuJacobian* jac = nullptr);

// ---- window ----

struct EstimatorConfig {
  int window = 30;
  int max_iterations = 20;
  double step_tolerance = 1e-6;
  int substeps = 8;
  ImuNoise imu;
  bool gauge_fix = true;
  /// Without any yaw measurement in the window, the first state's world yaw is
  /// pulled toward its value at the start of the solve with this sigma.
  double yaw_prior_sigma_rad = 0.2;
};

struct Epoch {
  NavState state;
  PoseFeature feature;
  std::optional<Quat> q_meas;
  /// Accelerometer reading at the epoch, used for the initial roll/pitch.
  Vec3 specific_force = gravity_world();
};

struct Window {
  std::deque<Epoch> epochs;
  /// factors[i] links epochs[i] and epochs[i+1].
  std::deque<Preintegrated> factors;
  Vec3 rho = Vec3::Zero();

  std::size_t size() const { return epochs.size(); }
};

struct SolveReport {
  int iterations = 0;
  bool converged = false;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  std::vector<double> cost_history;
};

double window_cost(const Window& w, const EstimatorConfig& cfg);

/// Gauss-Newton with step halving. The first state's position is held; its yaw
/// is held too when no epoch in the window carries a yaw measurement.
SolveReport solve(Window& w, const EstimatorConfig& cfg);

/// Builds a window from buffered epochs once at least 3 have range and angle.
/// Positions p_i = rho + a_i d_i with rho placing the first state at the
/// origin; gaps are interpolated in time; velocities by finite differences;
/// attitudes from yaw plus accelerometer roll/pitch, chained by gamma.
/// Returns nullopt when not ready.
std::optional<Window> initialize(const std::vector<PoseFeature>& features, const std::vector<Preintegrated>& factors,
                                 const std::vector<Vec3>& specific_force, const EstimatorConfig& cfg);

/// Appends an epoch predicted from the newest state and drops the oldest one
/// when the window exceeds cfg.window.
void slide(Window& w, const PoseFeature& z, const Preintegrated& pre, const EstimatorConfig& cfg,
           const Vec3& specific_force = gravity_world());

/// Online driver: buffers epochs until initialize() succeeds, then slides and solves.
class Estimator {
 public:
  explicit Estimator(EstimatorConfig cfg) : cfg_(cfg) {}

  /// `pre` integrates the IMU from the previous epoch; ignored for the first.
  void add_epoch(const PoseFeature& z, const Preintegrated& pre, const Vec3& specific_force);

  bool initialized() const { return window_.has_value(); }
  const Window& window() const { return *window_; }
  std::optional<NavState> latest() const;
  std::optional<Vec3> anchor() const;
  const SolveReport& last_report() const { return report_; }
  const EstimatorConfig& config() const { return cfg_; }

 private:
  EstimatorConfig cfg_;
  std::vector<PoseFeature> pending_;
  std::vector<Preintegrated> pending_factors_;
  std::vector<Vec3> pending_force_;
  std::optional<Window> window_;
  SolveReport report_;
};

}  // namespace chirpnav
