#pragma once

// End-to-end runs: scene -> channel -> phases -> features -> fusion, plus
// metrics, CSV artifacts and parameter sweeps.

#include "chirpnav/channel_sim.hpp"
#include "chirpnav/fusion.hpp"
#include "chirpnav/pose_sensing.hpp"
#include "chirpnav/scene.hpp"
#include "chirpnav/signal_core.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace chirpnav {

/// iq: synthesized IQ frames through the dechirp path. phases: analytic
/// channel phases with noise, skipping IQ. features: noisy (d, a, psi) drawn
/// around the truth, skipping sensing.
enum class PipelineMode { iq, phases, features };

PipelineMode pipeline_mode_from_string(const std::string& s);
std::string to_string(PipelineMode m);

/// Per-sample SNR (dB) = snr_at_1m_db - path_loss_db_per_decade log10(r) - wall_db.
struct LinkBudget {
  double snr_at_1m_db = 35.0;
  double path_loss_db_per_decade = 40.0;
  double wall_db = 0.0;

  double snr_db(double range_m) const;
};

struct SensingConfig {
  /// Feature noise model handed to the estimator (and drawn in features mode).
  double range_sigma_m = 0.5;
  double angle_sigma_deg = 3.0;
  double yaw_sigma_deg = 5.0;
  RangeOptions range;
  AngleOptions angle;
  double omega_min_radps = 0.1;
  /// Multiplies the noise drawn in features mode; 0 gives exact features
  /// while the sigmas above still weight them.
  double feature_noise_scale = 1.0;
};

struct RunConfig {
  Scenario scenario;
  int sf = 12;
  double bw_hz = 500e3;
  ChannelPlan plan;
  int antennas = 3;
  double antenna_spacing_m = 0.16;
  double tag_diameter_m = 0.66;
  LinkBudget link;
  PipelineMode mode = PipelineMode::phases;
  SensingConfig sensing;
  EstimatorConfig solver;
  /// Longest tolerated run of epochs without a feature before giving up.
  double max_gap_s = 2.0;
  std::filesystem::path output_dir = "out";

  /// Excitation with the sample rate derived from the tag shifts.
  ChirpConfig chirp() const;
  ArrayGeometry array() const;
  TagLayout tags() const;

  /// Throws ConfigError on unknown keys, wrong types or invalid values.
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  void validate() const;
};

struct EpochRecord {
  double t = 0.0;
  RigidState truth;
  PoseFeature feature;
  /// False when nothing was detected at this epoch.
  bool signal = false;
  std::optional<NavState> estimate;  // world frame, anchor-aligned
  std::optional<Vec3> anchor;        // estimator frame
  int iterations = 0;
  bool converged = false;
  double solve_ms = 0.0;
};

struct ErrorStats {
  std::size_t count = 0;
  double mean = 0.0;
  double rmse = 0.0;
  double p50 = 0.0;
  double p90 = 0.0;
  double max = 0.0;

  static ErrorStats of(std::vector<double> v);
};

struct MetricsReport {
  std::size_t epochs = 0;
  std::size_t scored_epochs = 0;
  double position_rmse_m = 0.0;
  double position_mean_m = 0.0;
  Vec3 axis_rmse_m = Vec3::Zero();
  double orientation_mean_deg = 0.0;
  double yaw_max_deg = 0.0;
  double yaw_drift_deg_per_s = 0.0;
  double raw_position_rmse_m = 0.0;
  double dead_reckoning_final_m = 0.0;
  double fused_final_m = 0.0;
  ErrorStats range_error_m;
  ErrorStats angle_error_deg;
  ErrorStats yaw_feature_error_deg;
  double no_signal_rate = 0.0;
  int max_iterations = 0;
  bool all_converged = true;
  double solve_ms_mean = 0.0;
  double runtime_s = 0.0;

  nlohmann::json to_json() const;
};

struct RunResult {
  std::vector<EpochRecord> epochs;
  MetricsReport metrics;
  /// 0 ok, 3 signal lost for longer than max_gap_s.
  int exit_code = 0;
  std::string message;
};

/// Runs the full pipeline in memory. Deterministic for a fixed config.
RunResult run_pipeline(const RunConfig& cfg);

/// Metrics over epochs with index >= warmup that carry an estimate.
/// `imu` is used for the dead-reckoning comparison and may be empty.
MetricsReport compute_metrics(const std::vector<EpochRecord>& epochs, std::size_t warmup,
                              const std::vector<ImuSample>& imu, const Vec3& controller, const ImuNoise& noise);

/// Writes config.json, ground_truth.csv, features.csv, estimate.csv and metrics.json.
void write_artifacts(const std::filesystem::path& dir, const RunConfig& cfg, const RunResult& res);

/// Position / orientation metrics between two trajectory CSVs, joined on t.
MetricsReport metrics_from_csv(const std::filesystem::path& truth, const std::filesystem::path& estimate,
                               std::size_t warmup);

/// Applies one sweep value to a copy of the config. Sweepable: speed, distance,
/// wall_db, snr, window. Throws ConfigError for anything else.
RunConfig apply_sweep_value(const RunConfig& base, const std::string& param, double value);

struct SweepRow {
  double value = 0.0;
  int exit_code = 0;
  MetricsReport metrics;
};

/// One run per value, artifacts under out/<param>_<i>, table in out/sweep_<param>.csv.
std::vector<SweepRow> run_sweep(const RunConfig& base, const std::string& param, const std::vector<double>& values,
                                const std::filesystem::path& out);

}  // namespace chirpnav
