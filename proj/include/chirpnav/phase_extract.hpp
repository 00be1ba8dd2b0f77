#pragma once

// Per-channel, per-antenna channel phases from dechirped backscatter frames.
//
// Opposing tags see equal and opposite rotational Doppler, so their bin average
// keeps only the timing offset f_T and the translational shift, and their
// difference keeps twice the rotational shift. Relative CFO between tags is
// calibrated while the MAV is still on the ground.

#include "chirpnav/channel_sim.hpp"
#include "chirpnav/scene.hpp"
#include "chirpnav/signal_core.hpp"

#include <Eigen/Core>

#include <array>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace chirpnav {

struct CalibrationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct BinReport {
  int tag = 0;
  int antenna = 0;
  int channel = 0;
  std::uint64_t chirp_id = 0;
  double t = 0.0;
  /// Refined peak frequency, signed Hz.
  double freq_hz = 0.0;
  double phase = 0.0;
  double peak_magnitude = 0.0;
  double median_magnitude = 0.0;
  bool detected = false;
};

/// One capture on one channel: reports[antenna][tag].
struct FramePeaks {
  int channel = 0;
  std::uint64_t chirp_id = 0;
  double t = 0.0;
  std::vector<std::array<BinReport, kTagCount>> reports;
};

inline constexpr double kDetectionRatio = 5.0;

/// Dechirps every antenna of a frame against each tag's matched reference.
class PeakExtractor {
 public:
  /// search_half_width bins around each tag's nominal tone; 0 searches the full FFT.
  PeakExtractor(const ChirpConfig& excitation, const TagLayout& layout, std::size_t search_half_width = 64);

  FramePeaks operator()(const RxFrame& frame, double t, std::uint64_t chirp_id) const;

 private:
  std::vector<Dechirper> dechirpers_;
  DechirpOptions opts_;
};

struct PairBins {
  /// 0.5 (B + B') = f_T + df_t.
  double average_hz = 0.0;
  /// B - B' = 2 df_r.
  double difference_hz = 0.0;
};

/// Throws ContractViolation when the reports are not from the same chirp, channel and antenna.
PairBins eliminate_rotational_shift(const BinReport& b, const BinReport& b_opposite);

struct MotionThresholds {
  double gyro_radps = 0.05;
  double accel_mps2 = 0.3;
};

/// Per-tag CFO offsets relative to the mean of the T1 pair.
class CfoCalibration {
 public:
  CfoCalibration() = default;
  explicit CfoCalibration(const std::array<double, kTagCount>& offsets) : offsets_(offsets) {}

  double offset(int tag) const { return offsets_[static_cast<std::size_t>(tag)]; }
  const std::array<double, kTagCount>& offsets() const { return offsets_; }
  /// Mean CFO of the T1 pair minus mean CFO of the T2 pair.
  double pair_difference() const;
  BinReport apply(BinReport r) const;
  FramePeaks apply(FramePeaks f) const;

 private:
  std::array<double, kTagCount> offsets_{0.0, 0.0, 0.0, 0.0};
};

/// Calibrates from frames captured while the MAV is stationary. Throws
/// CalibrationError when the IMU shows motion or no tag is detected.
CfoCalibration calibrate_cfo(const std::vector<FramePeaks>& stationary, std::span<const ImuSample> imu,
                             const MotionThresholds& th = {});

/// f_T = avg - (fc/c) u_p . v_est.
double remove_translational_shift(double average_hz, const Vec3& u_p, const Vec3& v_est, double fc);

/// Latest fused velocity, written by the estimator and read by the signal path.
class VelocityFeedback {
 public:
  struct Reading {
    Vec3 v = Vec3::Zero();
    double t = 0.0;
    bool stale = true;
  };

  explicit VelocityFeedback(double max_age_s = 0.2) : max_age_(max_age_s) {}
  void publish(double t, const Vec3& v);
  /// Held value; stale when nothing was published or it is older than max_age.
  Reading latest(double t_now) const;

 private:
  mutable std::mutex mu_;
  std::optional<Reading> value_;
  double max_age_;
};

/// theta_sum = theta_1 * sum_i (f_i / f_1), the phase a dechirped peak
/// accumulates over a chirp whose frequencies all share one delay.
double chirp_phase_sum(double theta_1, std::span<const double> freqs);
/// Inverse of chirp_phase_sum under the same linear model: theta_i = theta_sum f_i / sum f.
std::vector<double> distribute_phase_sum(double theta_sum, std::span<const double> freqs);

/// Channel phase from a dechirped peak phase: removes pi bw tau + pi k tau^2
/// (tau = -f_T / k) and, after a realign by `realign_samples`, the tone term.
double channel_phase(double peak_phase, double f_T_hz, const ChirpConfig& cfg, long realign_samples = 0,
                     double tone_hz = 0.0);

struct PhaseSet {
  std::vector<int> channels;
  std::vector<double> freqs_hz;
  /// theta[tag](antenna, channel slot), wrapped to (-pi, pi].
  std::array<Eigen::MatrixXd, kTagCount> theta;
  /// 1 where the tag was detected on that antenna and channel, else 0.
  std::array<Eigen::MatrixXd, kTagCount> weight;

  int antennas() const { return static_cast<int>(theta[0].rows()); }
  /// Number of channel slots where tag is detected on every antenna.
  int usable_channels(int tag) const;
};

struct PhaseExtraction {
  PhaseSet phases;
  /// Rotational pair differences B_T1 - B_T1' and B_T2 - B_T2', averaged, Hz.
  std::optional<double> delta_b1_hz;
  std::optional<double> delta_b2_hz;
  /// Timing-offset estimate after translational removal, Hz.
  double f_T_hz = 0.0;
};

/// Frames must be CFO-calibrated and ordered by channel; one frame per scheduled channel.
PhaseExtraction solve_channel_phases(const std::vector<FramePeaks>& frames, const ChannelPlan& plan,
                                     const ChirpConfig& cfg, const Vec3& u_p_est, const Vec3& v_est);

}  // namespace chirpnav
