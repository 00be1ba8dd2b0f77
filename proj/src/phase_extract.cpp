#include "chirpnav/phase_extract.hpp"

#include <numeric>

namespace chirpnav {

PeakExtractor::PeakExtractor(const ChirpConfig& excitation, const TagLayout& layout,
                             std::size_t search_half_width) {
  for (int tag = 0; tag < kTagCount; ++tag) {
    ChirpConfig c = excitation;
    c.f0 = layout.shift_hz[static_cast<std::size_t>(tag)];
    dechirpers_.emplace_back(c);
  }
  if (search_half_width > 0) opts_.search_half_width = search_half_width;
}

FramePeaks PeakExtractor::operator()(const RxFrame& frame, double t, std::uint64_t chirp_id) const {
  FramePeaks out;
  out.channel = frame.channel;
  out.chirp_id = chirp_id;
  out.t = t;
  for (std::size_t m = 0; m < frame.antennas.size(); ++m) {
    std::array<BinReport, kTagCount> row;
    for (int tag = 0; tag < kTagCount; ++tag) {
      const auto& dech = dechirpers_[static_cast<std::size_t>(tag)];
      const auto r = dech(frame.antennas[m], opts_);
      BinReport& b = row[static_cast<std::size_t>(tag)];
      b.tag = tag;
      b.antenna = static_cast<int>(m);
      b.channel = frame.channel;
      b.chirp_id = chirp_id;
      b.t = t;
      b.freq_hz = r.frequency_hz(dech.config());
      b.phase = r.peak_phase;
      b.peak_magnitude = r.peak_magnitude;
      b.median_magnitude = r.median_magnitude;
      b.detected = r.peak_magnitude >= kDetectionRatio * r.median_magnitude;
    }
    out.reports.push_back(row);
  }
  return out;
}

PairBins eliminate_rotational_shift(const BinReport& b, const BinReport& b_opposite) {
  if (b.chirp_id != b_opposite.chirp_id || b.channel != b_opposite.channel || b.antenna != b_opposite.antenna)
    throw ContractViolation("eliminate_rotational_shift: reports come from different chirps");
  return {0.5 * (b.freq_hz + b_opposite.freq_hz), b.freq_hz - b_opposite.freq_hz};
}

double CfoCalibration::pair_difference() const {
  return 0.5 * (offsets_[0] + offsets_[1]) - 0.5 * (offsets_[2] + offsets_[3]);
}

BinReport CfoCalibration::apply(BinReport r) const {
  r.freq_hz -= offset(r.tag);
  return r;
}

FramePeaks CfoCalibration::apply(FramePeaks f) const {
  for (auto& row : f.reports)
    for (auto& r : row) r = apply(r);
  return f;
}

CfoCalibration calibrate_cfo(const std::vector<FramePeaks>& stationary, std::span<const ImuSample> imu,
                             const MotionThresholds& th) {
  for (const auto& s : imu) {
    if (s.gyro.norm() > th.gyro_radps || std::abs(s.acc.norm() - kGravity) > th.accel_mps2)
      throw CalibrationError("motion detected during CFO calibration at t=" + std::to_string(s.t));
  }
  std::array<double, kTagCount> sum{0.0, 0.0, 0.0, 0.0};
  std::size_t n = 0;
  for (const auto& f : stationary)
    for (const auto& row : f.reports) {
      if (!std::all_of(row.begin(), row.end(), [](const BinReport& r) { return r.detected; })) continue;
      const double ref = 0.5 * (row[0].freq_hz + row[1].freq_hz);
      for (int tag = 0; tag < kTagCount; ++tag) sum[tag] += row[tag].freq_hz - ref;
      ++n;
    }
  if (n == 0) throw CalibrationError("no frame with all tags detected during CFO calibration");
  for (auto& s : sum) s /= static_cast<double>(n);
  return CfoCalibration(sum);
}

double remove_translational_shift(double average_hz, const Vec3& u_p, const Vec3& v_est, double fc) {
  return average_hz - doppler_shift(u_p, v_est, Vec3::Zero(), fc).translational_hz;
}

void VelocityFeedback::publish(double t, const Vec3& v) {
  std::lock_guard lock(mu_);
  value_ = Reading{v, t, false};
}

VelocityFeedback::Reading VelocityFeedback::latest(double t_now) const {
  std::lock_guard lock(mu_);
  if (!value_) return {};
  Reading r = *value_;
  r.stale = t_now - r.t > max_age_;
  return r;
}

double chirp_phase_sum(double theta_1, std::span<const double> freqs) {
  if (freqs.empty() || freqs[0] == 0.0) throw ContractViolation("chirp_phase_sum needs f_1 != 0");
  double ratio = 0.0;
  for (double f : freqs) ratio += f / freqs[0];
  return theta_1 * ratio;
}

std::vector<double> distribute_phase_sum(double theta_sum, std::span<const double> freqs) {
  const double total = std::accumulate(freqs.begin(), freqs.end(), 0.0);
  if (total == 0.0) throw ContractViolation("distribute_phase_sum: frequencies sum to zero");
  std::vector<double> out;
  for (double f : freqs) out.push_back(theta_sum * f / total);
  return out;
}

double channel_phase(double peak_phase, double f_T_hz, const ChirpConfig& cfg, long realign_samples,
                     double tone_hz) {
  const double k = cfg.slope();
  const double tau = -f_T_hz / k;
  const double chirp_term = kPi * cfg.bw * tau + kPi * k * tau * tau;
  const double cycles = tone_hz * static_cast<double>(realign_samples) / cfg.fs;
  const double tone_term = kTwoPi * (cycles - std::floor(cycles));
  return wrap_angle(peak_phase - chirp_term - tone_term);
}

int PhaseSet::usable_channels(int tag) const {
  const auto& w = weight[static_cast<std::size_t>(tag)];
  int n = 0;
  for (Eigen::Index c = 0; c < w.cols(); ++c)
    if ((w.col(c).array() > 0.0).all()) ++n;
  return n;
}

PhaseExtraction solve_channel_phases(const std::vector<FramePeaks>& frames, const ChannelPlan& plan,
                                     const ChirpConfig& cfg, const Vec3& u_p_est, const Vec3& v_est) {
  if (frames.size() != plan.channels.size())
    throw ContractViolation("solve_channel_phases: one frame per scheduled channel expected");
  PhaseExtraction out;
  auto& ps = out.phases;
  ps.channels = plan.channels;
  const auto n_ch = static_cast<Eigen::Index>(frames.size());
  const auto n_ant = static_cast<Eigen::Index>(frames.empty() ? 0 : frames.front().reports.size());
  for (int tag = 0; tag < kTagCount; ++tag) {
    ps.theta[tag] = Eigen::MatrixXd::Zero(n_ant, n_ch);
    ps.weight[tag] = Eigen::MatrixXd::Zero(n_ant, n_ch);
  }

  double ft_sum = 0.0, d1_sum = 0.0, d2_sum = 0.0;
  int ft_n = 0, d1_n = 0, d2_n = 0;
  for (Eigen::Index c = 0; c < n_ch; ++c) {
    const auto& f = frames[static_cast<std::size_t>(c)];
    if (f.channel != plan.channels[static_cast<std::size_t>(c)])
      throw ContractViolation("solve_channel_phases: frames out of channel order");
    const double fch = plan.frequency(f.channel);
    ps.freqs_hz.push_back(fch);
    for (const auto& row : f.reports) {
      if (row[0].detected && row[1].detected) {
        const auto p = eliminate_rotational_shift(row[0], row[1]);
        ft_sum += remove_translational_shift(p.average_hz, u_p_est, v_est, fch);
        ++ft_n;
        d1_sum += p.difference_hz;
        ++d1_n;
      }
      if (row[2].detected && row[3].detected) {
        const auto p = eliminate_rotational_shift(row[2], row[3]);
        ft_sum += remove_translational_shift(p.average_hz, u_p_est, v_est, fch);
        ++ft_n;
        d2_sum += p.difference_hz;
        ++d2_n;
      }
    }
  }
  out.f_T_hz = ft_n > 0 ? ft_sum / ft_n : 0.0;
  if (d1_n > 0) out.delta_b1_hz = d1_sum / d1_n;
  if (d2_n > 0) out.delta_b2_hz = d2_sum / d2_n;

  for (Eigen::Index c = 0; c < n_ch; ++c) {
    const auto& f = frames[static_cast<std::size_t>(c)];
    for (Eigen::Index m = 0; m < n_ant; ++m)
      for (int tag = 0; tag < kTagCount; ++tag) {
        const auto& r = f.reports[static_cast<std::size_t>(m)][static_cast<std::size_t>(tag)];
        if (!r.detected) continue;
        ps.theta[tag](m, c) = channel_phase(r.phase, out.f_T_hz, cfg);
        ps.weight[tag](m, c) = 1.0;
      }
  }
  return out;
}

}  // namespace chirpnav
