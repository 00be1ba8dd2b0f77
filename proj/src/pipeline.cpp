#include "chirpnav/pipeline.hpp"

#include "chirpnav/phase_extract.hpp"
#include "chirpnav/so3.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace chirpnav {

namespace {

constexpr std::uint64_t kPhaseStream = 0x504853;
constexpr std::uint64_t kFeatureStream = 0x464541;
constexpr std::uint64_t kBaroStream = 0x42524f;
constexpr std::uint64_t kIqStream = 0x4951;

struct Context {
  const RunConfig& cfg;
  ChirpConfig chirp;
  ArrayGeometry arr;
  TagLayout tags;
  std::size_t n_samples;
};

bool detectable(double snr_linear, std::size_t n) {
  return snr_linear * static_cast<double>(n) >= 25.0 * std::log(2.0);
}

// Analytic channel phases: the phase each dechirped peak would carry, plus
// phase noise from the configured floor and the post-FFT SNR.
PhaseExtraction analytic_phases(const Context& ctx, const RigidState& s, double snr, std::mt19937_64& rng) {
  const auto& plan = ctx.cfg.plan;
  const auto n_ch = static_cast<Eigen::Index>(plan.channels.size());
  PhaseExtraction out;
  auto& ps = out.phases;
  ps.channels = plan.channels;
  for (int tag = 0; tag < kTagCount; ++tag) {
    ps.theta[tag] = Eigen::MatrixXd::Zero(ctx.arr.m, n_ch);
    ps.weight[tag] = Eigen::MatrixXd::Zero(ctx.arr.m, n_ch);
  }
  const bool seen = detectable(snr, ctx.n_samples);
  const double sp = ctx.cfg.scenario.noise.phase_sigma_rad;
  const double sigma = std::sqrt(sp * sp + 1.0 / (2.0 * static_cast<double>(ctx.n_samples) * std::max(snr, 1e-30)));
  std::normal_distribution<double> g(0.0, 1.0);

  std::array<double, kTagCount> rot{0.0, 0.0, 0.0, 0.0};
  for (Eigen::Index c = 0; c < n_ch; ++c) {
    const int ch = plan.channels[static_cast<std::size_t>(c)];
    LinkParams link;
    link.channel_hz = plan.frequency(ch);
    ps.freqs_hz.push_back(link.channel_hz);
    std::array<std::vector<Complex>, kTagCount> sum;
    for (auto& v : sum) v.assign(static_cast<std::size_t>(ctx.arr.m), Complex{});
    std::array<bool, kTagCount> direct_seen{false, false, false, false};
    for (const auto& pc : channel_paths(s, ctx.tags, ctx.cfg.scenario.noise.rays, ctx.arr, link)) {
      for (int m = 0; m < ctx.arr.m; ++m)
        sum[pc.tag][static_cast<std::size_t>(m)] += pc.antenna_gain[static_cast<std::size_t>(m)];
      if (!direct_seen[pc.tag]) {
        rot[pc.tag] += pc.doppler.rotational_hz / static_cast<double>(n_ch);
        direct_seen[pc.tag] = true;
      }
    }
    for (int tag = 0; tag < kTagCount; ++tag)
      for (int m = 0; m < ctx.arr.m; ++m) {
        const double noise = sigma * g(rng);
        if (!seen) continue;
        ps.theta[tag](m, c) = wrap_angle(std::arg(sum[tag][static_cast<std::size_t>(m)]) + noise);
        ps.weight[tag](m, c) = 1.0;
      }
  }
  const double sb = ctx.cfg.scenario.noise.bin_sigma_hz;
  const double n1 = sb * g(rng), n2 = sb * g(rng);
  if (seen) {
    out.delta_b1_hz = rot[0] - rot[1] + n1;
    out.delta_b2_hz = rot[2] - rot[3] + n2;
  }
  return out;
}

// Std of the channel-averaged pair difference measured from IQ: the single-tone
// frequency bound at the per-sample SNR, doubled for the pair, averaged over channels.
double iq_bin_sigma(const Context& ctx, double snr) {
  const double n = static_cast<double>(ctx.n_samples);
  const double tone = std::sqrt(12.0 / (std::max(snr, 1e-30) * n)) / (kTwoPi * ctx.chirp.duration());
  const double pair = tone * std::sqrt(2.0 / static_cast<double>(ctx.cfg.plan.channels.size()));
  const double floor = ctx.cfg.scenario.noise.bin_sigma_hz;
  return std::sqrt(floor * floor + pair * pair);
}

PoseFeature sense(const Context& ctx, const PhaseExtraction& ex, double t, double omega, double h,
                  double sigma_b_hz) {
  const auto& se = ctx.cfg.sensing;
  PoseFeature f;
  f.t = t;
  f.sigma_d = se.range_sigma_m;
  f.sigma_a = deg2rad(se.angle_sigma_deg);
  f.sigma_psi = deg2rad(se.yaw_sigma_deg);
  f.has_range = f.has_angle = false;

  std::vector<double> ranges;
  for (int tag = 0; tag < kTagCount; ++tag) {
    const auto r = estimate_range(ex.phases, tag, ctx.cfg.plan.spacing_hz, se.range);
    if (r.range_m && *r.range_m > 0.0) ranges.push_back(*r.range_m);
  }
  if (ranges.empty()) return f;
  f.d = std::accumulate(ranges.begin(), ranges.end(), 0.0) / static_cast<double>(ranges.size());
  f.has_range = true;

  std::vector<double> phis;
  for (int tag = 0; tag < kTagCount; ++tag) {
    if (ex.phases.usable_channels(tag) < 1) continue;
    const auto a = estimate_angle(virtual_matrix(ex.phases, tag), ctx.arr, ctx.cfg.plan.fc, se.angle);
    phis.push_back(a.phi);
    f.angle_degraded = f.angle_degraded || a.degraded;
  }
  if (phis.empty()) return f;
  const auto dir = direction_from_array(harmonic_mean_angle(phis), h, f.d);
  f.a = dir.a;
  f.elevation_clamped = dir.elevation.clamped;
  f.has_angle = true;

  if (ex.delta_b1_hz && ex.delta_b2_hz) {
    RotationOptions ro;
    ro.omega_min = se.omega_min_radps;
    ro.sigma_b_hz = sigma_b_hz;
    ro.sigma_floor_rad = f.sigma_psi;
    const double phi_u = std::atan2(-f.a.y(), -f.a.x());
    const auto rot = estimate_rotation(*ex.delta_b1_hz, *ex.delta_b2_hz, phi_u, omega, ctx.tags.diameter,
                                       ctx.cfg.plan.fc, std::sin(dir.elevation.xi), ro);
    if (rot.psi) {
      f.psi = rot.psi;
      f.sigma_psi = rot.sigma;
    }
  }
  return f;
}

// Features drawn around the truth with the configured sensing noise.
PoseFeature draw_feature(const Context& ctx, const RigidState& s, double t, double snr, std::mt19937_64& rng) {
  const auto& se = ctx.cfg.sensing;
  std::normal_distribution<double> g(0.0, 1.0);
  const double k = se.feature_noise_scale;
  const double nd = k * g(rng);
  const Vec3 na = k * Vec3(g(rng), g(rng), g(rng));
  const double npsi = k * g(rng);
  PoseFeature f;
  f.t = t;
  f.sigma_d = se.range_sigma_m;
  f.sigma_a = deg2rad(se.angle_sigma_deg);
  f.sigma_psi = deg2rad(se.yaw_sigma_deg);
  if (!detectable(snr, ctx.n_samples)) {
    f.has_range = f.has_angle = false;
    return f;
  }
  const Vec3 u = s.p - ctx.arr.position;
  f.d = std::max(u.norm() + f.sigma_d * nd, 1e-3);
  const Vec3 a = u.normalized();
  f.a = (a + f.sigma_a * (na - na.dot(a) * a)).normalized();
  if (std::abs(s.omega.z()) >= se.omega_min_radps) f.psi = wrap_angle(so3::yaw_of(s.q) + f.sigma_psi * npsi);
  return f;
}

std::size_t imu_index(const std::vector<ImuSample>& imu, double t, double rate) {
  const auto i = static_cast<std::size_t>(std::llround(t * rate));
  return std::min(i, imu.size() - 1);
}

// IQ front end: synthesizes one frame per channel, calibrates CFO during the
// hover, and extracts phases with the fused velocity fed back.
class IqFrontEnd {
 public:
  explicit IqFrontEnd(const Context& ctx) : ctx_(ctx), extractor_(ctx.chirp, ctx.tags) {}

  PhaseExtraction operator()(const RigidState& s, double t, std::size_t epoch, double snr_db,
                             const std::vector<ImuSample>& imu, const VelocityFeedback& vel,
                             const std::optional<Vec3>& a_prev) {
    const auto& cfg = ctx_.cfg;
    const double sigma = std::pow(10.0, -snr_db / 20.0);
    std::vector<FramePeaks> frames;
    for (std::size_t c = 0; c < cfg.plan.channels.size(); ++c) {
      const int ch = cfg.plan.channels[c];
      LinkParams link;
      link.channel_hz = cfg.plan.frequency(ch);
      link.cfo_hz = cfg.scenario.noise.cfo_hz;
      const auto frame = propagate(ctx_.chirp, ch, s, ctx_.tags, cfg.scenario.noise.rays, ctx_.arr, link, sigma,
                                   child_seed(cfg.scenario.seed, kIqStream, epoch));
      frames.push_back(extractor_(frame, t, epoch * cfg.plan.channels.size() + c));
    }
    if (!calibrated_) {
      if (t < cfg.scenario.hover_s) {
        hover_.insert(hover_.end(), frames.begin(), frames.end());
      } else {
        if (!hover_.empty()) {
          std::vector<ImuSample> still;
          for (const auto& x : imu)
            if (x.t < cfg.scenario.hover_s) still.push_back(x);
          cal_ = calibrate_cfo(hover_, still);
        }
        calibrated_ = true;
        hover_.clear();
      }
    }
    for (auto& f : frames) f = cal_.apply(f);
    const Vec3 u_p = a_prev ? Vec3(-*a_prev) : Vec3(-Vec3::UnitX());
    const auto v = vel.latest(t);
    return solve_channel_phases(frames, cfg.plan, ctx_.chirp, u_p, v.stale ? Vec3::Zero() : v.v);
  }

 private:
  const Context& ctx_;
  PeakExtractor extractor_;
  std::vector<FramePeaks> hover_;
  CfoCalibration cal_;
  bool calibrated_ = false;
};

}  // namespace

RunResult run_pipeline(const RunConfig& cfg) {
  cfg.validate();
  const auto t_start = std::chrono::steady_clock::now();
  Context ctx{cfg, cfg.chirp(), cfg.array(), cfg.tags(), 0};
  ctx.n_samples = ctx.chirp.sample_count();
  const auto& scn = cfg.scenario;
  const auto imu = synth_imu(scn);
  std::mt19937_64 baro_rng(child_seed(scn.seed, kBaroStream));

  Estimator est(cfg.solver);
  VelocityFeedback vel;
  std::optional<IqFrontEnd> iq;
  if (cfg.mode == PipelineMode::iq) iq.emplace(ctx);

  RunResult res;
  const auto n_epochs = static_cast<std::size_t>(std::floor(scn.duration_s * scn.feature_rate_hz + 1e-9)) + 1;
  double last_signal_t = 0.0;
  std::optional<Vec3> a_prev;
  std::size_t prev_idx = 0;
  for (std::size_t k = 0; k < n_epochs; ++k) {
    const double t = static_cast<double>(k) / scn.feature_rate_hz;
    EpochRecord rec;
    rec.t = t;
    rec.truth = sample_state(scn, t);
    const std::size_t idx = imu_index(imu, t, scn.imu_rate_hz);
    const double range = (rec.truth.p - ctx.arr.position).norm();
    const double snr_db = cfg.link.snr_db(range);
    const double snr = std::pow(10.0, snr_db / 10.0);
    const double h = barometer(rec.truth, scn.noise.baro_sigma_m, baro_rng) - ctx.arr.position.z();
    const double omega = imu[idx].gyro.z();

    switch (cfg.mode) {
      case PipelineMode::features: {
        std::mt19937_64 rng(child_seed(scn.seed, kFeatureStream, k));
        rec.feature = draw_feature(ctx, rec.truth, t, snr, rng);
        break;
      }
      case PipelineMode::phases: {
        std::mt19937_64 rng(child_seed(scn.seed, kPhaseStream, k));
        rec.feature = sense(ctx, analytic_phases(ctx, rec.truth, snr, rng), t, omega, h, scn.noise.bin_sigma_hz);
        break;
      }
      case PipelineMode::iq:
        rec.feature =
            sense(ctx, (*iq)(rec.truth, t, k, snr_db, imu, vel, a_prev), t, omega, h, iq_bin_sigma(ctx, snr));
        break;
    }
    rec.signal = rec.feature.has_range || rec.feature.has_angle;
    if (rec.feature.has_angle) a_prev = rec.feature.a;

    Preintegrated pre;
    if (k > 0) {
      const std::span<const ImuSample> seg(imu.data() + prev_idx, idx - prev_idx + 1);
      pre = preintegrate(seg, res.epochs.back().t, t, cfg.solver.imu, cfg.solver.substeps);
    }
    const auto t0 = std::chrono::steady_clock::now();
    est.add_epoch(rec.feature, pre, imu[idx].acc);
    rec.solve_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    if (est.initialized()) {
      NavState s = *est.latest();
      s.p = s.p - *est.anchor() + ctx.arr.position;
      rec.estimate = s;
      rec.anchor = est.anchor();
      rec.iterations = est.last_report().iterations;
      rec.converged = est.last_report().converged;
      vel.publish(t, s.v);
    }
    prev_idx = idx;
    res.epochs.push_back(rec);

    if (rec.signal) {
      last_signal_t = t;
    } else if (t - last_signal_t > cfg.max_gap_s) {
      res.exit_code = 3;
      std::ostringstream msg;
      msg << "signal lost: no features for " << (t - last_signal_t) << " s at t=" << t;
      res.message = msg.str();
      break;
    }
  }

  res.metrics = compute_metrics(res.epochs, static_cast<std::size_t>(cfg.solver.window), imu, ctx.arr.position,
                                cfg.solver.imu);
  res.metrics.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return res;
}

// ---- metrics ----

ErrorStats ErrorStats::of(std::vector<double> v) {
  ErrorStats s;
  s.count = v.size();
  if (v.empty()) return s;
  std::sort(v.begin(), v.end());
  double sum = 0.0, sq = 0.0;
  for (double x : v) {
    sum += x;
    sq += x * x;
  }
  s.mean = sum / static_cast<double>(v.size());
  s.rmse = std::sqrt(sq / static_cast<double>(v.size()));
  const auto pct = [&](double p) { return v[static_cast<std::size_t>(std::floor(p * static_cast<double>(v.size() - 1)))]; };
  s.p50 = pct(0.5);
  s.p90 = pct(0.9);
  s.max = v.back();
  return s;
}

MetricsReport compute_metrics(const std::vector<EpochRecord>& epochs, std::size_t warmup,
                              const std::vector<ImuSample>& imu, const Vec3& controller, const ImuNoise& noise) {
  MetricsReport m;
  m.epochs = epochs.size();
  std::vector<double> pos, ori, raw, ranges, angles, yaws;
  std::vector<double> yt, ye;
  Vec3 axis_sq = Vec3::Zero();
  double ms = 0.0;
  std::size_t solves = 0, lost = 0;
  for (std::size_t i = 0; i < epochs.size(); ++i) {
    const auto& e = epochs[i];
    const Vec3 u = e.truth.p - controller;
    if (!e.signal) ++lost;
    if (e.feature.has_range) ranges.push_back(std::abs(e.feature.d - u.norm()));
    if (e.feature.has_angle) angles.push_back(rad2deg(std::acos(std::clamp(e.feature.a.dot(u.normalized()), -1.0, 1.0))));
    if (e.feature.psi) yaws.push_back(rad2deg(std::abs(wrap_angle(*e.feature.psi - so3::yaw_of(e.truth.q)))));
    if (e.estimate) {
      ms += e.solve_ms;
      ++solves;
      m.max_iterations = std::max(m.max_iterations, e.iterations);
      m.all_converged = m.all_converged && e.converged;
    }
    if (i < warmup || !e.estimate) continue;
    const Vec3 d = e.estimate->p - e.truth.p;
    pos.push_back(d.norm());
    axis_sq += d.cwiseAbs2();
    ori.push_back(rad2deg(so3::angle_between(e.estimate->q, e.truth.q)));
    yt.push_back(e.t);
    ye.push_back(rad2deg(wrap_angle(so3::yaw_of(e.estimate->q) - so3::yaw_of(e.truth.q))));
    if (e.feature.has_range && e.feature.has_angle)
      raw.push_back((controller + e.feature.a * e.feature.d - e.truth.p).norm());
    m.fused_final_m = d.norm();
  }
  m.scored_epochs = pos.size();
  const auto p = ErrorStats::of(pos);
  m.position_rmse_m = p.rmse;
  m.position_mean_m = p.mean;
  if (!pos.empty()) m.axis_rmse_m = (axis_sq / static_cast<double>(pos.size())).cwiseSqrt();
  const auto o = ErrorStats::of(ori);
  m.orientation_mean_deg = o.mean;
  for (double y : ye) m.yaw_max_deg = std::max(m.yaw_max_deg, std::abs(y));
  if (yt.size() >= 2) {
    const double tm = std::accumulate(yt.begin(), yt.end(), 0.0) / static_cast<double>(yt.size());
    const double em = std::accumulate(ye.begin(), ye.end(), 0.0) / static_cast<double>(ye.size());
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < yt.size(); ++i) {
      num += (yt[i] - tm) * (ye[i] - em);
      den += (yt[i] - tm) * (yt[i] - tm);
    }
    m.yaw_drift_deg_per_s = den > 0.0 ? num / den : 0.0;
  }
  m.raw_position_rmse_m = ErrorStats::of(raw).rmse;
  m.range_error_m = ErrorStats::of(ranges);
  m.angle_error_deg = ErrorStats::of(angles);
  m.yaw_feature_error_deg = ErrorStats::of(yaws);
  m.no_signal_rate = epochs.empty() ? 0.0 : static_cast<double>(lost) / static_cast<double>(epochs.size());
  m.solve_ms_mean = solves ? ms / static_cast<double>(solves) : 0.0;

  if (!imu.empty() && epochs.size() >= 2) {
    const auto& first = epochs.front().truth;
    NavState dr{first.t, first.p, first.v, first.q};
    for (std::size_t i = 1; i < epochs.size(); ++i)
      dr = propagate(dr, preintegrate(imu, epochs[i - 1].t, epochs[i].t, noise, 1));
    m.dead_reckoning_final_m = (dr.p - epochs.back().truth.p).norm();
  }
  return m;
}

nlohmann::json MetricsReport::to_json() const {
  const auto stats = [](const ErrorStats& s) {
    return nlohmann::json{{"count", s.count}, {"mean", s.mean}, {"rmse", s.rmse},
                          {"p50", s.p50},     {"p90", s.p90},   {"max", s.max}};
  };
  return {{"epochs", epochs},
          {"scored_epochs", scored_epochs},
          {"position_rmse_m", position_rmse_m},
          {"position_mean_m", position_mean_m},
          {"axis_rmse_m", {axis_rmse_m.x(), axis_rmse_m.y(), axis_rmse_m.z()}},
          {"orientation_mean_deg", orientation_mean_deg},
          {"yaw_max_deg", yaw_max_deg},
          {"yaw_drift_deg_per_s", yaw_drift_deg_per_s},
          {"raw_position_rmse_m", raw_position_rmse_m},
          {"dead_reckoning_final_m", dead_reckoning_final_m},
          {"fused_final_m", fused_final_m},
          {"range_error_m", stats(range_error_m)},
          {"angle_error_deg", stats(angle_error_deg)},
          {"yaw_feature_error_deg", stats(yaw_feature_error_deg)},
          {"no_signal_rate", no_signal_rate},
          {"max_iterations", max_iterations},
          {"all_converged", all_converged},
          {"solve_ms_mean", solve_ms_mean},
          {"runtime_s", runtime_s}};
}

// ---- artifacts ----

namespace {

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return buf;
}

void put_state(std::ostream& os, double t, const Vec3& p, const Vec3& v, const Quat& q) {
  os << fmt(t) << ',' << fmt(p.x()) << ',' << fmt(p.y()) << ',' << fmt(p.z()) << ',' << fmt(v.x()) << ','
     << fmt(v.y()) << ',' << fmt(v.z()) << ',' << fmt(q.w()) << ',' << fmt(q.x()) << ',' << fmt(q.y()) << ','
     << fmt(q.z());
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream os(p);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  return os;
}

}  // namespace

void write_artifacts(const std::filesystem::path& dir, const RunConfig& cfg, const RunResult& res) {
  std::filesystem::create_directories(dir);
  open_out(dir / "config.json") << cfg.to_json().dump(2) << "\n";

  auto gt = open_out(dir / "ground_truth.csv");
  gt << "t,px,py,pz,vx,vy,vz,qw,qx,qy,qz,wx,wy,wz\n";
  for (const auto& e : res.epochs) {
    put_state(gt, e.t, e.truth.p, e.truth.v, e.truth.q);
    gt << ',' << fmt(e.truth.omega.x()) << ',' << fmt(e.truth.omega.y()) << ',' << fmt(e.truth.omega.z()) << '\n';
  }

  auto ft = open_out(dir / "features.csv");
  ft << "t,signal,has_range,has_angle,has_psi,d_m,ax,ay,az,psi_rad,sigma_d_m,sigma_a_rad,sigma_psi_rad,"
        "elevation_clamped,angle_degraded\n";
  for (const auto& e : res.epochs) {
    const auto& f = e.feature;
    ft << fmt(e.t) << ',' << e.signal << ',' << f.has_range << ',' << f.has_angle << ',' << f.psi.has_value() << ','
       << fmt(f.d) << ',' << fmt(f.a.x()) << ',' << fmt(f.a.y()) << ',' << fmt(f.a.z()) << ','
       << (f.psi ? fmt(*f.psi) : "") << ',' << fmt(f.sigma_d) << ',' << fmt(f.sigma_a) << ',' << fmt(f.sigma_psi)
       << ',' << f.elevation_clamped << ',' << f.angle_degraded << '\n';
  }

  auto es = open_out(dir / "estimate.csv");
  es << "t,px,py,pz,vx,vy,vz,qw,qx,qy,qz,rho_x,rho_y,rho_z,iterations,converged\n";
  for (const auto& e : res.epochs) {
    if (!e.estimate) continue;
    put_state(es, e.t, e.estimate->p, e.estimate->v, e.estimate->q);
    es << ',' << fmt(e.anchor->x()) << ',' << fmt(e.anchor->y()) << ',' << fmt(e.anchor->z()) << ','
       << e.iterations << ',' << e.converged << '\n';
  }

  auto mj = res.metrics.to_json();
  mj["exit_code"] = res.exit_code;
  mj["message"] = res.message;
  open_out(dir / "metrics.json") << mj.dump(2) << "\n";
}

namespace {

std::vector<std::map<std::string, double>> read_csv(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(p.string() + ": empty file");
  std::vector<std::string> cols;
  {
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
  }
  std::vector<std::map<std::string, double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::map<std::string, double> row;
    for (const auto& c : cols) {
      if (!std::getline(ss, cell, ',')) break;
      if (!cell.empty()) row[c] = std::stod(cell);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

RigidState state_from_row(const std::map<std::string, double>& r, const std::filesystem::path& p) {
  for (const char* k : {"t", "px", "py", "pz", "qw", "qx", "qy", "qz"})
    if (!r.count(k)) throw std::runtime_error(p.string() + ": missing column " + k);
  RigidState s;
  s.t = r.at("t");
  s.p = Vec3(r.at("px"), r.at("py"), r.at("pz"));
  if (r.count("vx")) s.v = Vec3(r.at("vx"), r.at("vy"), r.at("vz"));
  s.q = Quat(r.at("qw"), r.at("qx"), r.at("qy"), r.at("qz")).normalized();
  return s;
}

}  // namespace

MetricsReport metrics_from_csv(const std::filesystem::path& truth, const std::filesystem::path& estimate,
                               std::size_t warmup) {
  const auto gt = read_csv(truth);
  const auto es = read_csv(estimate);
  std::map<long long, RigidState> est;
  const auto key = [](double t) { return std::llround(t * 1e6); };
  for (const auto& r : es) {
    const auto s = state_from_row(r, estimate);
    est[key(s.t)] = s;
  }
  std::vector<EpochRecord> epochs;
  for (const auto& r : gt) {
    EpochRecord e;
    e.truth = state_from_row(r, truth);
    e.t = e.truth.t;
    e.signal = true;
    e.feature.has_range = e.feature.has_angle = false;
    const auto it = est.find(key(e.t));
    if (it != est.end()) {
      e.estimate = NavState{it->second.t, it->second.p, it->second.v, it->second.q};
      e.converged = true;
    }
    epochs.push_back(e);
  }
  return compute_metrics(epochs, warmup, {}, Vec3::Zero(), ImuNoise{});
}

// ---- sweeps ----

RunConfig apply_sweep_value(const RunConfig& base, const std::string& param, double value) {
  RunConfig c = base;
  if (param == "speed") {
    c.scenario.speed_mps = value;
  } else if (param == "distance") {
    c.scenario.controller = c.scenario.center - Vec3(value, 0.0, c.scenario.center.z() - base.scenario.controller.z());
  } else if (param == "wall_db") {
    c.link.wall_db = value;
  } else if (param == "snr") {
    c.link.snr_at_1m_db = value;
  } else if (param == "window") {
    if (value != std::floor(value)) throw ConfigError("window sweep values must be integers");
    c.solver.window = static_cast<int>(value);
  } else {
    throw ConfigError("unknown sweep parameter '" + param + "' (speed, distance, wall_db, snr, window)");
  }
  c.validate();
  return c;
}

std::vector<SweepRow> run_sweep(const RunConfig& base, const std::string& param, const std::vector<double>& values,
                                const std::filesystem::path& out) {
  std::vector<RunConfig> cfgs;
  for (double v : values) cfgs.push_back(apply_sweep_value(base, param, v));
  std::filesystem::create_directories(out);
  std::vector<SweepRow> rows;
  for (std::size_t i = 0; i < cfgs.size(); ++i) {
    auto& c = cfgs[i];
    c.output_dir = out / (param + "_" + std::to_string(i));
    const auto res = run_pipeline(c);
    write_artifacts(c.output_dir, c, res);
    rows.push_back({values[i], res.exit_code, res.metrics});
  }
  auto os = open_out(out / ("sweep_" + param + ".csv"));
  os << "value,exit_code,position_rmse_m,raw_position_rmse_m,orientation_mean_deg,range_error_mean_m,"
        "angle_error_mean_deg,no_signal_rate\n";
  for (const auto& r : rows)
    os << fmt(r.value) << ',' << r.exit_code << ',' << fmt(r.metrics.position_rmse_m) << ','
       << fmt(r.metrics.raw_position_rmse_m) << ',' << fmt(r.metrics.orientation_mean_deg) << ','
       << fmt(r.metrics.range_error_m.mean) << ',' << fmt(r.metrics.angle_error_deg.mean) << ','
       << fmt(r.metrics.no_signal_rate) << '\n';
  return rows;
}

}  // namespace chirpnav
