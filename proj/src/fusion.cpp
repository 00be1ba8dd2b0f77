#include "chirpnav/fusion.hpp"

#include "chirpnav/so3.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>

namespace chirpnav {

namespace {

struct Interp {
  Vec3 acc;
  Vec3 gyro;
};

class ImuStream {
 public:
  explicit ImuStream(std::span<const ImuSample> s) : s_(s) {}

  Interp at(double t) {
    while (i_ + 1 < s_.size() && s_[i_ + 1].t <= t) ++i_;
    if (i_ + 1 >= s_.size()) return {s_[i_].acc, s_[i_].gyro};
    const auto& a = s_[i_];
    const auto& b = s_[i_ + 1];
    const double w = std::clamp((t - a.t) / (b.t - a.t), 0.0, 1.0);
    return {a.acc + w * (b.acc - a.acc), a.gyro + w * (b.gyro - a.gyro)};
  }

 private:
  std::span<const ImuSample> s_;
  std::size_t i_ = 0;
};

}  // namespace

Preintegrated preintegrate(std::span<const ImuSample> imu, double t0, double t1, const ImuNoise& noise, int substeps,
                           std::vector<Mat9>* cov_trace) {
  if (imu.empty()) throw ContractViolation("preintegrate: empty IMU stream");
  if (!(t1 > t0)) throw ContractViolation("preintegrate: t1 must exceed t0");
  if (substeps < 1) throw ContractViolation("preintegrate: substeps must be >= 1");
  for (std::size_t i = 1; i < imu.size(); ++i)
    if (!(imu[i].t > imu[i - 1].t)) throw ContractViolation("preintegrate: IMU timestamps not increasing");
  constexpr double eps = 1e-9;
  if (imu.front().t > t0 + eps || imu.back().t < t1 - eps)
    throw ContractViolation("preintegrate: IMU stream does not cover the interval");

  std::vector<double> knots{t0};
  for (const auto& s : imu)
    if (s.t > t0 + eps && s.t < t1 - eps) knots.push_back(s.t);
  knots.push_back(t1);

  Preintegrated out;
  out.dt = t1 - t0;
  ImuStream stream(imu);
  const double qa = noise.accel_density * noise.accel_density;
  const double qg = noise.gyro_density * noise.gyro_density;
  Interp cur = stream.at(t0);
  for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
    const double h = (knots[k + 1] - knots[k]) / substeps;
    for (int j = 0; j < substeps; ++j) {
      const double s1 = knots[k] + (j + 1) * h;
      const Interp nxt = stream.at(s1);
      // RK4 on (alpha, beta, gamma) with inputs linear across the substep.
      const Interp mid{0.5 * (cur.acc + nxt.acc), 0.5 * (cur.gyro + nxt.gyro)};
      const Mat3 r0 = out.gamma.toRotationMatrix();
      const auto qdot = [](const Quat& q, const Vec3& w) {
        const Quat d = q * Quat(0.0, w.x(), w.y(), w.z());
        return Eigen::Vector4d(0.5 * d.w(), 0.5 * d.x(), 0.5 * d.y(), 0.5 * d.z());
      };
      const auto add = [](const Quat& q, const Eigen::Vector4d& d, double s) {
        return Quat(q.w() + s * d(0), q.x() + s * d(1), q.y() + s * d(2), q.z() + s * d(3));
      };
      const auto accel = [](const Quat& q, const Vec3& a) { return Vec3(q.normalized() * a); };
      const Quat& q1 = out.gamma;
      const Eigen::Vector4d k1 = qdot(q1, cur.gyro);
      const Vec3 a1 = accel(q1, cur.acc);
      const Vec3 b1 = out.beta;
      const Quat q2 = add(q1, k1, 0.5 * h);
      const Eigen::Vector4d k2 = qdot(q2, mid.gyro);
      const Vec3 a2 = accel(q2, mid.acc);
      const Vec3 b2 = out.beta + 0.5 * h * a1;
      const Quat q3 = add(q1, k2, 0.5 * h);
      const Eigen::Vector4d k3 = qdot(q3, mid.gyro);
      const Vec3 a3 = accel(q3, mid.acc);
      const Vec3 b3 = out.beta + 0.5 * h * a2;
      const Quat q4 = add(q1, k3, h);
      const Eigen::Vector4d k4 = qdot(q4, nxt.gyro);
      const Vec3 a4 = accel(q4, nxt.acc);
      const Vec3 b4 = out.beta + h * a3;
      out.alpha += h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
      out.beta += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
      const Quat g1 = add(q1, k1 + 2.0 * k2 + 2.0 * k3 + k4, h / 6.0).normalized();
      const Quat step = q1.conjugate() * g1;

      const Mat3 ra = r0 * so3::skew(0.5 * (cur.acc + nxt.acc));
      Mat9 f = Mat9::Identity();
      f.block<3, 3>(0, 3) = Mat3::Identity() * h;
      f.block<3, 3>(0, 6) = -0.5 * ra * h * h;
      f.block<3, 3>(3, 6) = -ra * h;
      f.block<3, 3>(6, 6) = step.toRotationMatrix().transpose();
      Eigen::Matrix<double, 9, 6> g = Eigen::Matrix<double, 9, 6>::Zero();
      g.block<3, 3>(0, 0) = 0.5 * r0 * h * h;
      g.block<3, 3>(3, 0) = r0 * h;
      g.block<3, 3>(6, 3) = Mat3::Identity() * h;
      Eigen::Matrix<double, 6, 6> q = Eigen::Matrix<double, 6, 6>::Zero();
      q.diagonal() << qa / h, qa / h, qa / h, qg / h, qg / h, qg / h;
      out.cov = f * out.cov * f.transpose() + g * q * g.transpose();
      out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
      if (cov_trace) cov_trace->push_back(out.cov);

      out.gamma = g1;
      cur = nxt;
    }
  }
  return out;
}

NavState propagate(const NavState& s, const Preintegrated& pre) {
  const double dt = pre.dt;
  const Mat3 r = s.q.toRotationMatrix();
  NavState n;
  n.t = s.t + dt;
  n.p = s.p + s.v * dt - 0.5 * gravity_world() * dt * dt + r * pre.alpha;
  n.v = s.v - gravity_world() * dt + r * pre.beta;
  n.q = (s.q * pre.gamma).normalized();
  return n;
}

// ---- residual blocks ----

Quat measured_attitude(double psi, const Quat& reference) {
  const Vec3 e = so3::to_euler(reference);
  return so3::from_euler(e.x(), e.y(), psi);
}

Vec7 backscatter_residual(const NavState& s, const Vec3& rho, const PoseFeature& z, const Quat& q_meas,
                          BackscatterJacobian* jac) {
  const Vec3 u = s.p - rho;
  const double e = z.d * z.d - u.squaredNorm();
  const double sd = e < 0.0 ? -1.0 : 1.0;
  const Quat err = q_meas.conjugate() * s.q;
  const double sq = err.w() < 0.0 ? -1.0 : 1.0;

  Vec7 r;
  r(0) = std::abs(e);
  r.segment<3>(1) = z.a.cross(u);
  r.segment<3>(4) = 2.0 * sq * err.vec();
  if (jac) {
    jac->state.setZero();
    jac->rho.setZero();
    jac->state.block<1, 3>(0, 0) = -2.0 * sd * u.transpose();
    jac->rho.block<1, 3>(0, 0) = 2.0 * sd * u.transpose();
    jac->state.block<3, 3>(1, 0) = so3::skew(z.a);
    jac->rho.block<3, 3>(1, 0) = -so3::skew(z.a);
    jac->state.block<3, 3>(4, 6) = sq * so3::left(err).bottomRightCorner<3, 3>();
  }
  return r;
}

Eigen::Matrix<double, 7, 7> backscatter_information(const PoseFeature& z) {
  Eigen::Matrix<double, 7, 7> w = Eigen::Matrix<double, 7, 7>::Zero();
  const double d = std::max(z.d, 1e-3);
  if (z.has_range && z.sigma_d > 0.0) w(0, 0) = 1.0 / std::pow(2.0 * d * z.sigma_d, 2);
  if (z.has_range && z.has_angle && z.sigma_a > 0.0)
    for (int i = 1; i < 4; ++i) w(i, i) = 1.0 / std::pow(d * z.sigma_a, 2);
  // Roll and pitch rows stay at zero: gravity in the IMU factors pins them.
  if (z.psi && z.sigma_psi > 0.0) w(6, 6) = 1.0 / (z.sigma_psi * z.sigma_psi);
  return w;
}

Vec9 imu_residual(const NavState& a, const NavState& b, const Preintegrated& pre, ImuJacobian* jac) {
  const double dt = pre.dt;
  const Mat3 rt = a.q.toRotationMatrix().transpose();
  const Vec3 g = gravity_world();
  const Vec3 dp = b.p - a.p + 0.5 * g * dt * dt - a.v * dt;
  const Vec3 dv = b.v - a.v + g * dt;
  const Quat rel = a.q.conjugate() * b.q;
  const Quat err = rel * pre.gamma.conjugate();
  const double sq = err.w() < 0.0 ? -1.0 : 1.0;

  Vec9 r;
  r.segment<3>(0) = rt * dp - pre.alpha;
  r.segment<3>(3) = rt * dv - pre.beta;
  r.segment<3>(6) = 2.0 * sq * err.vec();
  if (jac) {
    jac->from.setZero();
    jac->to.setZero();
    jac->from.block<3, 3>(0, 0) = -rt;
    jac->from.block<3, 3>(0, 3) = -rt * dt;
    jac->from.block<3, 3>(0, 6) = so3::skew(rt * dp);
    jac->from.block<3, 3>(3, 3) = -rt;
    jac->from.block<3, 3>(3, 6) = so3::skew(rt * dv);
    jac->from.block<3, 3>(6, 6) = -sq * so3::right(err).bottomRightCorner<3, 3>();
    jac->to.block<3, 3>(0, 0) = rt;
    jac->to.block<3, 3>(3, 3) = rt;
    jac->to.block<3, 3>(6, 6) =
        sq * (so3::left(rel) * so3::right(pre.gamma.conjugate())).bottomRightCorner<3, 3>();
  }
  return r;
}

// ---- window ----

namespace {

Mat9 information(const Mat9& cov) {
  const Mat9 c = cov + 1e-18 * Mat9::Identity();
  return c.ldlt().solve(Mat9::Identity());
}

struct Problem {
  Eigen::MatrixXd h;
  Eigen::VectorXd b;
  double cost = 0.0;
};

// World-z component of the first state's attitude error against `ref`.
double yaw_prior_residual(const Quat& q, const Quat& ref, Eigen::RowVector3d* jac = nullptr) {
  const Quat err = q * ref.conjugate();
  const double sq = err.w() < 0.0 ? -1.0 : 1.0;
  if (jac)
    *jac = sq * (so3::right(err).bottomRightCorner<3, 3>() * q.toRotationMatrix()).row(2);
  return 2.0 * sq * err.z();
}

double cost_of(const Window& w, const std::vector<Mat9>& imu_info, const EstimatorConfig& cfg,
               const std::optional<Quat>& yaw_ref) {
  double cost = 0.0;
  if (yaw_ref) {
    const double r = yaw_prior_residual(w.epochs.front().state.q, *yaw_ref) / cfg.yaw_prior_sigma_rad;
    cost += r * r;
  }
  for (std::size_t i = 0; i < w.epochs.size(); ++i) {
    const auto& ep = w.epochs[i];
    const Vec7 r = backscatter_residual(ep.state, w.rho, ep.feature, ep.q_meas.value_or(ep.state.q));
    cost += r.dot(backscatter_information(ep.feature) * r);
  }
  for (std::size_t i = 0; i + 1 < w.epochs.size(); ++i) {
    const Vec9 r = imu_residual(w.epochs[i].state, w.epochs[i + 1].state, w.factors[i]);
    cost += r.dot(imu_info[i] * r);
  }
  return cost;
}

Problem linearize(const Window& w, const std::vector<Mat9>& imu_info, const EstimatorConfig& cfg,
                  const std::optional<Quat>& yaw_ref) {
  const auto n = static_cast<Eigen::Index>(w.epochs.size());
  const Eigen::Index dim = 9 * n + 3;
  Problem pb;
  pb.h = Eigen::MatrixXd::Zero(dim, dim);
  pb.b = Eigen::VectorXd::Zero(dim);
  if (yaw_ref) {
    Eigen::RowVector3d j;
    const double r = yaw_prior_residual(w.epochs.front().state.q, *yaw_ref, &j);
    const double info = 1.0 / (cfg.yaw_prior_sigma_rad * cfg.yaw_prior_sigma_rad);
    pb.h.block<3, 3>(6, 6) += info * j.transpose() * j;
    pb.b.segment<3>(6) += info * r * j.transpose();
    pb.cost += info * r * r;
  }
  const Eigen::Index ro = 9 * n;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& ep = w.epochs[static_cast<std::size_t>(i)];
    BackscatterJacobian j;
    const Vec7 r = backscatter_residual(ep.state, w.rho, ep.feature, ep.q_meas.value_or(ep.state.q), &j);
    const auto info = backscatter_information(ep.feature);
    const Eigen::Matrix<double, 9, 7> jsw = j.state.transpose() * info;
    const Eigen::Matrix<double, 3, 7> jrw = j.rho.transpose() * info;
    pb.h.block<9, 9>(9 * i, 9 * i) += jsw * j.state;
    pb.h.block<9, 3>(9 * i, ro) += jsw * j.rho;
    pb.h.block<3, 9>(ro, 9 * i) += jrw * j.state;
    pb.h.block<3, 3>(ro, ro) += jrw * j.rho;
    pb.b.segment<9>(9 * i) += jsw * r;
    pb.b.segment<3>(ro) += jrw * r;
    pb.cost += r.dot(info * r);
  }
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    ImuJacobian j;
    const Vec9 r = imu_residual(w.epochs[k].state, w.epochs[k + 1].state, w.factors[k], &j);
    const Mat9& info = imu_info[k];
    const Mat9 aw = j.from.transpose() * info;
    const Mat9 bw = j.to.transpose() * info;
    pb.h.block<9, 9>(9 * i, 9 * i) += aw * j.from;
    pb.h.block<9, 9>(9 * i, 9 * i + 9) += aw * j.to;
    pb.h.block<9, 9>(9 * i + 9, 9 * i) += bw * j.from;
    pb.h.block<9, 9>(9 * i + 9, 9 * i + 9) += bw * j.to;
    pb.b.segment<9>(9 * i) += aw * r;
    pb.b.segment<9>(9 * i + 9) += bw * r;
    pb.cost += r.dot(info * r);
  }
  return pb;
}

// Maps reduced coordinates to full ones with the first state's position held
// (it shifts together with rho).
Eigen::SparseMatrix<double> gauge_basis(const Window& w) {
  const auto dim = static_cast<Eigen::Index>(9 * w.epochs.size() + 3);
  std::vector<Eigen::Triplet<double>> trip;
  Eigen::Index col = 0;
  for (Eigen::Index i = 3; i < dim; ++i) trip.emplace_back(i, col++, 1.0);
  Eigen::SparseMatrix<double> t(dim, col);
  t.setFromTriplets(trip.begin(), trip.end());
  return t;
}

void retract(Window& w, const Eigen::VectorXd& dx) {
  for (std::size_t i = 0; i < w.epochs.size(); ++i) {
    auto& s = w.epochs[i].state;
    const auto o = static_cast<Eigen::Index>(9 * i);
    s.p += dx.segment<3>(o);
    s.v += dx.segment<3>(o + 3);
    s.q = (s.q * so3::exp(dx.segment<3>(o + 6))).normalized();
  }
  w.rho += dx.tail<3>();
}

std::vector<Mat9> factor_information(const Window& w) {
  std::vector<Mat9> out;
  for (const auto& f : w.factors) out.push_back(information(f.cov));
  return out;
}

void check_window(const Window& w) {
  if (w.epochs.empty()) throw ContractViolation("window is empty");
  if (w.factors.size() + 1 != w.epochs.size()) throw ContractViolation("window needs one factor per epoch gap");
}

}  // namespace

double window_cost(const Window& w, const EstimatorConfig& cfg) {
  check_window(w);
  return cost_of(w, factor_information(w), cfg, std::nullopt);
}

SolveReport solve(Window& w, const EstimatorConfig& cfg) {
  check_window(w);
  const auto info = factor_information(w);
  std::optional<Quat> yaw_ref;
  if (std::none_of(w.epochs.begin(), w.epochs.end(), [](const Epoch& e) { return e.q_meas.has_value(); }))
    yaw_ref = w.epochs.front().state.q;
  SolveReport rep;
  double cost = cost_of(w, info, cfg, yaw_ref);
  rep.initial_cost = cost;
  rep.cost_history.push_back(cost);
  for (int it = 0; it < cfg.max_iterations; ++it) {
    const Problem pb = linearize(w, info, cfg, yaw_ref);
    Eigen::VectorXd dx;
    if (cfg.gauge_fix) {
      const auto t = gauge_basis(w);
      const Eigen::MatrixXd ht = pb.h * t;
      Eigen::MatrixXd hr = t.transpose() * ht;
      hr.diagonal().array() += 1e-9;
      const Eigen::VectorXd br = t.transpose() * pb.b;
      dx = t * Eigen::VectorXd(hr.ldlt().solve(-br));
    } else {
      Eigen::MatrixXd h = pb.h;
      h.diagonal().array() += 1e-9;
      dx = h.ldlt().solve(-pb.b);
    }
    if (!dx.allFinite()) break;

    double scale = 1.0;
    bool accepted = false;
    Window trial = w;
    for (int halving = 0; halving < 12; ++halving) {
      trial = w;
      retract(trial, scale * dx);
      const double c = cost_of(trial, info, cfg, yaw_ref);
      if (c <= cost) {
        w = std::move(trial);
        cost = c;
        accepted = true;
        break;
      }
      scale *= 0.5;
    }
    rep.iterations = it + 1;
    if (!accepted) {
      rep.converged = true;
      break;
    }
    rep.cost_history.push_back(cost);
    if ((scale * dx).cwiseAbs().maxCoeff() < cfg.step_tolerance) {
      rep.converged = true;
      break;
    }
  }
  rep.final_cost = cost;
  return rep;
}

std::optional<Window> initialize(const std::vector<PoseFeature>& features, const std::vector<Preintegrated>& factors,
                                 const std::vector<Vec3>& specific_force, const EstimatorConfig& cfg) {
  const std::size_t n = features.size();
  if (factors.size() + 1 != n || specific_force.size() != n)
    throw ContractViolation("initialize: need one factor per gap and one force per epoch");
  std::vector<std::size_t> fixes;
  std::optional<std::size_t> yaw_idx;
  for (std::size_t i = 0; i < n; ++i) {
    if (features[i].has_range && features[i].has_angle) fixes.push_back(i);
    if (!yaw_idx && features[i].psi) yaw_idx = i;
  }
  if (fixes.size() < 3) return std::nullopt;
  if (!yaw_idx && n < static_cast<std::size_t>(cfg.window)) return std::nullopt;

  Window w;
  w.epochs.resize(n);
  w.factors.assign(factors.begin(), factors.end());
  const auto pos_of = [&](std::size_t i) { return Vec3(features[i].a * features[i].d); };
  w.rho = -pos_of(fixes.front());
  for (std::size_t i = 0; i < n; ++i) {
    auto& ep = w.epochs[i];
    ep.feature = features[i];
    ep.specific_force = specific_force[i];
    ep.state.t = features[i].t;
    const auto next = std::lower_bound(fixes.begin(), fixes.end(), i);
    if (next == fixes.end()) {
      ep.state.p = w.rho + pos_of(fixes.back());
    } else if (*next == i || next == fixes.begin()) {
      ep.state.p = w.rho + pos_of(*next);
    } else {
      const std::size_t lo = *(next - 1), hi = *next;
      const double u = (features[i].t - features[lo].t) / (features[hi].t - features[lo].t);
      ep.state.p = w.rho + (1.0 - u) * pos_of(lo) + u * pos_of(hi);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i == 0 ? 0 : i - 1, hi = i + 1 == n ? n - 1 : i + 1;
    const double dt = features[hi].t - features[lo].t;
    w.epochs[i].state.v = dt > 0.0 ? Vec3((w.epochs[hi].state.p - w.epochs[lo].state.p) / dt) : Vec3::Zero();
  }

  const std::size_t j = yaw_idx.value_or(0);
  const Vec3& f = specific_force[j];
  const double roll = std::atan2(f.y(), f.z());
  const double pitch = std::atan2(-f.x(), std::hypot(f.y(), f.z()));
  w.epochs[j].state.q = so3::from_euler(roll, pitch, features[j].psi.value_or(0.0));
  for (std::size_t i = j + 1; i < n; ++i)
    w.epochs[i].state.q = (w.epochs[i - 1].state.q * factors[i - 1].gamma).normalized();
  for (std::size_t i = j; i-- > 0;)
    w.epochs[i].state.q = (w.epochs[i + 1].state.q * factors[i].gamma.conjugate()).normalized();
  for (auto& ep : w.epochs)
    if (ep.feature.psi) ep.q_meas = measured_attitude(*ep.feature.psi, ep.state.q);
  if (yaw_idx) return w;

  // No yaw measurement: try yaw hypotheses and keep the one the window fits
  // best. A degenerate (unaccelerated) window keeps the first.
  constexpr int kYawHypotheses = 12;
  std::optional<Window> best;
  double best_cost = 0.0;
  for (int c = 0; c < kYawHypotheses; ++c) {
    Window trial = w;
    const Quat rz = so3::from_yaw(kTwoPi * c / kYawHypotheses);
    for (auto& ep : trial.epochs) ep.state.q = (rz * ep.state.q).normalized();
    const double cost = solve(trial, cfg).final_cost;
    if (!best || cost < best_cost * (1.0 - 1e-6)) {
      best = std::move(trial);
      best_cost = cost;
    }
  }
  return best;
}

void slide(Window& w, const PoseFeature& z, const Preintegrated& pre, const EstimatorConfig& cfg,
           const Vec3& specific_force) {
  check_window(w);
  Epoch ep;
  ep.state = propagate(w.epochs.back().state, pre);
  ep.state.t = z.t;
  ep.feature = z;
  ep.specific_force = specific_force;
  if (z.psi) ep.q_meas = measured_attitude(*z.psi, ep.state.q);
  w.epochs.push_back(ep);
  w.factors.push_back(pre);
  while (w.epochs.size() > static_cast<std::size_t>(std::max(cfg.window, 2))) {
    w.epochs.pop_front();
    w.factors.pop_front();
  }
}

void Estimator::add_epoch(const PoseFeature& z, const Preintegrated& pre, const Vec3& specific_force) {
  if (window_) {
    slide(*window_, z, pre, cfg_, specific_force);
    report_ = solve(*window_, cfg_);
    return;
  }
  if (!pending_.empty()) pending_factors_.push_back(pre);
  pending_.push_back(z);
  pending_force_.push_back(specific_force);
  while (pending_.size() > static_cast<std::size_t>(cfg_.window)) {
    pending_.erase(pending_.begin());
    pending_factors_.erase(pending_factors_.begin());
    pending_force_.erase(pending_force_.begin());
  }
  window_ = initialize(pending_, pending_factors_, pending_force_, cfg_);
  if (window_) {
    pending_.clear();
    pending_factors_.clear();
    pending_force_.clear();
    report_ = solve(*window_, cfg_);
  }
}

std::optional<NavState> Estimator::latest() const {
  if (!window_) return std::nullopt;
  return window_->epochs.back().state;
}

std::optional<Vec3> Estimator::anchor() const {
  if (!window_) return std::nullopt;
  return window_->rho;
}

}  // namespace chirpnav
