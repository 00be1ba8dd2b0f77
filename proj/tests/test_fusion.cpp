#include <gtest/gtest.h>

#include <chirpnav/fusion.hpp>
#include <chirpnav/so3.hpp>

#include "oracles.hpp"

#include <Eigen/Eigenvalues>

#include <random>

using namespace chirpnav;

namespace {

Scenario circle() {
  Scenario s;
  s.kind = TrajectoryKind::circle;
  s.duration_s = 12.0;
  s.hover_s = 0.0;
  s.ramp_s = 1.0;
  s.speed_mps = 2.0;
  s.radius_m = 4.0;
  return s;
}

PoseFeature exact_feature(const Scenario& scn, double t) {
  const auto s = sample_state(scn, t);
  const Vec3 u = s.p - scn.controller;
  PoseFeature z;
  z.t = t;
  z.d = u.norm();
  z.a = u / z.d;
  z.psi = so3::yaw_of(s.q);
  z.sigma_d = 0.3;
  z.sigma_a = deg2rad(2.0);
  z.sigma_psi = deg2rad(3.0);
  return z;
}

NavState truth(const Scenario& scn, double t) {
  const auto s = sample_state(scn, t);
  return {t, s.p, s.v, s.q};
}

// Window over epochs t0, t0 + dt, ... holding the true states, anchored at the controller.
Window truth_window(const Scenario& scn, const std::vector<ImuSample>& imu, double t0, int n, double dt = 0.1) {
  Window w;
  w.rho = scn.controller;
  for (int i = 0; i < n; ++i) {
    const double t = t0 + i * dt;
    Epoch ep;
    ep.state = truth(scn, t);
    ep.feature = exact_feature(scn, t);
    ep.q_meas = measured_attitude(*ep.feature.psi, ep.state.q);
    w.epochs.push_back(ep);
    if (i > 0) w.factors.push_back(preintegrate(imu, t - dt, t, ImuNoise{}));
  }
  return w;
}

std::vector<ImuSample> random_imu(std::uint64_t seed, double duration) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const Vec3 a0(u(rng), u(rng), 9.81 + u(rng)), a1(u(rng), u(rng), u(rng));
  const Vec3 w0(u(rng), u(rng), u(rng)), w1(u(rng), u(rng), u(rng));
  std::vector<ImuSample> out;
  for (int i = 0; i <= static_cast<int>(duration * 100.0); ++i) {
    const double t = i * 0.01;
    out.push_back({t, a0 + a1 * std::sin(2.0 * t), w0 + 0.5 * w1 * std::cos(3.0 * t)});
  }
  return out;
}

NavState random_state(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  NavState s;
  s.p = Vec3(n(rng), n(rng), n(rng)) * 3.0;
  s.v = Vec3(n(rng), n(rng), n(rng));
  s.q = so3::exp(Vec3(n(rng), n(rng), n(rng)));
  return s;
}

NavState perturbed(const NavState& s, int k, double h) {
  NavState o = s;
  if (k < 3) o.p(k) += h;
  else if (k < 6) o.v(k - 3) += h;
  else o.q = s.q * so3::exp(Vec3::Unit(k - 6) * h);
  return o;
}

double rel_err(const Vec3& a, const Vec3& b) { return (a - b).norm() / std::max(b.norm(), 1e-3); }

}  // namespace

TEST(Preintegration, MatchesRk4Oracle) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto imu = random_imu(seed, 1.0);
    for (auto [t0, t1] : {std::pair{0.0, 0.1}, std::pair{0.235, 0.47}, std::pair{0.5, 1.0}}) {
      const auto pre = preintegrate(imu, t0, t1, ImuNoise{});
      const auto ref = oracle::rk4_preintegrate(imu, t0, t1);
      EXPECT_LT(rel_err(pre.alpha, ref.alpha), 1e-6) << seed << " " << t0;
      EXPECT_LT(rel_err(pre.beta, ref.beta), 1e-6) << seed << " " << t0;
      const double rot = so3::log(ref.gamma).norm();
      EXPECT_LT(so3::angle_between(pre.gamma, ref.gamma), 1e-6 * std::max(rot, 1e-3)) << seed << " " << t0;
      EXPECT_NEAR(pre.dt, t1 - t0, 1e-15);
    }
  }
}

TEST(Preintegration, CovarianceStaysPositiveSemidefinite) {
  const auto imu = random_imu(7, 1.0);
  std::vector<Mat9> trace;
  preintegrate(imu, 0.0, 1.0, ImuNoise{0.01, 1e-3}, 8, &trace);
  ASSERT_EQ(trace.size(), 800u);
  double prev = 0.0;
  for (const auto& c : trace) {
    EXPECT_LT((c - c.transpose()).cwiseAbs().maxCoeff(), 1e-18);
    const Eigen::SelfAdjointEigenSolver<Mat9> es(c);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-15 * std::max(1.0, es.eigenvalues().maxCoeff()));
    EXPECT_GE(c.trace(), prev);
    prev = c.trace();
  }
}

TEST(Preintegration, ZeroNoiseGivesZeroCovariance) {
  const auto imu = random_imu(8, 0.5);
  const auto pre = preintegrate(imu, 0.0, 0.5, ImuNoise{0.0, 0.0});
  EXPECT_EQ(pre.cov.norm(), 0.0);
}

TEST(Preintegration, RejectsBadStreams) {
  const auto imu = random_imu(9, 0.5);
  EXPECT_THROW(preintegrate({}, 0.0, 0.1, ImuNoise{}), ContractViolation);
  EXPECT_THROW(preintegrate(imu, 0.2, 0.1, ImuNoise{}), ContractViolation);
  EXPECT_THROW(preintegrate(imu, 0.0, 0.6, ImuNoise{}), ContractViolation);
  auto shuffled = imu;
  std::swap(shuffled[3], shuffled[4]);
  EXPECT_THROW(preintegrate(shuffled, 0.0, 0.1, ImuNoise{}), ContractViolation);
}

TEST(Preintegration, PropagatesTrueCircleState) {
  const auto scn = circle();
  const auto imu = synth_imu(scn);
  for (double t0 : {0.0, 0.55, 3.3, 7.0}) {
    const auto pre = preintegrate(imu, t0, t0 + 0.1, ImuNoise{});
    const auto pred = propagate(truth(scn, t0), pre);
    const auto ref = truth(scn, t0 + 0.1);
    EXPECT_LT((pred.p - ref.p).norm(), 1e-5) << t0;
    EXPECT_LT((pred.v - ref.v).norm(), 1e-4) << t0;
    EXPECT_LT(so3::angle_between(pred.q, ref.q), 1e-5) << t0;
  }
}

TEST(Residuals, ImuJacobianMatchesFiniteDifference) {
  std::mt19937_64 rng(11);
  const auto imu = random_imu(12, 1.0);
  const auto pre = preintegrate(imu, 0.2, 0.3, ImuNoise{});
  for (int trial = 0; trial < 100; ++trial) {
    const NavState a = random_state(rng);
    NavState b = propagate(a, pre);
    const NavState noise = random_state(rng);
    b.p += 0.1 * noise.p;
    b.v += 0.1 * noise.v;
    b.q = b.q * so3::exp(0.1 * so3::log(noise.q));
    ImuJacobian j;
    imu_residual(a, b, pre, &j);
    const double h = 1e-6;
    for (int k = 0; k < 9; ++k) {
      const Vec9 da = (imu_residual(perturbed(a, k, h), b, pre) - imu_residual(perturbed(a, k, -h), b, pre)) / (2 * h);
      const Vec9 db = (imu_residual(a, perturbed(b, k, h), pre) - imu_residual(a, perturbed(b, k, -h), pre)) / (2 * h);
      EXPECT_LT((da - j.from.col(k)).cwiseAbs().maxCoeff(), 1e-5 * std::max(1.0, da.cwiseAbs().maxCoeff()));
      EXPECT_LT((db - j.to.col(k)).cwiseAbs().maxCoeff(), 1e-5 * std::max(1.0, db.cwiseAbs().maxCoeff()));
    }
  }
}

TEST(Residuals, BackscatterJacobianMatchesFiniteDifference) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const NavState s = random_state(rng);
    const Vec3 rho(n(rng), n(rng), n(rng));
    PoseFeature z;
    const Vec3 u = s.p - rho + 0.3 * Vec3(n(rng), n(rng), n(rng));
    z.d = u.norm() * (1.0 + 0.1 * n(rng));
    z.a = u.normalized();
    z.psi = n(rng);
    const Quat qm = measured_attitude(*z.psi, s.q * so3::exp(0.2 * Vec3(n(rng), n(rng), n(rng))));
    BackscatterJacobian j;
    backscatter_residual(s, rho, z, qm, &j);
    const double h = 1e-6;
    for (int k = 0; k < 9; ++k) {
      const Vec7 d = (backscatter_residual(perturbed(s, k, h), rho, z, qm) -
                      backscatter_residual(perturbed(s, k, -h), rho, z, qm)) / (2 * h);
      EXPECT_LT((d - j.state.col(k)).cwiseAbs().maxCoeff(), 1e-5 * std::max(1.0, d.cwiseAbs().maxCoeff()));
    }
    for (int k = 0; k < 3; ++k) {
      const Vec3 e = Vec3::Unit(k) * h;
      const Vec7 d = (backscatter_residual(s, rho + e, z, qm) - backscatter_residual(s, rho - e, z, qm)) / (2 * h);
      EXPECT_LT((d - j.rho.col(k)).cwiseAbs().maxCoeff(), 1e-5 * std::max(1.0, d.cwiseAbs().maxCoeff()));
    }
  }
}

TEST(Residuals, RangeRowIsAbsoluteSquaredRangeError) {
  NavState s;
  s.p = Vec3(3.0, 4.0, 0.0);
  PoseFeature z;
  z.d = 4.0;
  z.a = Vec3(0.6, 0.8, 0.0);
  EXPECT_NEAR(backscatter_residual(s, Vec3::Zero(), z, s.q)(0), 9.0, 1e-12);
  z.d = 6.0;
  EXPECT_NEAR(backscatter_residual(s, Vec3::Zero(), z, s.q)(0), 11.0, 1e-12);
}

TEST(Residuals, BackscatterInformationFollowsFeatureNoise) {
  PoseFeature z;
  z.d = 10.0;
  z.sigma_d = 0.5;
  z.sigma_a = 0.1;
  z.psi = 0.3;
  z.sigma_psi = 0.2;
  const auto w = backscatter_information(z);
  EXPECT_NEAR(w(0, 0), 1.0 / 100.0, 1e-15);
  EXPECT_NEAR(w(1, 1), 1.0, 1e-12);
  EXPECT_EQ(w(4, 4), 0.0);
  EXPECT_EQ(w(5, 5), 0.0);
  EXPECT_NEAR(w(6, 6), 25.0, 1e-12);
  z.psi.reset();
  z.has_range = false;
  EXPECT_EQ(backscatter_information(z).norm(), 0.0);
}

TEST(Window, TruthIsAZeroCostFixedPoint) {
  const auto scn = circle();
  const auto imu = synth_imu(scn);
  auto w = truth_window(scn, imu, 2.0, 30);
  EXPECT_LT(window_cost(w, EstimatorConfig{}), 1e-3);
  const auto rep = solve(w, EstimatorConfig{});
  EXPECT_TRUE(rep.converged);
  for (std::size_t i = 0; i < w.size(); ++i)
    EXPECT_LT((w.epochs[i].state.p - truth(scn, w.epochs[i].state.t).p).norm(), 1e-4);
}

TEST(Window, RecoversFromPerturbedStart) {
  const auto scn = circle();
  const auto imu = synth_imu(scn);
  std::mt19937_64 rng(31);
  std::normal_distribution<double> n(0.0, 1.0);
  auto w = truth_window(scn, imu, 2.0, 30);
  const auto ref = w;
  for (std::size_t i = 1; i < w.size(); ++i) {
    auto& s = w.epochs[i].state;
    s.p += 0.5 * Vec3(n(rng), n(rng), n(rng));
    s.v += 0.3 * Vec3(n(rng), n(rng), n(rng));
    s.q = s.q * so3::exp(deg2rad(5.0) * Vec3(n(rng), n(rng), n(rng)));
  }
  w.rho += Vec3(0.4, -0.3, 0.2);
  const auto rep = solve(w, EstimatorConfig{});
  for (std::size_t i = 1; i < rep.cost_history.size(); ++i) EXPECT_LE(rep.cost_history[i], rep.cost_history[i - 1]);
  EXPECT_LT(rep.final_cost, 1e-6);
  for (std::size_t i = 0; i < w.size(); ++i) {
    const auto& a = w.epochs[i].state;
    const auto& b = ref.epochs[i].state;
    EXPECT_LT(((a.p - w.rho) - (b.p - ref.rho)).norm(), 1e-4) << i;
    EXPECT_LT((a.v - b.v).norm(), 1e-4) << i;
    EXPECT_LT(so3::angle_between(a.q, b.q), 1e-5) << i;
  }
}

TEST(Window, CostIsInvariantToYawOfTheWholeProblem) {
  const auto scn = circle();
  const auto imu = synth_imu(scn);
  std::mt19937_64 rng(41);
  std::normal_distribution<double> n(0.0, 1.0);
  auto w = truth_window(scn, imu, 2.0, 20);
  for (auto& ep : w.epochs) {
    ep.feature.d += 0.2 * n(rng);
    ep.feature.a = (ep.feature.a + 0.02 * Vec3(n(rng), n(rng), n(rng))).normalized();
  }
  auto r = w;
  const Quat rz = so3::from_yaw(0.7);
  r.rho = rz * w.rho;
  for (auto& ep : r.epochs) {
    ep.state.p = rz * ep.state.p;
    ep.state.v = rz * ep.state.v;
    ep.state.q = rz * ep.state.q;
    ep.feature.a = rz * ep.feature.a;
    ep.q_meas = rz * *ep.q_meas;
  }
  const EstimatorConfig cfg;
  EXPECT_NEAR(window_cost(w, cfg), window_cost(r, cfg), 1e-9 * std::max(1.0, window_cost(w, cfg)));
  const auto a = solve(w, cfg);
  const auto b = solve(r, cfg);
  EXPECT_NEAR(a.final_cost, b.final_cost, 1e-9 * std::max(1.0, a.final_cost));
}

TEST(Window, GaugeHoldsFirstPosition) {
  const auto scn = circle();
  const auto imu = synth_imu(scn);
  auto w = truth_window(scn, imu, 2.0, 10);
  w.epochs[3].state.p += Vec3(1.0, 0.0, 0.0);
  const auto first = w.epochs.front().state;
  solve(w, EstimatorConfig{});
  EXPECT_LT((w.epochs.front().state.p - first.p).norm(), 1e-12);
}

TEST(Window, MeasuredYawCorrectsFirstState) {
  const auto scn = circle();
  const auto imu = synth_imu(scn);
  auto w = truth_window(scn, imu, 2.0, 10);
  const double truth_yaw = so3::yaw_of(w.epochs.front().state.q);
  for (auto& ep : w.epochs) ep.state.q = so3::from_yaw(0.2) * ep.state.q;
  solve(w, EstimatorConfig{});
  EXPECT_NEAR(so3::yaw_of(w.epochs.front().state.q), truth_yaw, 1e-6);
}

TEST(Window, HoverWithoutYawMeasurementsKeepsYaw) {
  Scenario scn;
  scn.kind = TrajectoryKind::stationary;
  scn.duration_s = 3.0;
  const auto imu = synth_imu(scn);
  auto w = truth_window(scn, imu, 0.5, 10);
  for (auto& ep : w.epochs) {
    ep.feature.psi.reset();
    ep.q_meas.reset();
    ep.state.q = so3::from_yaw(0.2) * ep.state.q;
  }
  const auto rep = solve(w, EstimatorConfig{});
  EXPECT_TRUE(rep.converged);
  for (const auto& ep : w.epochs) EXPECT_NEAR(so3::yaw_of(ep.state.q), 0.2, 1e-6);
}

TEST(Window, ImuOnlyWindowFollowsDeadReckoning) {
  const auto scn = circle();
  const auto imu = synth_imu(scn);
  auto w = truth_window(scn, imu, 2.0, 10);
  for (auto& ep : w.epochs) {
    ep.feature.has_range = ep.feature.has_angle = false;
    ep.feature.psi.reset();
    ep.q_meas.reset();
  }
  for (std::size_t i = 1; i < w.size(); ++i) w.epochs[i].state.p += Vec3(0.3, 0.1, -0.2);
  const auto rep = solve(w, EstimatorConfig{});
  EXPECT_LT(rep.final_cost, 1e-9);
  NavState dr = w.epochs.front().state;
  for (std::size_t i = 1; i < w.size(); ++i) {
    dr = propagate(dr, w.factors[i - 1]);
    EXPECT_LT((w.epochs[i].state.p - dr.p).norm(), 1e-6);
  }
}

TEST(Window, SlideKeepsSizeAndOverlapEstimates) {
  const auto scn = circle();
  const auto imu = synth_imu(scn);
  EstimatorConfig cfg;
  cfg.window = 15;
  auto w = truth_window(scn, imu, 2.0, 15);
  solve(w, cfg);
  const auto before = w;
  const double t = w.epochs.back().state.t + 0.1;
  slide(w, exact_feature(scn, t), preintegrate(imu, t - 0.1, t, cfg.imu), cfg);
  ASSERT_EQ(w.size(), 15u);
  ASSERT_EQ(w.factors.size(), 14u);
  solve(w, cfg);
  for (std::size_t i = 0; i + 1 < w.size(); ++i) {
    const auto& a = w.epochs[i].state;
    const auto& b = before.epochs[i + 1].state;
    EXPECT_NEAR(a.t, b.t, 1e-12);
    EXPECT_LT(((a.p - w.rho) - (b.p - before.rho)).norm(), 1e-6);
  }
  EXPECT_LT((w.epochs.back().state.p - truth(scn, t).p).norm(), 1e-4);
}

TEST(Initialize, WaitsForThreeFixes) {
  const auto scn = circle();
  const auto imu = synth_imu(scn);
  std::vector<PoseFeature> zs;
  std::vector<Preintegrated> fs;
  std::vector<Vec3> acc;
  for (int i = 0; i < 4; ++i) {
    const double t = 2.0 + 0.1 * i;
    auto z = exact_feature(scn, t);
    if (i == 1) z.has_range = false;
    zs.push_back(z);
    acc.push_back(ideal_imu(sample_state(scn, t)).acc);
    if (i > 0) fs.push_back(preintegrate(imu, t - 0.1, t, ImuNoise{}));
    const auto w = initialize(zs, fs, acc, EstimatorConfig{});
    EXPECT_EQ(w.has_value(), i == 3) << i;
    if (w) {
      EXPECT_LT(w->epochs.front().state.p.norm(), 1e-12);
      // Missing range: interpolated between its neighbours.
      const Vec3 mid = 0.5 * (w->epochs[0].state.p + w->epochs[2].state.p);
      EXPECT_LT((w->epochs[1].state.p - mid).norm(), 1e-12);
      EXPECT_NEAR(so3::yaw_of(w->epochs[0].state.q), *zs[0].psi, 1e-9);
    }
  }
}

TEST(Initialize, WithoutYawWaitsForAFullWindow) {
  Scenario scn;
  scn.kind = TrajectoryKind::stationary;
  scn.duration_s = 5.0;
  EstimatorConfig cfg;
  cfg.window = 8;
  std::vector<PoseFeature> zs;
  std::vector<Preintegrated> fs;
  std::vector<Vec3> acc;
  const auto imu = synth_imu(scn);
  for (int i = 0; i < 8; ++i) {
    const double t = 0.1 * i;
    auto z = exact_feature(scn, t);
    z.psi.reset();
    zs.push_back(z);
    acc.push_back(ideal_imu(sample_state(scn, t)).acc);
    if (i > 0) fs.push_back(preintegrate(imu, t - 0.1, t, ImuNoise{}));
    EXPECT_EQ(initialize(zs, fs, acc, cfg).has_value(), i == 7) << i;
  }
}

TEST(Initialize, WithoutYawPicksTheBestFittingHeading) {
  const auto scn = circle();
  const auto imu = synth_imu(scn);
  std::vector<PoseFeature> zs;
  std::vector<Preintegrated> fs;
  std::vector<Vec3> acc;
  for (int i = 0; i < 30; ++i) {
    const double t = 2.0 + 0.1 * i;
    auto z = exact_feature(scn, t);
    z.psi.reset();
    zs.push_back(z);
    acc.push_back(ideal_imu(sample_state(scn, t)).acc);
    if (i > 0) fs.push_back(preintegrate(imu, t - 0.1, t, ImuNoise{}));
  }
  const auto w = initialize(zs, fs, acc, EstimatorConfig{});
  ASSERT_TRUE(w.has_value());
  // One window only resolves heading to the hypothesis grid (30 deg); the
  // rotation about the thrust axis is weakly observable over 3 s.
  const double err = oracle::angle_diff(so3::yaw_of(w->epochs.back().state.q), so3::yaw_of(sample_state(scn, 4.9).q));
  EXPECT_LT(std::abs(rad2deg(err)), 15.0);
}

TEST(Estimator, ZeroNoiseCircleTracksTruth) {
  auto scn = circle();
  const auto imu = synth_imu(scn);
  EstimatorConfig cfg;
  Estimator est(cfg);
  double worst = 0.0;
  int used = 0;
  for (int k = 0; k <= 100; ++k) {
    const double t = 0.1 * k;
    const auto pre = k > 0 ? preintegrate(imu, t - 0.1, t, cfg.imu) : Preintegrated{};
    est.add_epoch(exact_feature(scn, t), pre, ideal_imu(sample_state(scn, t)).acc);
    if (!est.initialized() || k < cfg.window) continue;
    const Vec3 p = est.latest()->p - *est.anchor();
    worst = std::max(worst, (p - (sample_state(scn, t).p - scn.controller)).norm());
    ++used;
  }
  EXPECT_GT(used, 60);
  EXPECT_LT(worst, 1e-3);
}

TEST(Estimator, AnchorSpreadDoesNotGrowWithMoreEpochs) {
  const auto scn = circle();
  const auto imu = synth_imu(scn);
  EstimatorConfig cfg;
  cfg.window = 30;
  const int trials = 12;
  std::vector<Vec3> early, late;
  for (int s = 0; s < trials; ++s) {
    std::mt19937_64 rng(100 + s);
    std::normal_distribution<double> n(0.0, 1.0);
    Estimator est(cfg);
    for (int k = 0; k <= 60; ++k) {
      const double t = 2.0 + 0.1 * k;
      auto z = exact_feature(scn, t);
      z.d += z.sigma_d * n(rng);
      *z.psi += z.sigma_psi * n(rng);
      const Vec3 tilt(n(rng), n(rng), n(rng));
      z.a = (z.a + z.sigma_a * (tilt - tilt.dot(z.a) * z.a)).normalized();
      const auto pre = k > 0 ? preintegrate(imu, t - 0.1, t, cfg.imu) : Preintegrated{};
      est.add_epoch(z, pre, ideal_imu(sample_state(scn, t)).acc);
      // Anchor expressed relative to the newest true position.
      const auto rel = [&] { return Vec3(est.latest()->p - *est.anchor() - (sample_state(scn, t).p - scn.controller)); };
      if (k == 5) early.push_back(rel());
      if (k == 60) late.push_back(rel());
    }
  }
  const auto spread = [](const std::vector<Vec3>& v) {
    Vec3 m = Vec3::Zero();
    for (const auto& x : v) m += x;
    m /= static_cast<double>(v.size());
    double s = 0.0;
    for (const auto& x : v) s += (x - m).squaredNorm();
    return s / static_cast<double>(v.size() - 1);
  };
  EXPECT_LE(spread(late), spread(early));
}
