#include "chirpnav/pose_sensing.hpp"

#include "chirpnav/kernels.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace chirpnav {

// ---- range ----

RangeResult estimate_range(const Eigen::MatrixXd& theta, const Eigen::MatrixXd& weight,
                           std::span<const int> channels, double spacing_hz, const RangeOptions& opts) {
  if (theta.rows() != weight.rows() || theta.cols() != weight.cols() ||
      theta.cols() != static_cast<Eigen::Index>(channels.size()))
    throw ContractViolation("estimate_range: phase, weight and channel shapes disagree");
  const std::size_t len = opts.ifft_len;
  RangeResult res;
  res.profile.bin_spacing_s = 1.0 / (static_cast<double>(len) * spacing_hz);
  std::vector<double> total(len, 0.0), part(len);
  bool any = false;
  for (Eigen::Index m = 0; m < theta.rows(); ++m) {
    std::vector<Complex> x;
    std::vector<int> bins;
    for (Eigen::Index c = 0; c < theta.cols(); ++c) {
      if (weight(m, c) <= 0.0) continue;
      x.push_back(std::polar(1.0, theta(m, c)));
      bins.push_back(channels[static_cast<std::size_t>(c)]);
    }
    if (static_cast<int>(x.size()) < opts.min_channels) continue;
    kernels::delay_profile(x, bins, part);
    for (std::size_t l = 0; l < len; ++l) total[l] += part[l];
    any = true;
  }
  if (!any) return res;
  res.profile.power = total;

  const double peak = *std::max_element(total.begin(), total.end());
  if (!(peak > 0.0)) return res;
  const double thr = opts.threshold * peak;
  std::size_t l = 0;
  while (l < len && total[l] < thr) ++l;
  if (l == len) return res;
  while (l + 1 < len && total[l + 1] > total[l]) ++l;

  const double a = total[(l + len - 1) % len], b = total[l], c = total[(l + 1) % len];
  const double denom = a - 2.0 * b + c;
  const double delta = denom < 0.0 ? std::clamp(0.5 * (a - c) / denom, -0.5, 0.5) : 0.0;
  const double bin = std::max(0.0, static_cast<double>(l) + delta);
  res.profile.direct_delay_s = bin * res.profile.bin_spacing_s;
  res.range_m = 0.5 * kSpeedOfLight * res.profile.direct_delay_s;
  return res;
}

RangeResult estimate_range(const PhaseSet& ps, int tag, double spacing_hz, const RangeOptions& opts) {
  return estimate_range(ps.theta[static_cast<std::size_t>(tag)], ps.weight[static_cast<std::size_t>(tag)],
                        ps.channels, spacing_hz, opts);
}

// ---- angle ----

Eigen::MatrixXcd virtual_matrix(const PhaseSet& ps, int tag) {
  const auto& th = ps.theta[static_cast<std::size_t>(tag)];
  const auto& w = ps.weight[static_cast<std::size_t>(tag)];
  std::vector<Eigen::Index> cols;
  for (Eigen::Index c = 0; c < th.cols(); ++c)
    if ((w.col(c).array() > 0.0).all()) cols.push_back(c);
  Eigen::MatrixXcd x(th.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j)
    for (Eigen::Index m = 0; m < th.rows(); ++m)
      x(m, static_cast<Eigen::Index>(j)) = std::polar(1.0, th(m, cols[j]));
  return x;
}

namespace {

double parabolic_offset(double a, double b, double c) {
  const double denom = a - 2.0 * b + c;
  if (denom == 0.0) return 0.0;
  return std::clamp(0.5 * (a - c) / denom, -0.5, 0.5);
}

}  // namespace

AngleResult estimate_angle(const Eigen::MatrixXcd& x, const ArrayGeometry& arr, double fc, const AngleOptions& opts) {
  if (arr.layout != ArrayGeometry::Layout::linear)
    throw ContractViolation("estimate_angle: only linear arrays are supported");
  const auto m = x.rows();
  const auto n = x.cols();
  if (m < 2) throw ContractViolation("estimate_angle: need at least 2 antennas");
  if (n < 1) throw ContractViolation("estimate_angle: no snapshots");
  const double eta = arr.eta(fc);

  const double step = deg2rad(opts.grid_step_deg);
  const auto count = static_cast<std::size_t>(std::llround(kPi / step)) - 1;
  std::vector<double> phis(count), grid(count);
  for (std::size_t i = 0; i < count; ++i) {
    phis[i] = -0.5 * kPi + static_cast<double>(i + 1) * step;
    grid[i] = std::sin(phis[i]);
  }

  Eigen::MatrixXcd r = x * x.adjoint() / static_cast<double>(n);
  if (opts.forward_backward) {
    Eigen::MatrixXcd jrj(m, m);
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j < m; ++j) jrj(i, j) = std::conj(r(m - 1 - i, m - 1 - j));
    r = 0.5 * (r + jrj);
  }
  const std::span<const Complex> cov(r.data(), static_cast<std::size_t>(m * m));
  std::vector<double> bart(count);
  kernels::bartlett_spectrum(cov, static_cast<std::size_t>(m), eta, grid, bart);

  AngleResult res;
  if (n < 2) {
    res.degraded = true;
    const auto i = static_cast<std::size_t>(std::distance(bart.begin(), std::max_element(bart.begin(), bart.end())));
    double phi = phis[i];
    if (i > 0 && i + 1 < count) phi += step * parabolic_offset(bart[i - 1], bart[i], bart[i + 1]);
    res.phi = phi;
    return res;
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(r);
  const Eigen::VectorXd ev = es.eigenvalues();  // ascending
  std::vector<double> lam(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) lam[static_cast<std::size_t>(i)] = std::max(0.0, ev(m - 1 - i));
  res.k_hat = 1;
  for (Eigen::Index k = 1; k < m; ++k) {
    const double hi = lam[static_cast<std::size_t>(k - 1)], lo = lam[static_cast<std::size_t>(k)];
    if (hi >= opts.eigen_gap * lo && hi > opts.signal_floor * lam[0]) res.k_hat = static_cast<int>(k);
  }
  const Eigen::Index noise_dim = m - res.k_hat;
  const Eigen::MatrixXcd en = es.eigenvectors().leftCols(noise_dim);
  std::vector<double> q(count);
  kernels::subspace_null_spectrum(std::span<const Complex>(en.data(), static_cast<std::size_t>(en.size())),
                                  static_cast<std::size_t>(m), static_cast<std::size_t>(noise_dim), eta, grid, q);

  std::size_t best = count;
  for (std::size_t i = 1; i + 1 < count; ++i) {
    if (q[i] <= q[i - 1] && q[i] < q[i + 1] && (best == count || bart[i] > bart[best])) best = i;
  }
  if (best == count) best = static_cast<std::size_t>(std::distance(q.begin(), std::min_element(q.begin(), q.end())));
  double phi = phis[best];
  if (best > 0 && best + 1 < count) phi += step * parabolic_offset(q[best - 1], q[best], q[best + 1]);
  res.phi = phi;
  return res;
}

double harmonic_mean_angle(std::span<const double> phis) {
  if (phis.empty()) throw ContractViolation("harmonic_mean_angle: no angles");
  double inv = 0.0;
  for (double p : phis) {
    const double shifted = p + 0.5 * kPi;
    if (!(shifted > 0.0)) throw ContractViolation("harmonic_mean_angle: angle outside (-pi/2, pi/2)");
    inv += 1.0 / shifted;
  }
  return static_cast<double>(phis.size()) / inv - 0.5 * kPi;
}

Elevation elevation_from_barometer(double h, double d) {
  if (!(d > 0.0)) throw ContractViolation("elevation_from_barometer: range must be > 0");
  const double ratio = h / d;
  if (ratio > 1.0) return {0.0, true};
  if (ratio < -1.0) return {kPi, true};
  return {std::acos(ratio), false};
}

Vec3 angle_vector(double phi, double xi) {
  return {std::cos(phi) * std::sin(xi), std::sin(phi) * std::sin(xi), std::cos(xi)};
}

Direction direction_from_array(double phi_array, double h, double d) {
  Direction out;
  out.elevation = elevation_from_barometer(h, d);
  const double sxi = std::sin(out.elevation.xi);
  if (sxi < 1e-9) {
    out.a = angle_vector(0.0, out.elevation.xi);
    return out;
  }
  out.phi = std::asin(std::clamp(std::sin(phi_array) / sxi, -1.0, 1.0));
  out.a = angle_vector(out.phi, out.elevation.xi);
  return out;
}

// ---- rotation ----

double rotational_shift(double omega, double phi_u, double psi, double diameter, double fc, double sin_xi) {
  return fc * diameter / (2.0 * kSpeedOfLight) * omega * sin_xi * std::sin(phi_u - psi);
}

RotationResult estimate_rotation(double delta_b1_hz, double delta_b2_hz, double phi_u, double omega,
                                 double diameter, double fc, double sin_xi, const RotationOptions& opts) {
  RotationResult res;
  const double scale = fc * diameter / (2.0 * kSpeedOfLight) * omega * sin_xi;
  if (std::abs(omega) < opts.omega_min || std::abs(scale) <= 1.5 * opts.sigma_b_hz || scale == 0.0) return res;
  // Pair 1 measures 2 scale sin(phi_u - psi); pair 2 sits a quarter turn later
  // and measures -2 scale cos(phi_u - psi).
  const double s1 = delta_b1_hz / (2.0 * scale);
  const double s2 = delta_b2_hz / (2.0 * scale);
  res.clamped = std::abs(s1) > 1.0 || std::abs(s2) > 1.0;
  res.psi = wrap_angle(phi_u - std::atan2(std::clamp(s1, -1.0, 1.0), -std::clamp(s2, -1.0, 1.0)));
  res.sigma = std::max(opts.sigma_floor_rad, opts.sigma_b_hz / (2.0 * std::abs(scale)));
  if (res.clamped) res.sigma *= 2.0;
  return res;
}

}  // namespace chirpnav
