#include "chirpnav/signal_core.hpp"

#include "chirpnav/fft.hpp"
#include "chirpnav/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace chirpnav {

std::size_t ChirpConfig::sample_count() const {
  return static_cast<std::size_t>(std::llround(duration() * fs));
}

void ChirpConfig::validate() const {
  std::ostringstream why;
  if (sf < 6 || sf > 12) why << "sf must be in 6..12 (got " << sf << "); ";
  if (!(bw > 0.0)) why << "bw must be > 0; ";
  if (!(fs >= bw)) why << "fs must be >= bw; ";
  if (!(fc > 0.0)) why << "fc must be > 0; ";
  if (!std::isfinite(f0)) why << "f0 must be finite; ";
  if (why.str().empty() && sample_count() < (std::size_t{1} << sf))
    why << "chirp must span at least 2^sf samples; ";
  if (!why.str().empty()) throw ConfigError("invalid chirp config: " + why.str());
}

double default_sample_rate(double bw, double max_shift) { return 2.0 * (bw + max_shift); }

IqBuffer make_upchirp(const ChirpConfig& cfg) {
  cfg.validate();
  IqBuffer out{std::vector<Complex>(cfg.sample_count()), cfg.fs, 0.0};
  kernels::accumulate_chirp(out.samples, {Complex(1.0, 0.0), cfg.fs, cfg.bw, cfg.slope(), 0.0, cfg.f0});
  return out;
}

IqBuffer make_downchirp(const ChirpConfig& cfg) {
  cfg.validate();
  IqBuffer out{std::vector<Complex>(cfg.sample_count()), cfg.fs, 0.0};
  kernels::accumulate_chirp(out.samples,
                            {Complex(1.0, 0.0), cfg.fs, -cfg.bw, -cfg.slope(), 0.0, cfg.f0});
  return out;
}

long signed_bin(std::size_t bin, std::size_t n) {
  const auto b = static_cast<long>(bin);
  const auto nn = static_cast<long>(n);
  return b > nn / 2 ? b - nn : b;
}

Dechirper::Dechirper(const ChirpConfig& cfg)
    : cfg_(cfg), reference_(make_upchirp(cfg).samples), window_(kernels::hann(cfg.sample_count())) {}

DechirpResult Dechirper::operator()(const IqBuffer& rx, const DechirpOptions& opts) const {
  const std::size_t n = reference_.size();
  if (rx.size() < n)
    throw LengthError("dechirp needs " + std::to_string(n) + " samples, buffer has " +
                      std::to_string(rx.size()));

  std::vector<Complex> product(n);
  kernels::multiply_conj(std::span(rx.samples).first(n), reference_, product);

  DechirpResult res;
  res.spectrum = fft::forward(product);

  std::vector<double> mags(n);
  std::transform(res.spectrum.begin(), res.spectrum.end(), mags.begin(),
                 [](const Complex& c) { return std::abs(c); });

  auto index_of = [n](long signed_idx) {
    const auto nn = static_cast<long>(n);
    return static_cast<std::size_t>(((signed_idx % nn) + nn) % nn);
  };

  if (opts.search_half_width) {
    const auto w = static_cast<long>(std::min(*opts.search_half_width, n / 2 - 1));
    std::size_t best = index_of(-w);
    for (long b = -w; b <= w; ++b) {
      const std::size_t i = index_of(b);
      if (mags[i] > mags[best]) best = i;
    }
    res.peak_bin = best;
  } else {
    res.peak_bin = static_cast<std::size_t>(std::distance(mags.begin(), std::ranges::max_element(mags)));
  }
  res.peak_magnitude = mags[res.peak_bin];

  {
    std::vector<double> tmp = mags;
    auto mid = tmp.begin() + static_cast<std::ptrdiff_t>(n / 2);
    std::nth_element(tmp.begin(), mid, tmp.end());
    res.median_magnitude = *mid;
  }

  // Parabolic seed on |X|, then Newton on the Hann-weighted zoom DTFT power.
  const long k = signed_bin(res.peak_bin, n);
  const double a = mags[index_of(k - 1)];
  const double b = mags[res.peak_bin];
  const double c = mags[index_of(k + 1)];
  const double denom = a - 2.0 * b + c;
  double delta = denom != 0.0 ? 0.5 * (a - c) / denom : 0.0;
  delta = std::clamp(delta, -0.5, 0.5);
  const double seed = static_cast<double>(k) + delta;

  double f = seed;
  kernels::DtftPoint pt = kernels::zoom_dtft(product, window_, f, n);
  for (int it = 0; it < opts.newton_iterations; ++it) {
    const double g1 = 2.0 * std::real(std::conj(pt.value) * pt.d1);
    const double g2 = 2.0 * (std::norm(pt.d1) + std::real(std::conj(pt.value) * pt.d2));
    if (!(g2 < 0.0)) break;
    const double step = std::clamp(-g1 / g2, -0.5, 0.5);
    const double next = std::clamp(f + step, seed - 1.0, seed + 1.0);
    if (next == f) break;
    f = next;
    pt = kernels::zoom_dtft(product, window_, f, n);
    if (std::abs(step) < 1e-13) break;
  }

  double window_sum = 0.0;
  for (double w : window_) window_sum += w;
  res.fractional_bin = f;
  res.peak_phase = wrap_angle(std::arg(pt.value));
  res.fine_magnitude = std::abs(pt.value) / window_sum;
  return res;
}

DechirpResult dechirp(const IqBuffer& rx, const ChirpConfig& cfg, const DechirpOptions& opts) {
  return Dechirper(cfg)(rx, opts);
}

long realign_shift_samples(double delay_bins, const ChirpConfig& cfg) {
  return std::lround(delay_bins * cfg.samples_per_bin());
}

IqBuffer realign(const IqBuffer& rx, double delay_bins, const ChirpConfig& cfg) {
  const auto fft_len = static_cast<double>(cfg.sample_count());
  if (!(std::abs(delay_bins) < fft_len))
    throw RangeError("realign offset " + std::to_string(delay_bins) + " outside +/- FFT length");
  const long shift = realign_shift_samples(delay_bins, cfg);
  IqBuffer out{std::vector<Complex>(rx.size()), rx.fs, rx.t0 + static_cast<double>(shift) / rx.fs};
  const auto len = static_cast<long>(rx.size());
  for (long i = 0; i < len; ++i) {
    const long src = i + shift;
    if (src >= 0 && src < len) out.samples[static_cast<std::size_t>(i)] = rx.samples[static_cast<std::size_t>(src)];
  }
  return out;
}

}  // namespace chirpnav
