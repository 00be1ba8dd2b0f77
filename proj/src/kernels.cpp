#include "chirpnav/kernels.hpp"

#include <algorithm>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace chirpnav::kernels {
namespace {

// Phase in cycles reduced to [0, 1) before scaling, keeps chirp phase exact
// to ~1e-11 rad for multi-MHz tones over a full chirp.
inline Complex unit_from_cycles(double cycles) {
  const double frac = cycles - std::floor(cycles);
  return std::polar(1.0, kTwoPi * frac);
}

inline Complex chirp_sample(const ChirpTone& tone, std::size_t n) {
  const double t = static_cast<double>(n) / tone.fs;
  const double u = t - tone.delay_s;
  const double cycles = -0.5 * tone.bw * u + 0.5 * tone.slope * u * u + tone.tone_hz * t;
  return tone.amp * unit_from_cycles(cycles);
}

inline DtftPoint dtft_block(std::span<const Complex> y, std::span<const double> w, double freq_bins,
                            std::size_t fft_len, std::size_t begin, std::size_t end) {
  const double nn = static_cast<double>(fft_len);
  const double step_cycles = -freq_bins / nn;
  Complex rot = unit_from_cycles(step_cycles * static_cast<double>(begin));
  const Complex step = unit_from_cycles(step_cycles);
  DtftPoint acc{};
  for (std::size_t n = begin; n < end; ++n) {
    const double x = kTwoPi * static_cast<double>(n) / nn;
    const Complex term = w[n] * y[n] * rot;
    acc.value += term;
    acc.d1 += Complex(0.0, -x) * term;
    acc.d2 += -x * x * term;
    rot *= step;
  }
  return acc;
}

inline double null_spectrum_at(std::span<const Complex> en, std::size_t m, std::size_t k, double eta,
                               double u) {
  double q = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    Complex proj{};
    for (std::size_t r = 0; r < m; ++r) {
      const Complex s = std::polar(1.0, -static_cast<double>(r) * eta * u);
      proj += std::conj(en[c * m + r]) * s;
    }
    q += std::norm(proj);
  }
  return q;
}

inline double bartlett_at(std::span<const Complex> cov, std::size_t m, double eta, double u) {
  Complex acc{};
  for (std::size_t c = 0; c < m; ++c) {
    const Complex sc = std::polar(1.0, -static_cast<double>(c) * eta * u);
    for (std::size_t r = 0; r < m; ++r) {
      const Complex sr = std::polar(1.0, -static_cast<double>(r) * eta * u);
      acc += std::conj(sr) * cov[c * m + r] * sc;
    }
  }
  return acc.real();
}

inline double profile_at(std::span<const Complex> x, std::span<const int> bins, std::size_t l,
                         std::size_t len) {
  Complex acc{};
  for (std::size_t c = 0; c < x.size(); ++c) {
    const auto n = static_cast<long long>(len);
    const long long r = ((static_cast<long long>(bins[c]) * static_cast<long long>(l)) % n + n) % n;
    const double cycles = static_cast<double>(r) / static_cast<double>(len);
    acc += x[c] * unit_from_cycles(cycles);
  }
  return std::norm(acc);
}

}  // namespace

std::vector<double> hann(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(kTwoPi * static_cast<double>(i) / static_cast<double>(n));
  return w;
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace serial {

void accumulate_chirp(std::span<Complex> out, const ChirpTone& tone) {
  for (std::size_t n = 0; n < out.size(); ++n) out[n] += chirp_sample(tone, n);
}

void multiply_conj(std::span<const Complex> a, std::span<const Complex> b, std::span<Complex> out) {
  for (std::size_t n = 0; n < out.size(); ++n) out[n] = a[n] * std::conj(b[n]);
}

DtftPoint zoom_dtft(std::span<const Complex> y, std::span<const double> weights, double freq_bins,
                    std::size_t fft_len) {
  // Reference evaluates every phasor directly.
  const double nn = static_cast<double>(fft_len);
  DtftPoint acc{};
  for (std::size_t n = 0; n < y.size(); ++n) {
    const double x = kTwoPi * static_cast<double>(n) / nn;
    const Complex term = weights[n] * y[n] * unit_from_cycles(-freq_bins * static_cast<double>(n) / nn);
    acc.value += term;
    acc.d1 += Complex(0.0, -x) * term;
    acc.d2 += -x * x * term;
  }
  return acc;
}

void subspace_null_spectrum(std::span<const Complex> noise_basis, std::size_t m, std::size_t k,
                            double eta, std::span<const double> sin_grid, std::span<double> out) {
  for (std::size_t i = 0; i < sin_grid.size(); ++i)
    out[i] = null_spectrum_at(noise_basis, m, k, eta, sin_grid[i]);
}

void bartlett_spectrum(std::span<const Complex> cov, std::size_t m, double eta,
                       std::span<const double> sin_grid, std::span<double> out) {
  for (std::size_t i = 0; i < sin_grid.size(); ++i) out[i] = bartlett_at(cov, m, eta, sin_grid[i]);
}

void delay_profile(std::span<const Complex> x, std::span<const int> bins, std::span<double> out) {
  for (std::size_t l = 0; l < out.size(); ++l) out[l] = profile_at(x, bins, l, out.size());
}

}  // namespace serial

namespace parallel {

void accumulate_chirp(std::span<Complex> out, const ChirpTone& tone) {
  const auto n = static_cast<std::ptrdiff_t>(out.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i)
    out[static_cast<std::size_t>(i)] += chirp_sample(tone, static_cast<std::size_t>(i));
}

void multiply_conj(std::span<const Complex> a, std::span<const Complex> b, std::span<Complex> out) {
  const auto n = static_cast<std::ptrdiff_t>(out.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto u = static_cast<std::size_t>(i);
    out[u] = a[u] * std::conj(b[u]);
  }
}

DtftPoint zoom_dtft(std::span<const Complex> y, std::span<const double> weights, double freq_bins,
                    std::size_t fft_len) {
  const std::size_t blocks = (y.size() + kReductionBlock - 1) / kReductionBlock;
  std::vector<DtftPoint> partial(blocks);
  const auto nb = static_cast<std::ptrdiff_t>(blocks);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t b = 0; b < nb; ++b) {
    const std::size_t begin = static_cast<std::size_t>(b) * kReductionBlock;
    const std::size_t end = std::min(y.size(), begin + kReductionBlock);
    partial[static_cast<std::size_t>(b)] = dtft_block(y, weights, freq_bins, fft_len, begin, end);
  }
  DtftPoint acc{};
  for (const auto& p : partial) {
    acc.value += p.value;
    acc.d1 += p.d1;
    acc.d2 += p.d2;
  }
  return acc;
}

void subspace_null_spectrum(std::span<const Complex> noise_basis, std::size_t m, std::size_t k,
                            double eta, std::span<const double> sin_grid, std::span<double> out) {
  const auto n = static_cast<std::ptrdiff_t>(sin_grid.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto u = static_cast<std::size_t>(i);
    out[u] = null_spectrum_at(noise_basis, m, k, eta, sin_grid[u]);
  }
}

void bartlett_spectrum(std::span<const Complex> cov, std::size_t m, double eta,
                       std::span<const double> sin_grid, std::span<double> out) {
  const auto n = static_cast<std::ptrdiff_t>(sin_grid.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto u = static_cast<std::size_t>(i);
    out[u] = bartlett_at(cov, m, eta, sin_grid[u]);
  }
}

void delay_profile(std::span<const Complex> x, std::span<const int> bins, std::span<double> out) {
  const auto n = static_cast<std::ptrdiff_t>(out.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t l = 0; l < n; ++l)
    out[static_cast<std::size_t>(l)] = profile_at(x, bins, static_cast<std::size_t>(l), out.size());
}

}  // namespace parallel
}  // namespace chirpnav::kernels
