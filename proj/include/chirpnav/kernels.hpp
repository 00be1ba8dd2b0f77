#pragma once

// Data-parallel inner loops of the signal path. Every kernel has a plain
// serial reference (kernels::serial) and an OpenMP version (kernels::parallel).
// The library calls the parallel versions; tests hold them against the serial
// ones and bench/ times both.
//
// Reductions in the parallel versions use a fixed block decomposition and a
// serial combine in block order, so results do not depend on thread count.

#include "chirpnav/common.hpp"

#include <span>
#include <vector>

namespace chirpnav::kernels {

/// One delayed, frequency-shifted linear chirp:
///   amp * exp(j 2pi (-bw/2 u + slope/2 u^2 + tone_hz t)),  t = n/fs,  u = t - delay_s.
struct ChirpTone {
  Complex amp{1.0, 0.0};
  double fs = 1.0;
  double bw = 1.0;
  double slope = 1.0;  // Hz/s
  double delay_s = 0.0;
  double tone_hz = 0.0;
};

/// Zoom-DTFT value and its first two derivatives with respect to frequency in bins.
struct DtftPoint {
  Complex value;
  Complex d1;
  Complex d2;
};

inline constexpr std::size_t kReductionBlock = 2048;

namespace serial {
void accumulate_chirp(std::span<Complex> out, const ChirpTone& tone);
void multiply_conj(std::span<const Complex> a, std::span<const Complex> b, std::span<Complex> out);
DtftPoint zoom_dtft(std::span<const Complex> y, std::span<const double> weights, double freq_bins,
                    std::size_t fft_len);
/// ||En^H s(u)||^2 for steering s_m(u) = exp(-j m eta u), En stored column-major M x K.
void subspace_null_spectrum(std::span<const Complex> noise_basis, std::size_t m, std::size_t k,
                            double eta, std::span<const double> sin_grid, std::span<double> out);
/// s(u)^H R s(u) for a Hermitian M x M covariance stored column-major.
void bartlett_spectrum(std::span<const Complex> cov, std::size_t m, double eta,
                       std::span<const double> sin_grid, std::span<double> out);
/// |sum_c x_c exp(+j 2pi b_c l / L)|^2 for l in [0, L).
void delay_profile(std::span<const Complex> x, std::span<const int> bins, std::span<double> out);
}  // namespace serial

namespace parallel {
void accumulate_chirp(std::span<Complex> out, const ChirpTone& tone);
void multiply_conj(std::span<const Complex> a, std::span<const Complex> b, std::span<Complex> out);
DtftPoint zoom_dtft(std::span<const Complex> y, std::span<const double> weights, double freq_bins,
                    std::size_t fft_len);
void subspace_null_spectrum(std::span<const Complex> noise_basis, std::size_t m, std::size_t k,
                            double eta, std::span<const double> sin_grid, std::span<double> out);
void bartlett_spectrum(std::span<const Complex> cov, std::size_t m, double eta,
                       std::span<const double> sin_grid, std::span<double> out);
void delay_profile(std::span<const Complex> x, std::span<const int> bins, std::span<double> out);
}  // namespace parallel

using parallel::accumulate_chirp;
using parallel::bartlett_spectrum;
using parallel::delay_profile;
using parallel::multiply_conj;
using parallel::subspace_null_spectrum;
using parallel::zoom_dtft;

/// Periodic Hann window of length n.
std::vector<double> hann(std::size_t n);

/// Number of OpenMP threads available (1 without OpenMP).
int max_threads();

}  // namespace chirpnav::kernels
