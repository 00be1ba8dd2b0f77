#pragma once

// Linear CSS chirp synthesis and decoding.
//
// Conventions: a chirp of duration T = 2^sf / bw sweeps -bw/2..+bw/2 at slope
// k = bw/T, offset by the tag shift f0. The FFT length equals the number of
// chirp samples, so one bin is 1/T Hz. A received chirp delayed by tau
// dechirps to a tone at -k*tau (bin -tau*bw), a Doppler offset fd to bin fd*T.

#include "chirpnav/common.hpp"

#include <optional>
#include <span>
#include <vector>

namespace chirpnav {

struct ChirpConfig {
  int sf = 12;
  double bw = 500e3;      // Hz
  double fc = 900e6;      // Hz, enters only analytically
  double fs = 500e3;      // Hz, complex sample rate
  double f0 = 0.0;        // Hz, tag frequency shift

  double duration() const { return std::ldexp(1.0, sf) / bw; }
  double slope() const { return bw / duration(); }
  std::size_t sample_count() const;
  /// Hz per FFT bin.
  double bin_hz() const { return 1.0 / duration(); }
  /// Samples per bin of timing offset (one bin of delay is 1/bw seconds).
  double samples_per_bin() const { return fs / bw; }

  /// Throws ConfigError when any invariant is violated.
  void validate() const;
};

/// Sample rate that keeps four tag channels spaced up to max_shift alias-free.
double default_sample_rate(double bw, double max_shift);

struct IqBuffer {
  std::vector<Complex> samples;
  double fs = 1.0;
  double t0 = 0.0;

  std::size_t size() const { return samples.size(); }
  double duration() const { return static_cast<double>(samples.size()) / fs; }
};

struct DechirpResult {
  std::vector<Complex> spectrum;
  std::size_t peak_bin = 0;
  double peak_magnitude = 0.0;
  /// Refined peak location in bins, signed in (-N/2, N/2].
  double fractional_bin = 0.0;
  /// Phase read at the refined peak, (-pi, pi].
  double peak_phase = 0.0;
  /// |Hann-weighted DTFT| at the refined peak normalized by the window sum.
  double fine_magnitude = 0.0;
  double median_magnitude = 0.0;

  double frequency_hz(const ChirpConfig& cfg) const { return fractional_bin * cfg.bin_hz(); }
};

struct DechirpOptions {
  /// Restrict the peak search to signed bins in [-half_width, +half_width].
  std::optional<std::size_t> search_half_width;
  int newton_iterations = 8;
};

IqBuffer make_upchirp(const ChirpConfig& cfg);
IqBuffer make_downchirp(const ChirpConfig& cfg);

/// Reusable dechirper: caches the matched reference and window for one cfg.
class Dechirper {
 public:
  explicit Dechirper(const ChirpConfig& cfg);

  DechirpResult operator()(const IqBuffer& rx, const DechirpOptions& opts = {}) const;
  const ChirpConfig& config() const { return cfg_; }

 private:
  ChirpConfig cfg_;
  std::vector<Complex> reference_;
  std::vector<double> window_;
};

DechirpResult dechirp(const IqBuffer& rx, const ChirpConfig& cfg, const DechirpOptions& opts = {});

/// Advances rx by round(delay_bins * fs / bw) samples (negative delays it),
/// zero-filling the vacated edge.
IqBuffer realign(const IqBuffer& rx, double delay_bins, const ChirpConfig& cfg);

/// Sample count realign() shifts by for a given delay in bins.
long realign_shift_samples(double delay_bins, const ChirpConfig& cfg);

/// Signed integer bin for an index in [0, n): values above n/2 map negative.
long signed_bin(std::size_t bin, std::size_t n);

}  // namespace chirpnav
