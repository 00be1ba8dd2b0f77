#pragma once

// Excitation -> tag -> array backscatter channel at complex baseband.
//
// Each tag reflects the excitation chirp shifted by its f0. The copy reaching
// antenna m is delayed by the round trip tau = (2 r + excess) / c, carries the
// RF phase exp(-j 2pi f_ch tau), the steering phase of its arrival direction,
// and a tone offset f0 + df_t + df_r + cfo. Doppler is constant over a chirp.

#include "chirpnav/common.hpp"
#include "chirpnav/scene.hpp"
#include "chirpnav/signal_core.hpp"

#include <array>
#include <filesystem>
#include <utility>
#include <vector>

namespace chirpnav {

struct ArrayGeometry {
  enum class Layout { linear, circular };

  int m = 3;
  double spacing_m = 0.16;
  Layout layout = Layout::linear;
  /// Reference element position (the controller).
  Vec3 position = Vec3::Zero();

  void validate() const;
  /// Offset of element i from the reference. Linear arrays lie along -y with
  /// element 0 at the reference; boresight is +x.
  Vec3 element_offset(int i) const;
  double eta(double freq_hz) const { return kTwoPi * spacing_m * freq_hz / kSpeedOfLight; }
};

struct ChannelPlan {
  double fc = 900e6;
  double spacing_hz = 2.16e6;
  /// Scheduled channel indices, each in 0..12, ascending.
  std::vector<int> channels{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};

  static constexpr int kChannelCount = 13;
  double frequency(int ch) const { return fc + (ch - kChannelCount / 2) * spacing_hz; }
  void validate() const;
};

struct DopplerShift {
  double translational_hz = 0.0;
  double rotational_hz = 0.0;
};

/// (fc / c) u_p . v for the translational and rotational velocity parts.
/// Throws ContractViolation when u_p is not unit length within 1e-6.
DopplerShift doppler_shift(const Vec3& u_p, const Vec3& v_t, const Vec3& v_r, double fc);

/// One tag/ray contribution: a chirp with common delay and tone, scaled per antenna.
struct PathComponent {
  int tag = 0;
  double delay_s = 0.0;
  double tone_hz = 0.0;
  /// Translational and rotational Doppler of this tag.
  DopplerShift doppler;
  std::vector<Complex> antenna_gain;
};

struct LinkParams {
  double channel_hz = 900e6;
  /// Direct-path amplitude at every antenna.
  double amplitude = 1.0;
  std::array<double, kTagCount> cfo_hz{0.0, 0.0, 0.0, 0.0};
  std::array<bool, kTagCount> visible{true, true, true, true};
};

/// Deterministic path decomposition shared by the IQ synthesizer and the
/// analytic phase model.
std::vector<PathComponent> channel_paths(const RigidState& s, const TagLayout& layout,
                                         const std::vector<MultipathRay>& rays,
                                         const ArrayGeometry& arr, const LinkParams& link);

struct RxFrame {
  std::vector<IqBuffer> antennas;
  int channel = 0;
  std::array<bool, kTagCount> visible{true, true, true, true};
};

/// Synthesizes one chirp period per antenna, plus complex white noise of
/// total power noise_sigma^2 per sample, seeded by (seed, channel, antenna).
RxFrame propagate(const ChirpConfig& excitation, int channel, const RigidState& s,
                  const TagLayout& layout, const std::vector<MultipathRay>& rays,
                  const ArrayGeometry& arr, const LinkParams& link, double noise_sigma,
                  std::uint64_t seed);

/// Interleaved little-endian float32 I/Q, antennas back to back, plus a JSON sidecar.
void write_raw_frame(const std::filesystem::path& stem, const RxFrame& frame, std::uint64_t seed);
RxFrame read_raw_frame(const std::filesystem::path& stem);

}  // namespace chirpnav
