#include <gtest/gtest.h>

#include <chirpnav/channel_sim.hpp>
#include <chirpnav/so3.hpp>

#include "oracles.hpp"

#include <filesystem>

using namespace chirpnav;

namespace {

ChirpConfig excitation() {
  ChirpConfig c;
  c.sf = 9;
  c.bw = 500e3;
  c.fs = default_sample_rate(c.bw, 4e6);
  return c;
}

ArrayGeometry array_at_origin() {
  ArrayGeometry a;
  return a;
}

RigidState hovering_at(const Vec3& p, double yaw = 0.0) {
  RigidState s;
  s.p = p;
  s.q = so3::from_yaw(yaw);
  return s;
}

DechirpOptions near_zero() {
  DechirpOptions o;
  o.search_half_width = 64;
  return o;
}

ChirpConfig tag_cfg(const ChirpConfig& c, const TagLayout& l, int tag) {
  ChirpConfig t = c;
  t.f0 = l.shift_hz[static_cast<std::size_t>(tag)];
  return t;
}

}  // namespace

TEST(Doppler, ZeroVelocityGivesZeroShift) {
  const auto d = doppler_shift(Vec3(1, 0, 0), Vec3::Zero(), Vec3::Zero(), 900e6);
  EXPECT_EQ(d.translational_hz, 0.0);
  EXPECT_EQ(d.rotational_hz, 0.0);
}

TEST(Doppler, ThreeMetresPerSecondAt900MHz) {
  const auto d = doppler_shift(Vec3(0, 1, 0), Vec3(0, 3, 0), Vec3::Zero(), 900e6);
  EXPECT_NEAR(d.translational_hz, 900e6 * 3.0 / kSpeedOfLight, 1e-12);
  EXPECT_NEAR(d.translational_hz, 9.006, 1e-3);
}

TEST(Doppler, PerpendicularVelocitiesGiveZero) {
  const auto d = doppler_shift(Vec3(0, 0, 1), Vec3(2, -1, 0), Vec3(0.3, 0.4, 0), 900e6);
  EXPECT_EQ(d.translational_hz, 0.0);
  EXPECT_EQ(d.rotational_hz, 0.0);
}

TEST(Doppler, NonUnitDirectionIsAContractViolation) {
  EXPECT_THROW(doppler_shift(Vec3(1.1, 0, 0), Vec3::Zero(), Vec3::Zero(), 900e6), ContractViolation);
}

TEST(ChannelSim, StationaryPeakEncodesOnlyTimingOffset) {
  const auto c = excitation();
  const auto layout = TagLayout::standard();
  const auto s = hovering_at(Vec3(12.0, 3.0, 1.0));
  const auto frame = propagate(c, 6, s, layout, {}, array_at_origin(), {}, 0.0, 1);
  const double tau = 2.0 * s.p.norm() / kSpeedOfLight;
  for (int tag = 0; tag < kTagCount; ++tag) {
    const auto cfg = tag_cfg(c, layout, tag);
    const auto r = dechirp(frame.antennas[0], cfg, near_zero());
    EXPECT_NEAR(r.frequency_hz(cfg), -cfg.slope() * tau, 1e-6) << tag;
  }
}

TEST(ChannelSim, PureYawSeparatesOpposingTagsByTwiceRotationalShift) {
  const auto c = excitation();
  const auto layout = TagLayout::standard();
  auto s = hovering_at(Vec3(15.0, -4.0, 0.0), 0.3);
  s.omega = Vec3(0, 0, 1.5);
  LinkParams link;
  link.channel_hz = 900e6;
  const auto frame = propagate(c, 6, s, layout, {}, array_at_origin(), link, 0.0, 1);
  const auto kin = tag_world_positions(s, layout);
  const Vec3 u_p = -s.p.normalized();
  const double dfr = doppler_shift(u_p, Vec3::Zero(), kin.rotational[0], 900e6).rotational_hz;
  ASSERT_GT(std::abs(dfr), 0.5);
  const auto c1 = tag_cfg(c, layout, 0), c1p = tag_cfg(c, layout, 1);
  const double b1 = dechirp(frame.antennas[0], c1, near_zero()).fractional_bin;
  const double b1p = dechirp(frame.antennas[0], c1p, near_zero()).fractional_bin;
  EXPECT_NEAR(b1 - b1p, 2.0 * dfr * c.duration(), 1e-5);
}

TEST(ChannelSim, BroadsideGivesEqualAntennaPhases) {
  const auto paths = channel_paths(hovering_at(Vec3(20.0, 0.0, 0.0)), TagLayout::standard(), {},
                                   array_at_origin(), {});
  for (const auto& pc : paths)
    for (const auto& g : pc.antenna_gain) EXPECT_NEAR(std::abs(g - pc.antenna_gain[0]), 0.0, 1e-12);
}

TEST(ChannelSim, AdjacentAntennaPhaseFollowsSteeringVector) {
  const auto arr = array_at_origin();
  LinkParams link;
  link.channel_hz = 903e6;
  for (double deg : {-50.0, -10.0, 25.0, 60.0}) {
    const double phi = deg2rad(deg);
    const auto paths = channel_paths(hovering_at(20.0 * Vec3(std::cos(phi), std::sin(phi), 0.0)),
                                     TagLayout::standard(), {}, arr, link);
    const double expected = -arr.eta(link.channel_hz) * std::sin(phi);
    for (const auto& pc : paths)
      for (std::size_t m = 1; m < pc.antenna_gain.size(); ++m)
        EXPECT_NEAR(oracle::angle_diff(std::arg(pc.antenna_gain[m] / pc.antenna_gain[m - 1]), expected), 0.0, 1e-6);
  }
}

TEST(ChannelSim, RfPhaseFollowsRoundTrip) {
  const auto s = hovering_at(Vec3(10.0, 0.0, 0.0));
  LinkParams link;
  link.channel_hz = 901.08e6;
  const auto paths = channel_paths(s, TagLayout::standard(), {}, array_at_origin(), link);
  const double expected = -kTwoPi * link.channel_hz * 20.0 / kSpeedOfLight;
  EXPECT_NEAR(oracle::angle_diff(std::arg(paths[0].antenna_gain[0]), expected), 0.0, 1e-9);
}

TEST(ChannelSim, ReceivedPowerScalesWithSumOfRayGains) {
  auto c = excitation();
  const auto layout = TagLayout::standard();
  const auto s = hovering_at(Vec3(10.0, 0.0, 0.0));
  // Excess paths that are whole multiples of c/bw keep every ray on its own bin.
  const double one_bin_path = kSpeedOfLight / c.bw;
  const std::vector<MultipathRay> rays{{one_bin_path, Complex(0.5, 0.2), 0.0, -1},
                                       {3.0 * one_bin_path, Complex(0.0, -0.3), 0.0, 2}};
  LinkParams link;
  link.amplitude = 0.7;
  const auto frame = propagate(c, 6, s, layout, rays, array_at_origin(), link, 0.0, 1);
  double expected = 0.0;
  for (int tag = 0; tag < kTagCount; ++tag) {
    double sum = 1.0 + std::norm(rays[0].gain);
    if (tag == 2) sum += std::norm(rays[1].gain);
    expected += link.amplitude * link.amplitude * sum;
  }
  for (const auto& buf : frame.antennas) {
    double p = 0.0;
    for (const auto& x : buf.samples) p += std::norm(x);
    p /= static_cast<double>(buf.size());
    EXPECT_NEAR(p / expected, 1.0, 1e-6);
  }
}

TEST(ChannelSim, NoiseHasRequestedPowerAndIsSeeded) {
  const auto c = excitation();
  LinkParams link;
  link.visible = {false, false, false, false};
  const auto s = hovering_at(Vec3(10.0, 0.0, 0.0));
  const auto a = propagate(c, 3, s, TagLayout::standard(), {}, array_at_origin(), link, 2.0, 42);
  const auto b = propagate(c, 3, s, TagLayout::standard(), {}, array_at_origin(), link, 2.0, 42);
  double p = 0.0;
  for (const auto& x : a.antennas[0].samples) p += std::norm(x);
  p /= static_cast<double>(a.antennas[0].size());
  EXPECT_NEAR(p, 4.0, 0.2);
  EXPECT_EQ(a.antennas[1].samples, b.antennas[1].samples);
  EXPECT_NE(a.antennas[0].samples, a.antennas[1].samples);
}

TEST(ChannelSim, RawFrameRoundTrips) {
  const auto c = excitation();
  const auto frame = propagate(c, 4, hovering_at(Vec3(5, 1, 0)), TagLayout::standard(), {},
                               array_at_origin(), {}, 0.1, 9);
  const auto dir = std::filesystem::temp_directory_path() / "chirpnav_raw_frame_test";
  std::filesystem::create_directories(dir);
  write_raw_frame(dir / "frame", frame, 9);
  const auto back = read_raw_frame(dir / "frame");
  ASSERT_EQ(back.antennas.size(), frame.antennas.size());
  EXPECT_EQ(back.channel, 4);
  EXPECT_EQ(back.antennas[0].fs, c.fs);
  for (std::size_t m = 0; m < frame.antennas.size(); ++m)
    for (std::size_t i = 0; i < frame.antennas[m].size(); i += 97)
      EXPECT_NEAR(std::abs(back.antennas[m].samples[i] - frame.antennas[m].samples[i]), 0.0, 1e-6);
  std::filesystem::remove_all(dir);
}

TEST(ChannelPlan, CenterChannelSitsAtCarrier) {
  ChannelPlan plan;
  EXPECT_EQ(plan.frequency(6), 900e6);
  EXPECT_NEAR(plan.frequency(12) - plan.frequency(0), 12 * 2.16e6, 1e-3);
  plan.channels = {3, 2};
  EXPECT_THROW(plan.validate(), ConfigError);
}
