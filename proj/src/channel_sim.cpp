#include "chirpnav/channel_sim.hpp"

#include "chirpnav/kernels.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <random>

namespace chirpnav {

void ArrayGeometry::validate() const {
  if (m < 2) throw ConfigError("array needs at least 2 antennas");
  if (!(spacing_m > 0.0)) throw ConfigError("array spacing must be > 0");
}

Vec3 ArrayGeometry::element_offset(int i) const {
  if (layout == Layout::linear) return Vec3(0.0, -static_cast<double>(i) * spacing_m, 0.0);
  const double radius = spacing_m / (2.0 * std::sin(kPi / m));
  const double a = kTwoPi * i / m;
  return Vec3(radius * (std::cos(a) - 1.0), radius * std::sin(a), 0.0);
}

void ChannelPlan::validate() const {
  if (!(fc > 0.0) || !(spacing_hz > 0.0)) throw ConfigError("channel plan needs fc, spacing > 0");
  if (channels.empty()) throw ConfigError("channel plan schedules no channels");
  for (std::size_t i = 0; i < channels.size(); ++i) {
    if (channels[i] < 0 || channels[i] >= kChannelCount) throw ConfigError("channel index outside 0..12");
    if (i > 0 && channels[i] <= channels[i - 1]) throw ConfigError("channels must be ascending and unique");
  }
}

DopplerShift doppler_shift(const Vec3& u_p, const Vec3& v_t, const Vec3& v_r, double fc) {
  if (std::abs(u_p.norm() - 1.0) > 1e-6) throw ContractViolation("doppler_shift: u_p is not a unit vector");
  const double k = fc / kSpeedOfLight;
  return {k * u_p.dot(v_t), k * u_p.dot(v_r)};
}

std::vector<PathComponent> channel_paths(const RigidState& s, const TagLayout& layout,
                                         const std::vector<MultipathRay>& rays,
                                         const ArrayGeometry& arr, const LinkParams& link) {
  const Vec3 rel = s.p - arr.position;
  const double r = rel.norm();
  const Vec3 a_hat = rel / r;
  const Vec3 u_p = -a_hat;
  const auto kin = tag_world_positions(s, layout);
  const double kf = kTwoPi * link.channel_hz / kSpeedOfLight;

  std::vector<PathComponent> out;
  for (int tag = 0; tag < kTagCount; ++tag) {
    if (!link.visible[tag]) continue;
    const DopplerShift dop = doppler_shift(u_p, s.v, kin.rotational[tag], link.channel_hz);
    const double tone = layout.shift_hz[tag] + dop.translational_hz + dop.rotational_hz + link.cfo_hz[tag];

    auto add = [&](double excess, Complex gamma, double az_offset) {
      PathComponent pc;
      pc.tag = tag;
      pc.delay_s = (2.0 * r + excess) / kSpeedOfLight;
      pc.tone_hz = tone;
      pc.doppler = dop;
      const Vec3 dir = Eigen::AngleAxisd(az_offset, Vec3::UnitZ()) * a_hat;
      const double rf = -kTwoPi * std::fmod(link.channel_hz * pc.delay_s, 1.0);
      for (int m = 0; m < arr.m; ++m) {
        const double steer = kf * dir.dot(arr.element_offset(m));
        pc.antenna_gain.push_back(link.amplitude * gamma * std::polar(1.0, rf + steer));
      }
      out.push_back(std::move(pc));
    };

    add(0.0, Complex(1.0, 0.0), 0.0);
    for (const auto& ray : rays)
      if (ray.tag < 0 || ray.tag == tag) add(ray.excess_path_m, ray.gain, ray.azimuth_offset_rad);
  }
  return out;
}

RxFrame propagate(const ChirpConfig& excitation, int channel, const RigidState& s,
                  const TagLayout& layout, const std::vector<MultipathRay>& rays,
                  const ArrayGeometry& arr, const LinkParams& link, double noise_sigma,
                  std::uint64_t seed) {
  excitation.validate();
  arr.validate();
  const std::size_t n = excitation.sample_count();
  RxFrame frame;
  frame.channel = channel;
  frame.visible = link.visible;
  frame.antennas.assign(static_cast<std::size_t>(arr.m), IqBuffer{std::vector<Complex>(n), excitation.fs, 0.0});

  std::vector<Complex> unit(n);
  for (const auto& pc : channel_paths(s, layout, rays, arr, link)) {
    std::fill(unit.begin(), unit.end(), Complex{});
    kernels::accumulate_chirp(unit, {Complex(1.0, 0.0), excitation.fs, excitation.bw, excitation.slope(),
                                     pc.delay_s, pc.tone_hz});
    for (int m = 0; m < arr.m; ++m) {
      auto& buf = frame.antennas[static_cast<std::size_t>(m)].samples;
      const Complex g = pc.antenna_gain[static_cast<std::size_t>(m)];
      for (std::size_t i = 0; i < n; ++i) buf[i] += g * unit[i];
    }
  }

  if (noise_sigma > 0.0) {
    for (int m = 0; m < arr.m; ++m) {
      std::mt19937_64 rng(child_seed(seed, static_cast<std::uint64_t>(channel), static_cast<std::uint64_t>(m)));
      std::normal_distribution<double> g(0.0, noise_sigma / std::sqrt(2.0));
      for (auto& x : frame.antennas[static_cast<std::size_t>(m)].samples) x += Complex(g(rng), g(rng));
    }
  }
  return frame;
}

namespace {

static_assert(std::endian::native == std::endian::little, "raw frame I/O assumes a little-endian host");

}  // namespace

void write_raw_frame(const std::filesystem::path& stem, const RxFrame& frame, std::uint64_t seed) {
  if (frame.antennas.empty()) throw ContractViolation("write_raw_frame: empty frame");
  auto iq_path = stem;
  iq_path += ".iq";
  std::ofstream iq(iq_path, std::ios::binary);
  if (!iq) throw std::runtime_error("cannot open " + iq_path.string());
  for (const auto& buf : frame.antennas)
    for (const auto& x : buf.samples) {
      const float v[2] = {static_cast<float>(x.real()), static_cast<float>(x.imag())};
      iq.write(reinterpret_cast<const char*>(v), sizeof v);
    }

  nlohmann::json side;
  side["fs"] = frame.antennas.front().fs;
  side["t0"] = frame.antennas.front().t0;
  side["channel"] = frame.channel;
  side["seed"] = seed;
  side["antennas"] = frame.antennas.size();
  side["samples_per_antenna"] = frame.antennas.front().size();
  side["visible"] = frame.visible;
  auto json_path = stem;
  json_path += ".json";
  std::ofstream(json_path) << side.dump(2) << "\n";
}

RxFrame read_raw_frame(const std::filesystem::path& stem) {
  auto json_path = stem;
  json_path += ".json";
  std::ifstream js(json_path);
  if (!js) throw std::runtime_error("cannot open " + json_path.string());
  const auto side = nlohmann::json::parse(js);
  RxFrame frame;
  frame.channel = side.at("channel").get<int>();
  frame.visible = side.at("visible").get<std::array<bool, kTagCount>>();
  const auto m = side.at("antennas").get<std::size_t>();
  const auto n = side.at("samples_per_antenna").get<std::size_t>();
  const double fs = side.at("fs").get<double>();
  const double t0 = side.at("t0").get<double>();

  auto iq_path = stem;
  iq_path += ".iq";
  std::ifstream iq(iq_path, std::ios::binary);
  if (!iq) throw std::runtime_error("cannot open " + iq_path.string());
  for (std::size_t a = 0; a < m; ++a) {
    IqBuffer buf{std::vector<Complex>(n), fs, t0};
    for (auto& x : buf.samples) {
      float v[2];
      if (!iq.read(reinterpret_cast<char*>(v), sizeof v)) throw LengthError("raw frame truncated");
      x = Complex(v[0], v[1]);
    }
    frame.antennas.push_back(std::move(buf));
  }
  return frame;
}

}  // namespace chirpnav
