#include "chirpnav/scene.hpp"

#include "chirpnav/so3.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace chirpnav {

TagLayout TagLayout::standard(double diameter) {
  TagLayout l;
  l.diameter = diameter;
  const double r = 0.5 * diameter;
  l.body = {Vec3(r, 0, 0), Vec3(-r, 0, 0), Vec3(0, r, 0), Vec3(0, -r, 0)};
  return l;
}

void TagLayout::validate() const {
  if (!(diameter > 0.0)) throw ConfigError("tag layout diameter must be > 0");
  const double r = 0.5 * diameter;
  for (const auto& p : body)
    if (std::abs(p.norm() - r) > 1e-9) throw ConfigError("tag positions must lie at radius D/2");
  if ((body[0] + body[1]).norm() > 1e-9 || (body[2] + body[3]).norm() > 1e-9)
    throw ConfigError("opposing tags must be diametrically opposed");
  if (std::abs(body[0].dot(body[2])) > 1e-9) throw ConfigError("tag pairs must be orthogonal");
  for (int i = 0; i < kTagCount; ++i)
    for (int j = i + 1; j < kTagCount; ++j)
      if (shift_hz[i] == shift_hz[j]) throw ConfigError("tag shifts must be pairwise distinct");
}

double TagLayout::max_shift() const {
  double m = 0.0;
  for (double s : shift_hz) m = std::max(m, std::abs(s));
  return m;
}

TagKinematics tag_world_positions(const RigidState& s, const TagLayout& layout) {
  TagKinematics k;
  const Mat3 r = s.q.toRotationMatrix();
  for (int i = 0; i < kTagCount; ++i) {
    const Vec3& b = layout.body[static_cast<std::size_t>(i)];
    k.position[i] = s.p + r * b;
    k.rotational[i] = r * s.omega.cross(b);
    k.velocity[i] = s.v + k.rotational[i];
  }
  return k;
}

TrajectoryKind trajectory_from_string(const std::string& s) {
  if (s == "stationary") return TrajectoryKind::stationary;
  if (s == "line") return TrajectoryKind::line;
  if (s == "circle") return TrajectoryKind::circle;
  if (s == "square") return TrajectoryKind::square;
  if (s == "yaw_ramp") return TrajectoryKind::yaw_ramp;
  throw ConfigError("unknown trajectory kind '" + s + "'");
}

std::string to_string(TrajectoryKind k) {
  switch (k) {
    case TrajectoryKind::stationary: return "stationary";
    case TrajectoryKind::line: return "line";
    case TrajectoryKind::circle: return "circle";
    case TrajectoryKind::square: return "square";
    case TrajectoryKind::yaw_ramp: return "yaw_ramp";
  }
  return "?";
}

void Scenario::validate() const {
  std::ostringstream why;
  if (!(duration_s > 0.0)) why << "duration_s must be > 0; ";
  if (!(speed_mps >= 0.0)) why << "speed_mps must be >= 0; ";
  if (kind == TrajectoryKind::circle && !(radius_m > 0.0)) why << "radius_m must be > 0; ";
  if (kind == TrajectoryKind::square && !(side_m > 0.0)) why << "side_m must be > 0; ";
  if (kind == TrajectoryKind::line && !(length_m > 0.0)) why << "length_m must be > 0; ";
  if (!(accel_max_mps2 > 0.0)) why << "accel_max_mps2 must be > 0; ";
  if (!(hover_s >= 0.0) || !(ramp_s >= 0.0)) why << "hover_s and ramp_s must be >= 0; ";
  if (!(imu_rate_hz > 0.0) || !(feature_rate_hz > 0.0)) why << "rates must be > 0; ";
  else {
    const double ratio = imu_rate_hz / feature_rate_hz;
    if (std::abs(ratio - std::round(ratio)) > 1e-9 || ratio < 1.0)
      why << "imu_rate_hz must be an integer multiple of feature_rate_hz; ";
  }
  const auto& n = noise;
  if (n.phase_sigma_rad < 0 || n.bin_sigma_hz < 0 || n.accel_density < 0 || n.gyro_density < 0 ||
      n.baro_sigma_m < 0)
    why << "noise parameters must be >= 0; ";
  for (const auto& r : n.rays) {
    if (!(r.excess_path_m >= 0.0)) why << "ray excess_path_m must be >= 0; ";
    if (std::abs(r.gain) > 1.0) why << "ray |gain| must be <= 1; ";
    if (r.tag < -1 || r.tag >= kTagCount) why << "ray tag must be -1..3; ";
  }
  if (!why.str().empty()) throw ConfigError("invalid scenario: " + why.str());
}

namespace {

// Distance, speed and acceleration along a path for a smoothstep ramp to
// `rate` over `ramp` seconds, then constant rate.
struct Profile {
  double s = 0.0, ds = 0.0, dds = 0.0;
};

Profile smooth_ramp(double tau, double rate, double ramp) {
  if (tau <= 0.0) return {};
  if (ramp <= 0.0) return {rate * tau, rate, 0.0};
  if (tau < ramp) {
    const double x = tau / ramp;
    return {rate * ramp * (x * x * x - 0.5 * x * x * x * x), rate * (3 * x * x - 2 * x * x * x),
            rate / ramp * (6 * x - 6 * x * x)};
  }
  return {rate * ramp * 0.5 + rate * (tau - ramp), rate, 0.0};
}

// Trapezoidal (or triangular) rest-to-rest profile along one straight segment.
struct Segment {
  double length, t_acc, t_cruise, v_peak, accel;
  double total() const { return 2.0 * t_acc + t_cruise; }
  Profile at(double tau) const {
    if (tau < t_acc) return {0.5 * accel * tau * tau, accel * tau, accel};
    const double s_acc = 0.5 * accel * t_acc * t_acc;
    if (tau < t_acc + t_cruise) return {s_acc + v_peak * (tau - t_acc), v_peak, 0.0};
    const double r = std::min(total() - tau, t_acc);
    return {length - 0.5 * accel * r * r, accel * r, -accel};
  }
};

Segment make_segment(double length, double vmax, double accel) {
  Segment s{length, 0, 0, 0, accel};
  if (length <= vmax * vmax / accel) {
    s.v_peak = std::sqrt(length * accel);
    s.t_acc = s.v_peak / accel;
  } else {
    s.v_peak = vmax;
    s.t_acc = vmax / accel;
    s.t_cruise = (length - vmax * vmax / accel) / vmax;
  }
  return s;
}

void fill_yaw(RigidState& st, double yaw, double yaw_rate) {
  st.q = so3::from_yaw(yaw);
  st.omega = Vec3(0.0, 0.0, yaw_rate);
}

RigidState polyline_state(const Scenario& scn, const std::vector<Vec3>& verts, double t) {
  RigidState st;
  st.t = t;
  const double tau = t - scn.hover_s;
  const Profile yaw = smooth_ramp(tau, scn.yaw_rate_radps, scn.ramp_s);
  fill_yaw(st, scn.initial_yaw_rad + yaw.s, yaw.ds);
  st.p = verts.front();
  if (tau <= 0.0 || scn.speed_mps <= 0.0) return st;

  std::vector<Segment> segs;
  double loop = 0.0;
  for (std::size_t i = 0; i < verts.size(); ++i) {
    const Vec3& a = verts[i];
    const Vec3& b = verts[(i + 1) % verts.size()];
    segs.push_back(make_segment((b - a).norm(), scn.speed_mps, scn.accel_max_mps2));
    loop += segs.back().total();
  }
  double r = std::fmod(tau, loop);
  for (std::size_t i = 0; i < segs.size(); ++i) {
    if (r < segs[i].total() || i + 1 == segs.size()) {
      const Vec3& a = verts[i];
      const Vec3& b = verts[(i + 1) % verts.size()];
      const Vec3 dir = (b - a).normalized();
      const Profile pr = segs[i].at(std::min(r, segs[i].total()));
      st.p = a + pr.s * dir;
      st.v = pr.ds * dir;
      st.a = pr.dds * dir;
      return st;
    }
    r -= segs[i].total();
  }
  return st;
}

// yaw_ramp: rate 0.2 -> 1.5 -> 0.2 rad/s at 0.05 rad/s^2 after the hover.
constexpr double kRampLow = 0.2, kRampHigh = 1.5, kRampAccel = 0.05;

void yaw_ramp_at(double tau, double& yaw, double& rate) {
  const double t_up = (kRampHigh - kRampLow) / kRampAccel;
  if (tau <= 0.0) {
    yaw = 0.0;
    rate = 0.0;
    return;
  }
  if (tau <= t_up) {
    rate = kRampLow + kRampAccel * tau;
    yaw = kRampLow * tau + 0.5 * kRampAccel * tau * tau;
    return;
  }
  const double up_yaw = kRampLow * t_up + 0.5 * kRampAccel * t_up * t_up;
  const double td = std::min(tau - t_up, t_up);
  rate = kRampHigh - kRampAccel * td;
  yaw = up_yaw + kRampHigh * td - 0.5 * kRampAccel * td * td;
  if (tau > 2.0 * t_up) {
    rate = kRampLow;
    yaw += kRampLow * (tau - 2.0 * t_up);
  }
}

}  // namespace

RigidState sample_state(const Scenario& scn, double t) {
  if (!(t >= -1e-12 && t <= scn.duration_s + 1e-9))
    throw RangeError("sample_state: t=" + std::to_string(t) + " outside [0, duration]");
  t = std::clamp(t, 0.0, scn.duration_s + 1e-9);
  RigidState st;
  st.t = t;
  st.p = scn.center;
  const double tau = t - scn.hover_s;

  switch (scn.kind) {
    case TrajectoryKind::stationary:
      fill_yaw(st, scn.initial_yaw_rad, 0.0);
      break;
    case TrajectoryKind::circle: {
      const double R = scn.radius_m;
      const Profile pr = smooth_ramp(tau, scn.speed_mps, scn.ramp_s);
      const double th = pr.s / R;
      const Vec3 radial(std::cos(th), std::sin(th), 0.0);
      const Vec3 tangent(-std::sin(th), std::cos(th), 0.0);
      st.p = scn.center + R * radial;
      st.v = pr.ds * tangent;
      st.a = pr.dds * tangent - pr.ds * pr.ds / R * radial;
      fill_yaw(st, th + 0.5 * kPi, pr.ds / R);
      break;
    }
    case TrajectoryKind::square: {
      const double h = 0.5 * scn.side_m;
      st = polyline_state(scn,
                          {scn.center + Vec3(h, -h, 0), scn.center + Vec3(h, h, 0),
                           scn.center + Vec3(-h, h, 0), scn.center + Vec3(-h, -h, 0)},
                          t);
      break;
    }
    case TrajectoryKind::line: {
      const double h = 0.5 * scn.length_m;
      st = polyline_state(scn, {scn.center + Vec3(-h, 0, 0), scn.center + Vec3(h, 0, 0)}, t);
      break;
    }
    case TrajectoryKind::yaw_ramp: {
      double yaw = 0.0, rate = 0.0;
      yaw_ramp_at(tau, yaw, rate);
      fill_yaw(st, scn.initial_yaw_rad + yaw, rate);
      break;
    }
  }
  st.t = t;
  return st;
}

ImuSample ideal_imu(const RigidState& s) {
  return {s.t, s.q.toRotationMatrix().transpose() * (s.a + gravity_world()), s.omega};
}

std::vector<ImuSample> synth_imu(const Scenario& scn) {
  const auto count = static_cast<std::size_t>(std::floor(scn.duration_s * scn.imu_rate_hz + 1e-9)) + 1;
  std::mt19937_64 rng(child_seed(scn.seed, 0x494d55));
  std::normal_distribution<double> g(0.0, 1.0);
  const double sa = scn.noise.accel_density * std::sqrt(scn.imu_rate_hz);
  const double sg = scn.noise.gyro_density * std::sqrt(scn.imu_rate_hz);
  std::vector<ImuSample> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const double t = static_cast<double>(k) / scn.imu_rate_hz;
    ImuSample s = ideal_imu(sample_state(scn, t));
    for (int i = 0; i < 3; ++i) s.acc[i] += sa * g(rng);
    for (int i = 0; i < 3; ++i) s.gyro[i] += sg * g(rng);
    out.push_back(s);
  }
  return out;
}

double barometer(const RigidState& s, double sigma, std::mt19937_64& rng) {
  if (sigma <= 0.0) return s.p.z();
  std::normal_distribution<double> g(0.0, sigma);
  return s.p.z() + g(rng);
}

}  // namespace chirpnav
