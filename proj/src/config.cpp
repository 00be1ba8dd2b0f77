#include "chirpnav/pipeline.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace chirpnav {

using nlohmann::json;

PipelineMode pipeline_mode_from_string(const std::string& s) {
  if (s == "iq") return PipelineMode::iq;
  if (s == "phases") return PipelineMode::phases;
  if (s == "features") return PipelineMode::features;
  throw ConfigError("unknown pipeline mode '" + s + "'");
}

std::string to_string(PipelineMode m) {
  switch (m) {
    case PipelineMode::iq: return "iq";
    case PipelineMode::phases: return "phases";
    case PipelineMode::features: return "features";
  }
  return "?";
}

double LinkBudget::snr_db(double range_m) const {
  return snr_at_1m_db - path_loss_db_per_decade * std::log10(std::max(range_m, 1e-3)) - wall_db;
}

ChirpConfig RunConfig::chirp() const {
  ChirpConfig c;
  c.sf = sf;
  c.bw = bw_hz;
  c.fc = plan.fc;
  c.fs = default_sample_rate(bw_hz, tags().max_shift());
  return c;
}

ArrayGeometry RunConfig::array() const {
  ArrayGeometry a;
  a.m = antennas;
  a.spacing_m = antenna_spacing_m;
  a.position = scenario.controller;
  return a;
}

TagLayout RunConfig::tags() const { return TagLayout::standard(tag_diameter_m); }

void RunConfig::validate() const {
  scenario.validate();
  chirp().validate();
  plan.validate();
  array().validate();
  tags().validate();
  std::ostringstream why;
  if (!(tag_diameter_m > 0.0)) why << "radio.tag_diameter_m must be > 0; ";
  if (!(max_gap_s > 0.0)) why << "max_gap_s must be > 0; ";
  if (!(link.path_loss_db_per_decade >= 0.0) || !(link.wall_db >= 0.0)) why << "link losses must be >= 0; ";
  const auto& s = sensing;
  if (!(s.range_sigma_m > 0.0) || !(s.angle_sigma_deg > 0.0) || !(s.yaw_sigma_deg > 0.0))
    why << "sensing sigmas must be > 0; ";
  if (s.range.ifft_len < 16 || (s.range.ifft_len & (s.range.ifft_len - 1)) != 0)
    why << "sensing.ifft_len must be a power of two >= 16; ";
  if (!(s.range.threshold > 0.0 && s.range.threshold < 1.0)) why << "sensing.range_threshold must be in (0, 1); ";
  if (s.range.min_channels < 2) why << "sensing.min_channels must be >= 2; ";
  if (!(s.angle.grid_step_deg > 0.0 && s.angle.grid_step_deg <= 5.0)) why << "sensing.grid_step_deg must be in (0, 5]; ";
  if (!(s.angle.eigen_gap > 1.0)) why << "sensing.eigen_gap must be > 1; ";
  if (!(s.angle.signal_floor >= 0.0 && s.angle.signal_floor < 1.0)) why << "sensing.signal_floor must be in [0, 1); ";
  if (!(s.omega_min_radps >= 0.0)) why << "sensing.omega_min_radps must be >= 0; ";
  if (!(s.feature_noise_scale >= 0.0)) why << "sensing.feature_noise_scale must be >= 0; ";
  const auto& v = solver;
  if (v.window < 3) why << "solver.window must be >= 3; ";
  if (v.max_iterations < 1) why << "solver.max_iterations must be >= 1; ";
  if (!(v.step_tolerance > 0.0)) why << "solver.step_tolerance must be > 0; ";
  if (v.substeps < 1) why << "solver.substeps must be >= 1; ";
  if (!(v.yaw_prior_sigma_rad > 0.0)) why << "solver.yaw_prior_sigma_rad must be > 0; ";
  if (!(v.imu.accel_density > 0.0) || !(v.imu.gyro_density > 0.0)) why << "solver IMU densities must be > 0; ";
  if (!why.str().empty()) throw ConfigError("invalid run config: " + why.str());
}

namespace {

// Strict reader: every key must be known, every value must have the right type.
class Obj {
 public:
  Obj(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  void allow(std::initializer_list<const char*> keys) const {
    std::set<std::string> ok(keys.begin(), keys.end());
    for (const auto& [k, v] : j_.items())
      if (!ok.count(k)) throw ConfigError(where_ + ": unknown key '" + k + "'");
  }

  bool has(const char* key) const { return j_.contains(key); }
  const json& at(const char* key) const { return j_.at(key); }
  std::string path(const char* key) const { return where_ + "." + key; }

  void num(const char* key, double& out) const {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_number()) throw ConfigError(path(key) + ": expected a number");
    out = v.get<double>();
    if (!std::isfinite(out)) throw ConfigError(path(key) + ": must be finite");
  }

  template <class I>
  void integer(const char* key, I& out) const {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_number_integer()) throw ConfigError(path(key) + ": expected an integer");
    if constexpr (std::is_unsigned_v<I>) {
      if (v.is_number_unsigned() || v.get<long long>() >= 0) {
        out = v.get<I>();
        return;
      }
      throw ConfigError(path(key) + ": must be >= 0");
    } else {
      out = v.get<I>();
    }
  }

  void str(const char* key, std::string& out) const {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_string()) throw ConfigError(path(key) + ": expected a string");
    out = v.get<std::string>();
  }

  void vec3(const char* key, Vec3& out) const {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_array() || v.size() != 3) throw ConfigError(path(key) + ": expected 3 numbers");
    for (int i = 0; i < 3; ++i) {
      if (!v[static_cast<std::size_t>(i)].is_number()) throw ConfigError(path(key) + ": expected 3 numbers");
      out[i] = v[static_cast<std::size_t>(i)].get<double>();
    }
  }

 private:
  const json& j_;
  std::string where_;
};

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

RunConfig parse(const json& j) {
  RunConfig c;
  const Obj root(j, "config");
  root.allow({"seed", "output_dir", "mode", "max_gap_s", "scenario", "noise", "radio", "link", "sensing", "solver"});
  root.integer("seed", c.scenario.seed);
  std::string out = c.output_dir.string();
  root.str("output_dir", out);
  c.output_dir = out;
  if (root.has("mode")) {
    std::string m;
    root.str("mode", m);
    c.mode = pipeline_mode_from_string(m);
  }
  root.num("max_gap_s", c.max_gap_s);

  if (root.has("scenario")) {
    const Obj s(root.at("scenario"), "scenario");
    s.allow({"trajectory", "duration_s", "speed_mps", "radius_m", "side_m", "length_m", "accel_max_mps2",
             "yaw_rate_radps", "hover_s", "ramp_s", "initial_yaw_rad", "center_m", "controller_m", "imu_rate_hz",
             "feature_rate_hz"});
    auto& sc = c.scenario;
    if (s.has("trajectory")) {
      std::string k;
      s.str("trajectory", k);
      sc.kind = trajectory_from_string(k);
    }
    s.num("duration_s", sc.duration_s);
    s.num("speed_mps", sc.speed_mps);
    s.num("radius_m", sc.radius_m);
    s.num("side_m", sc.side_m);
    s.num("length_m", sc.length_m);
    s.num("accel_max_mps2", sc.accel_max_mps2);
    s.num("yaw_rate_radps", sc.yaw_rate_radps);
    s.num("hover_s", sc.hover_s);
    s.num("ramp_s", sc.ramp_s);
    s.num("initial_yaw_rad", sc.initial_yaw_rad);
    s.vec3("center_m", sc.center);
    s.vec3("controller_m", sc.controller);
    s.num("imu_rate_hz", sc.imu_rate_hz);
    s.num("feature_rate_hz", sc.feature_rate_hz);
  }

  if (root.has("noise")) {
    const Obj n(root.at("noise"), "noise");
    n.allow({"phase_sigma_rad", "bin_sigma_hz", "accel_density", "gyro_density", "baro_sigma_m", "cfo_hz",
             "multipath"});
    auto& nz = c.scenario.noise;
    n.num("phase_sigma_rad", nz.phase_sigma_rad);
    n.num("bin_sigma_hz", nz.bin_sigma_hz);
    n.num("accel_density", nz.accel_density);
    n.num("gyro_density", nz.gyro_density);
    n.num("baro_sigma_m", nz.baro_sigma_m);
    if (n.has("cfo_hz")) {
      const auto& v = n.at("cfo_hz");
      if (!v.is_array() || v.size() != kTagCount) throw ConfigError("noise.cfo_hz: expected 4 numbers");
      for (std::size_t i = 0; i < kTagCount; ++i) {
        if (!v[i].is_number()) throw ConfigError("noise.cfo_hz: expected 4 numbers");
        nz.cfo_hz[i] = v[i].get<double>();
      }
    }
    if (n.has("multipath")) {
      const auto& rays = n.at("multipath");
      if (!rays.is_array()) throw ConfigError("noise.multipath: expected an array");
      for (std::size_t i = 0; i < rays.size(); ++i) {
        const Obj r(rays[i], "noise.multipath[" + std::to_string(i) + "]");
        r.allow({"excess_path_m", "gain", "gain_phase_rad", "azimuth_offset_rad", "tag"});
        MultipathRay ray;
        double gain = std::abs(ray.gain), phase = 0.0;
        r.num("excess_path_m", ray.excess_path_m);
        r.num("gain", gain);
        r.num("gain_phase_rad", phase);
        r.num("azimuth_offset_rad", ray.azimuth_offset_rad);
        r.integer("tag", ray.tag);
        ray.gain = std::polar(gain, phase);
        nz.rays.push_back(ray);
      }
    }
  }

  if (root.has("radio")) {
    const Obj r(root.at("radio"), "radio");
    r.allow({"sf", "bw_hz", "fc_hz", "channel_spacing_hz", "channels", "antennas", "antenna_spacing_m",
             "tag_diameter_m"});
    r.integer("sf", c.sf);
    r.num("bw_hz", c.bw_hz);
    r.num("fc_hz", c.plan.fc);
    r.num("channel_spacing_hz", c.plan.spacing_hz);
    if (r.has("channels")) {
      const auto& v = r.at("channels");
      if (!v.is_array()) throw ConfigError("radio.channels: expected an array of integers");
      c.plan.channels.clear();
      for (const auto& x : v) {
        if (!x.is_number_integer()) throw ConfigError("radio.channels: expected an array of integers");
        c.plan.channels.push_back(x.get<int>());
      }
    }
    r.integer("antennas", c.antennas);
    r.num("antenna_spacing_m", c.antenna_spacing_m);
    r.num("tag_diameter_m", c.tag_diameter_m);
  }

  if (root.has("link")) {
    const Obj l(root.at("link"), "link");
    l.allow({"snr_at_1m_db", "path_loss_db_per_decade", "wall_db"});
    l.num("snr_at_1m_db", c.link.snr_at_1m_db);
    l.num("path_loss_db_per_decade", c.link.path_loss_db_per_decade);
    l.num("wall_db", c.link.wall_db);
  }

  if (root.has("sensing")) {
    const Obj s(root.at("sensing"), "sensing");
    s.allow({"range_sigma_m", "angle_sigma_deg", "yaw_sigma_deg", "ifft_len", "range_threshold", "min_channels",
             "grid_step_deg", "eigen_gap", "signal_floor", "omega_min_radps",
             "feature_noise_scale"});
    auto& se = c.sensing;
    s.num("range_sigma_m", se.range_sigma_m);
    s.num("angle_sigma_deg", se.angle_sigma_deg);
    s.num("yaw_sigma_deg", se.yaw_sigma_deg);
    s.integer("ifft_len", se.range.ifft_len);
    s.num("range_threshold", se.range.threshold);
    s.integer("min_channels", se.range.min_channels);
    s.num("grid_step_deg", se.angle.grid_step_deg);
    s.num("eigen_gap", se.angle.eigen_gap);
    s.num("signal_floor", se.angle.signal_floor);
    s.num("omega_min_radps", se.omega_min_radps);
    s.num("feature_noise_scale", se.feature_noise_scale);
  }

  if (root.has("solver")) {
    const Obj s(root.at("solver"), "solver");
    s.allow({"window", "max_iterations", "step_tolerance", "substeps", "accel_density", "gyro_density",
             "yaw_prior_sigma_rad"});
    auto& v = c.solver;
    s.integer("window", v.window);
    s.integer("max_iterations", v.max_iterations);
    s.num("step_tolerance", v.step_tolerance);
    s.integer("substeps", v.substeps);
    s.num("accel_density", v.imu.accel_density);
    s.num("gyro_density", v.imu.gyro_density);
    s.num("yaw_prior_sigma_rad", v.yaw_prior_sigma_rad);
  }

  c.validate();
  return c;
}

}  // namespace

RunConfig RunConfig::from_json(const json& j) {
  try {
    return parse(j);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return from_json(j);
}

json RunConfig::to_json() const {
  const auto& sc = scenario;
  const auto& nz = sc.noise;
  json rays = json::array();
  for (const auto& r : nz.rays)
    rays.push_back({{"excess_path_m", r.excess_path_m},
                    {"gain", std::abs(r.gain)},
                    {"gain_phase_rad", std::arg(r.gain)},
                    {"azimuth_offset_rad", r.azimuth_offset_rad},
                    {"tag", r.tag}});
  json j;
  j["seed"] = sc.seed;
  j["output_dir"] = output_dir.string();
  j["mode"] = to_string(mode);
  j["max_gap_s"] = max_gap_s;
  j["scenario"] = {{"trajectory", to_string(sc.kind)},
                   {"duration_s", sc.duration_s},
                   {"speed_mps", sc.speed_mps},
                   {"radius_m", sc.radius_m},
                   {"side_m", sc.side_m},
                   {"length_m", sc.length_m},
                   {"accel_max_mps2", sc.accel_max_mps2},
                   {"yaw_rate_radps", sc.yaw_rate_radps},
                   {"hover_s", sc.hover_s},
                   {"ramp_s", sc.ramp_s},
                   {"initial_yaw_rad", sc.initial_yaw_rad},
                   {"center_m", vec_json(sc.center)},
                   {"controller_m", vec_json(sc.controller)},
                   {"imu_rate_hz", sc.imu_rate_hz},
                   {"feature_rate_hz", sc.feature_rate_hz}};
  j["noise"] = {{"phase_sigma_rad", nz.phase_sigma_rad},
                {"bin_sigma_hz", nz.bin_sigma_hz},
                {"accel_density", nz.accel_density},
                {"gyro_density", nz.gyro_density},
                {"baro_sigma_m", nz.baro_sigma_m},
                {"cfo_hz", nz.cfo_hz},
                {"multipath", rays}};
  j["radio"] = {{"sf", sf},
                {"bw_hz", bw_hz},
                {"fc_hz", plan.fc},
                {"channel_spacing_hz", plan.spacing_hz},
                {"channels", plan.channels},
                {"antennas", antennas},
                {"antenna_spacing_m", antenna_spacing_m},
                {"tag_diameter_m", tag_diameter_m}};
  j["link"] = {{"snr_at_1m_db", link.snr_at_1m_db},
               {"path_loss_db_per_decade", link.path_loss_db_per_decade},
               {"wall_db", link.wall_db}};
  j["sensing"] = {{"range_sigma_m", sensing.range_sigma_m},
                  {"angle_sigma_deg", sensing.angle_sigma_deg},
                  {"yaw_sigma_deg", sensing.yaw_sigma_deg},
                  {"ifft_len", sensing.range.ifft_len},
                  {"range_threshold", sensing.range.threshold},
                  {"min_channels", sensing.range.min_channels},
                  {"grid_step_deg", sensing.angle.grid_step_deg},
                  {"eigen_gap", sensing.angle.eigen_gap},
                  {"signal_floor", sensing.angle.signal_floor},
                  {"omega_min_radps", sensing.omega_min_radps},
                  {"feature_noise_scale", sensing.feature_noise_scale}};
  j["solver"] = {{"window", solver.window},
                 {"max_iterations", solver.max_iterations},
                 {"step_tolerance", solver.step_tolerance},
                 {"substeps", solver.substeps},
                 {"yaw_prior_sigma_rad", solver.yaw_prior_sigma_rad},
                 {"accel_density", solver.imu.accel_density},
                 {"gyro_density", solver.imu.gyro_density}};
  return j;
}

}  // namespace chirpnav
