// chirpnav command-line front end: simulate, sweep, metrics.

#include <chirpnav/pipeline.hpp>

#include <CLI11.hpp>

#include <iostream>
#include <sstream>

namespace {

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kConfigError = 2;

std::vector<double> parse_values(const std::string& list) {
  std::vector<double> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw chirpnav::ConfigError("bad sweep value '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw chirpnav::ConfigError("no sweep values given");
  return out;
}

void print_summary(const chirpnav::MetricsReport& m) {
  std::cout << "position rmse " << m.position_rmse_m << " m, raw " << m.raw_position_rmse_m << " m, orientation "
            << m.orientation_mean_deg << " deg, scored " << m.scored_epochs << "/" << m.epochs << " epochs\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"chirpnav: backscatter-inertial MAV navigation simulator"};
  app.require_subcommand(1);

  std::string config, out, truth, estimate, param, values;
  std::uint64_t seed = 0;
  std::size_t warmup = 30;

  auto* sim = app.add_subcommand("simulate", "run one scenario and write CSV/JSON artifacts");
  sim->add_option("--config", config, "run config JSON")->required();
  sim->add_option("--out", out, "output directory (overrides output_dir)");
  sim->add_option("--seed", seed, "seed (overrides the config)");

  auto* sweep = app.add_subcommand("sweep", "run one scenario per parameter value");
  sweep->add_option("--config", config, "run config JSON")->required();
  sweep->add_option("--param", param, "speed | distance | wall_db | snr | window")->required();
  sweep->add_option("--values", values, "comma-separated values")->required();
  sweep->add_option("--out", out, "output directory (overrides output_dir)");

  auto* met = app.add_subcommand("metrics", "compare an estimate CSV against ground truth");
  met->add_option("--truth", truth, "ground_truth.csv")->required();
  met->add_option("--estimate", estimate, "estimate.csv")->required();
  met->add_option("--warmup", warmup, "epochs excluded at the start")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*sim) {
      auto cfg = chirpnav::RunConfig::load(config);
      if (sim->count("--seed")) cfg.scenario.seed = seed;
      if (!out.empty()) cfg.output_dir = out;
      const auto res = chirpnav::run_pipeline(cfg);
      chirpnav::write_artifacts(cfg.output_dir, cfg, res);
      print_summary(res.metrics);
      if (res.exit_code != 0) std::cerr << "chirpnav: " << res.message << "\n";
      return res.exit_code;
    }
    if (*sweep) {
      auto cfg = chirpnav::RunConfig::load(config);
      const auto vals = parse_values(values);
      const auto dir = out.empty() ? cfg.output_dir : std::filesystem::path(out);
      const auto rows = chirpnav::run_sweep(cfg, param, vals, dir);
      for (const auto& r : rows) {
        std::cout << param << "=" << r.value << " exit=" << r.exit_code << ": ";
        print_summary(r.metrics);
      }
      return kOk;
    }
    if (*met) {
      const auto m = chirpnav::metrics_from_csv(truth, estimate, warmup);
      std::cout << m.to_json().dump(2) << "\n";
      return kOk;
    }
  } catch (const chirpnav::ConfigError& e) {
    std::cerr << "chirpnav: config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "chirpnav: " << e.what() << "\n";
    return kFailure;
  }
  return kOk;
}
