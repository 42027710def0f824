// nrsl_sim: run, validate and describe sidelink scenarios.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "nrsl/nrsl.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

int report(const nrsl::Error& e) {
  spdlog::error("{}", e.what());
  return nrsl::is_config_error(e.code()) ? kExitConfig : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  auto logger = spdlog::stderr_color_mt("nrsl");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);

  CLI::App app{"NR sidelink V2X mode 1/mode 2 slot-level simulator"};
  app.require_subcommand(1);

  nrsl::RunConfig run;
  std::optional<std::uint64_t> seed;
  std::optional<double> duration;
  auto* run_cmd = app.add_subcommand("run", "Run a scenario and write CSV results");
  run_cmd->add_option("--config", run.scenario_path, "Scenario file")->required();
  run_cmd->add_option("--seed", seed, "Override the scenario seed");
  run_cmd->add_option("--out", run.out_dir, "Output directory")->capture_default_str();
  run_cmd->add_option("--duration-ms", duration, "Override the scenario duration");
  run_cmd->add_option("--replications", run.replications, "Number of seeded replications")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  run_cmd->add_option("--threads", run.threads, "Worker threads, 0 for all cores")->capture_default_str();
  run_cmd->add_option("--log", run.log_level, "trace|debug|info|warn|error|off")
      ->capture_default_str()
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  std::string validate_path;
  auto* validate_cmd = app.add_subcommand("validate", "Load and validate a scenario");
  validate_cmd->add_option("--config", validate_path, "Scenario file")->required();

  app.add_subcommand("schema", "Print the config schema");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run_cmd) {
      spdlog::set_level(spdlog::level::from_str(run.log_level));
      run.seed = seed;
      run.duration_ms = duration;
      const auto reps = nrsl::execute(run, [](const std::string& msg) { spdlog::info("{}", msg); });
      for (const auto& r : reps) {
        const auto& m = r.metrics;
        spdlog::info("seed {}: {} slots, {} TBs, PRR(0-100 m) {:.4f}, mean CBR {:.4f}", r.seed, m.slots_processed,
                     m.tbs_generated, nrsl::prr_in_range(m, 0.0, 100.0), m.mean_cbr());
      }
      spdlog::info("results written to {}", run.out_dir);
    } else if (*validate_cmd) {
      const auto sc = nrsl::load_scenario(validate_path);
      std::cout << "ok: scenario '" << sc.name << "', " << sc.ue_count() << " UEs, " << sc.pools.size()
                << " pool(s), " << sc.duration_ms << " ms\n";
    } else {
      std::cout << nrsl::scenario_schema() << '\n';
    }
  } catch (const nrsl::Error& e) {
    return report(e);
  } catch (const std::exception& e) {
    spdlog::error("runtime-error: {}", e.what());
    return kExitRuntime;
  }
  return kExitOk;
}
