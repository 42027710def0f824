#pragma once

#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "nrsl/error.hpp"
#include "nrsl/metrics.hpp"
#include "nrsl/scenario_config.hpp"
#include "nrsl/sim_engine.hpp"

namespace nrsl {

struct RunConfig {
  std::string scenario_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "results";
  std::optional<double> duration_ms;
  std::string log_level = "info";
  int replications = 1;
  int threads = 0;  // 0: hardware concurrency

  void validate() const {
    if (replications < 1) fail(Errc::invalid_argument, "replication count must be >= 1");
    if (threads < 0) fail(Errc::invalid_argument, "thread count must be >= 0");
    if (duration_ms && !(*duration_ms > 0)) fail(Errc::invalid_argument, "duration must be > 0");
    if (out_dir.empty()) fail(Errc::invalid_argument, "output directory is empty");
  }
};

struct Replication {
  std::uint64_t seed = 0;
  Metrics metrics;
};

struct AggregateBin {
  double low_m = 0.0;
  double high_m = 0.0;
  int replications = 0;  // replications with receivers in this bin
  double mean_prr = 0.0;
  double ci95_half_width = 0.0;
};

/// Two-sided 95% Student-t quantile.
inline double t_quantile_95(int dof) {
  static constexpr double kTable[] = {12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228,
                                      2.201,  2.179, 2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086,
                                      2.080,  2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042};
  if (dof < 1) return 0.0;
  if (dof <= 30) return kTable[dof - 1];
  return 1.960;
}

inline std::vector<AggregateBin> aggregate_prr(const std::vector<Replication>& reps, double bin_m) {
  std::map<std::int64_t, std::vector<double>> values;
  for (const auto& r : reps)
    for (const auto& b : prr_by_distance(r.metrics, bin_m))
      values[static_cast<std::int64_t>(std::llround(b.low_m / bin_m))].push_back(b.prr());
  std::vector<AggregateBin> out;
  for (const auto& [k, v] : values) {
    AggregateBin a;
    a.low_m = static_cast<double>(k) * bin_m;
    a.high_m = static_cast<double>(k + 1) * bin_m;
    a.replications = static_cast<int>(v.size());
    double sum = 0.0;
    for (double x : v) sum += x;
    a.mean_prr = sum / static_cast<double>(v.size());
    if (v.size() > 1) {
      double ss = 0.0;
      for (double x : v) ss += (x - a.mean_prr) * (x - a.mean_prr);
      const double sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
      a.ci95_half_width = t_quantile_95(static_cast<int>(v.size()) - 1) * sd / std::sqrt(static_cast<double>(v.size()));
    }
    out.push_back(a);
  }
  return out;
}

inline nlohmann::ordered_json summary_json(const Scenario& sc, const Replication& rep) {
  const Metrics& m = rep.metrics;
  nlohmann::ordered_json j;
  j["csv_schema_version"] = kCsvSchemaVersion;
  j["scenario"] = sc.name;
  j["seed"] = rep.seed;
  j["slots"] = m.slots_processed;
  j["slot_duration_ms"] = m.slot_duration_ms;
  j["tbs_generated"] = m.tbs_generated;
  nlohmann::ordered_json outcomes = nlohmann::ordered_json::object();
  for (auto o : {TbOutcome::delivered, TbOutcome::failed_harq, TbOutcome::dropped_cr, TbOutcome::expired_pdb}) {
    auto counts = m.outcome_counts();
    outcomes[std::string(to_string(o))] = counts.contains(o) ? counts.at(o) : 0;
  }
  j["outcomes"] = outcomes;
  j["unresolved_tbs"] = m.unresolved_tbs;
  j["transmissions"] = m.transmissions;
  j["collisions"] = m.collisions;
  j["half_duplex_violations"] = m.half_duplex_violations;
  j["mode1_overlaps"] = m.mode1_overlaps;
  j["selections"] = m.selections;
  j["reselections"] = m.reselections;
  j["reevaluation_reselections"] = m.reevaluation_reselections;
  j["preemptions"] = m.preemptions;
  j["relaxations"] = m.relaxations;
  j["cr_shrinks"] = m.cr_shrinks;
  j["cr_drops"] = m.cr_drops;
  j["mean_cbr"] = m.mean_cbr();
  j["prr_0_100m"] = prr_in_range(m, 0.0, 100.0);
  return j;
}

inline void write_file(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::io_error, "cannot write " + path.string());
  body(out);
  out.flush();
  if (!out) fail(Errc::io_error, "write failed for " + path.string());
}

/// prr.csv, latency.csv, load.csv, events.csv and summary.json for one replication.
inline void write_replication(const std::filesystem::path& dir, const Scenario& sc, const Replication& rep) {
  std::filesystem::create_directories(dir);
  const Metrics& m = rep.metrics;
  write_file(dir / "prr.csv", [&](std::ostream& os) { write_prr_csv(os, m, sc.metrics.prr_bin_m); });
  write_file(dir / "latency.csv", [&](std::ostream& os) { write_latency_csv(os, m); });
  write_file(dir / "load.csv", [&](std::ostream& os) { write_load_csv(os, m); });
  write_file(dir / "events.csv", [&](std::ostream& os) { write_events_csv(os, m); });
  write_file(dir / "summary.json", [&](std::ostream& os) { os << summary_json(sc, rep).dump(2) << '\n'; });
}

inline void write_aggregate(const std::filesystem::path& dir, const Scenario& sc, const std::vector<Replication>& reps) {
  const auto bins = aggregate_prr(reps, sc.metrics.prr_bin_m);
  write_file(dir / "summary_prr.csv", [&](std::ostream& os) {
    os << "bin_low_m,bin_high_m,replications,mean_prr,ci95_low,ci95_high\n";
    for (const auto& b : bins)
      os << detail::fmt_double(b.low_m, 1) << ',' << detail::fmt_double(b.high_m, 1) << ',' << b.replications << ','
         << detail::fmt_double(b.mean_prr) << ',' << detail::fmt_double(std::max(0.0, b.mean_prr - b.ci95_half_width))
         << ',' << detail::fmt_double(std::min(1.0, b.mean_prr + b.ci95_half_width)) << '\n';
  });
  nlohmann::ordered_json j;
  j["csv_schema_version"] = kCsvSchemaVersion;
  j["scenario"] = sc.name;
  j["replications"] = reps.size();
  nlohmann::ordered_json seeds = nlohmann::ordered_json::array();
  double cbr = 0.0;
  for (const auto& r : reps) {
    seeds.push_back(r.seed);
    cbr += r.metrics.mean_cbr();
  }
  j["seeds"] = seeds;
  j["mean_cbr"] = cbr / static_cast<double>(reps.size());
  nlohmann::ordered_json prr = nlohmann::ordered_json::array();
  for (const auto& b : bins)
    prr.push_back({{"bin_low_m", b.low_m}, {"bin_high_m", b.high_m}, {"replications", b.replications},
                   {"mean_prr", b.mean_prr}, {"ci95_half_width", b.ci95_half_width}});
  j["prr"] = prr;
  write_file(dir / "summary.json", [&](std::ostream& os) { os << j.dump(2) << '\n'; });
}

/// Runs the replications on a worker pool. Replication i uses seed + i.
inline std::vector<Replication> run_replications(const Scenario& base, int count, int threads,
                                                 const std::function<void(const std::string&)>& log = {}) {
  std::vector<Replication> reps(static_cast<std::size_t>(count));
  const int workers = std::max(1, std::min(count, threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency())));
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex mu;
  auto work = [&] {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= count) return;
      {
        std::lock_guard lock(mu);
        if (error) return;
      }
      try {
        Scenario sc = base;
        sc.seed = base.seed + static_cast<std::uint64_t>(i);
        Replication r;
        r.seed = sc.seed;
        r.metrics = Simulator(std::move(sc)).run();
        reps[static_cast<std::size_t>(i)] = std::move(r);
        if (log) {
          std::lock_guard lock(mu);
          log("replication " + std::to_string(i) + " (seed " + std::to_string(base.seed + static_cast<std::uint64_t>(i)) + ") done");
        }
      } catch (...) {
        std::lock_guard lock(mu);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
  return reps;
}

/// Loads, runs and writes results. Outputs are staged and only moved into
/// `out_dir` once every replication has succeeded.
inline std::vector<Replication> execute(const RunConfig& run, const std::function<void(const std::string&)>& log = {}) {
  run.validate();
  Scenario sc = load_scenario(run.scenario_path);
  if (run.seed) sc.seed = *run.seed;
  if (run.duration_ms) {
    sc.duration_ms = *run.duration_ms;
    sc.validate();
  }
  if (log) log("scenario '" + sc.name + "': " + std::to_string(sc.ue_count()) + " UEs, " + std::to_string(run.replications) +
               " replication(s)");

  namespace fs = std::filesystem;
  const fs::path out(run.out_dir);
  const fs::path staging = out.parent_path() / (out.filename().string() + ".staging");
  std::error_code ec;
  fs::remove_all(staging, ec);
  try {
    std::vector<Replication> reps;
    try {
      reps = run_replications(sc, run.replications, run.threads, log);
    } catch (const Error&) {
      throw;
    } catch (const std::exception& e) {
      fail(Errc::runtime_error, e.what());
    }
    fs::create_directories(staging);
    if (run.replications == 1) {
      write_replication(staging, sc, reps.front());
    } else {
      for (std::size_t i = 0; i < reps.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "rep_%03zu", i);
        write_replication(staging / name, sc, reps[i]);
      }
      write_aggregate(staging, sc, reps);
    }
    fs::create_directories(out);
    for (const auto& entry : fs::directory_iterator(staging)) {
      const fs::path target = out / entry.path().filename();
      fs::remove_all(target);
      fs::rename(entry.path(), target);
    }
    fs::remove_all(staging);
    return reps;
  } catch (const fs::filesystem_error& e) {
    fs::remove_all(staging, ec);
    fail(Errc::io_error, e.what());
  } catch (...) {
    fs::remove_all(staging, ec);
    throw;
  }
}

/// Config problems map to exit code 1, everything else to 2.
inline bool is_config_error(Errc code) noexcept {
  switch (code) {
    case Errc::runtime_error:
    case Errc::io_error: return false;
    default: return true;
  }
}

}  // namespace nrsl
