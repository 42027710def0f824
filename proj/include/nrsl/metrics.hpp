#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "nrsl/error.hpp"
#include "nrsl/radio_grid.hpp"

namespace nrsl {

inline constexpr int kCsvSchemaVersion = 1;

enum class TbOutcome { delivered, failed_harq, dropped_cr, expired_pdb };

inline std::string_view to_string(TbOutcome o) noexcept {
  switch (o) {
    case TbOutcome::delivered: return "delivered";
    case TbOutcome::failed_harq: return "failed_harq";
    case TbOutcome::dropped_cr: return "dropped_cr";
    case TbOutcome::expired_pdb: return "expired_pdb";
  }
  return "unknown";
}

struct TbRecord {
  std::int64_t tb_id = 0;
  int ue_id = 0;
  int priority = 0;
  SlotIndex created_slot = 0;
  SlotIndex finished_slot = 0;
  double latency_ms = 0.0;
  TbOutcome outcome = TbOutcome::delivered;
  int tx_count = 0;
};

/// One (TB, intended receiver) pair.
struct PrrSample {
  double distance_m = 0.0;
  bool decoded = false;
};

struct LoadSample {
  double time_ms = 0.0;
  int ue_id = 0;
  double cbr = 0.0;
  double cr = 0.0;
};

struct EventRecord {
  SlotIndex slot = 0;
  std::string type;
  int ue_id = -1;
  std::string detail;
};

struct Metrics {
  std::vector<TbRecord> tbs;
  std::vector<PrrSample> prr_samples;
  std::vector<LoadSample> load;
  std::vector<EventRecord> events;

  std::int64_t slots_processed = 0;
  std::int64_t transmissions = 0;
  std::int64_t tbs_generated = 0;
  std::int64_t collisions = 0;  // intended receptions lost with at least one co-channel interferer
  std::int64_t half_duplex_violations = 0;
  std::int64_t mode1_overlaps = 0;
  std::int64_t selections = 0;
  std::int64_t reselections = 0;
  std::int64_t reevaluation_reselections = 0;
  std::int64_t preemptions = 0;
  std::int64_t relaxations = 0;
  std::int64_t cr_shrinks = 0;
  std::int64_t cr_drops = 0;
  std::int64_t unresolved_tbs = 0;
  double cbr_sum = 0.0;
  std::int64_t cbr_count = 0;
  double slot_duration_ms = 1.0;

  [[nodiscard]] double mean_cbr() const noexcept { return cbr_count ? cbr_sum / static_cast<double>(cbr_count) : 0.0; }

  [[nodiscard]] std::map<TbOutcome, std::int64_t> outcome_counts() const {
    std::map<TbOutcome, std::int64_t> out;
    for (const auto& t : tbs) ++out[t.outcome];
    return out;
  }
};

struct PrrBin {
  double low_m = 0.0;
  double high_m = 0.0;
  std::int64_t expected = 0;
  std::int64_t decoded = 0;
  [[nodiscard]] double prr() const noexcept {
    return expected ? static_cast<double>(decoded) / static_cast<double>(expected) : 0.0;
  }
};

/// PRR per distance bin [k*bin_m, (k+1)*bin_m); bins without receivers are omitted.
inline std::vector<PrrBin> prr_by_distance(const Metrics& metrics, double bin_m) {
  if (!(bin_m > 0)) fail(Errc::invalid_argument, "bin width must be > 0");
  std::map<std::int64_t, PrrBin> bins;
  for (const auto& s : metrics.prr_samples) {
    const auto k = static_cast<std::int64_t>(std::floor(s.distance_m / bin_m));
    auto& b = bins[k];
    b.low_m = static_cast<double>(k) * bin_m;
    b.high_m = static_cast<double>(k + 1) * bin_m;
    ++b.expected;
    if (s.decoded) ++b.decoded;
  }
  std::vector<PrrBin> out;
  out.reserve(bins.size());
  for (auto& [k, b] : bins) out.push_back(b);
  return out;
}

/// Decoded over expected for receivers in [low_m, high_m).
inline double prr_in_range(const Metrics& metrics, double low_m, double high_m) {
  std::int64_t expected = 0;
  std::int64_t decoded = 0;
  for (const auto& s : metrics.prr_samples)
    if (s.distance_m >= low_m && s.distance_m < high_m) {
      ++expected;
      if (s.decoded) ++decoded;
    }
  return expected ? static_cast<double>(decoded) / static_cast<double>(expected) : 0.0;
}

// ---------------------------------------------------------------------------
// CSV output
// ---------------------------------------------------------------------------

namespace detail {
inline std::string fmt_double(double v, int precision = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}
inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}
}  // namespace detail

inline void write_prr_csv(std::ostream& os, const Metrics& m, double bin_m) {
  os << "bin_low_m,bin_high_m,expected,decoded,prr\n";
  for (const auto& b : prr_by_distance(m, bin_m))
    os << detail::fmt_double(b.low_m, 1) << ',' << detail::fmt_double(b.high_m, 1) << ',' << b.expected << ','
       << b.decoded << ',' << detail::fmt_double(b.prr()) << '\n';
}

inline void write_latency_csv(std::ostream& os, const Metrics& m) {
  os << "tb_id,priority,latency_ms,outcome\n";
  for (const auto& t : m.tbs)
    os << t.tb_id << ',' << t.priority << ',' << detail::fmt_double(t.latency_ms, 3) << ',' << to_string(t.outcome)
       << '\n';
}

inline void write_load_csv(std::ostream& os, const Metrics& m) {
  os << "time_ms,ue_id,cbr,cr\n";
  for (const auto& l : m.load)
    os << detail::fmt_double(l.time_ms, 3) << ',' << l.ue_id << ',' << detail::fmt_double(l.cbr) << ','
       << detail::fmt_double(l.cr) << '\n';
}

inline void write_events_csv(std::ostream& os, const Metrics& m) {
  os << "slot,type,ue_id,detail\n";
  for (const auto& e : m.events)
    os << e.slot << ',' << e.type << ',' << e.ue_id << ',' << detail::csv_escape(e.detail) << '\n';
}

}  // namespace nrsl
