#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nrsl/error.hpp"
#include "nrsl/sim_engine.hpp"

namespace nrsl {

inline constexpr int kScenarioSchemaVersion = 1;

namespace config {

using json = nlohmann::json;

struct KeySpec {
  const char* name;
  const char* type;
  const char* description;
};

// clang-format off
inline constexpr KeySpec kTopKeys[] = {
    {"schema_version", "integer", "must be 1"},
    {"name", "string", "scenario name"},
    {"seed", "integer", "global seed; per-UE streams are derived from it"},
    {"duration_ms", "number", "simulated time"},
    {"numerology", "object", "see numerology"},
    {"bwp", "object", "see bwp"},
    {"pools", "array", "resource pools, see pool"},
    {"highway", "object", "see highway"},
    {"traffic_templates", "object", "name -> traffic template"},
    {"ue_groups", "array", "see ue_group"},
    {"events", "array", "see event"},
    {"mobility_trace", "string", "CSV time_ms,ue_id,x,y; relative to the config file"},
    {"defaults", "object", "module defaults, see defaults.*"},
};
inline constexpr KeySpec kNumerologyKeys[] = {
    {"mu", "integer", "0..3; SCS = 15 * 2^mu kHz"},
    {"cp", "string", "normal | extended (mu = 2 only)"},
};
inline constexpr KeySpec kBwpKeys[] = {
    {"carrier_freq_mhz", "number", "carrier frequency"},
    {"bandwidth_mhz", "integer", "10 | 20 | 30 | 40"},
    {"prb_count", "integer", "optional; overrides the PRB table"},
};
inline constexpr KeySpec kPoolKeys[] = {
    {"id", "integer", "pool id"},
    {"kind", "string", "normal | exceptional"},
    {"role", "string", "transmit | receive | both"},
    {"prb_offset", "integer", "first PRB of the pool within the BWP"},
    {"subchannel_size_prb", "integer", ">= 10"},
    {"num_subchannels", "integer", "optional; default: as many as fit"},
    {"slot_bitmap", "string", "periodic SL slot pattern of '0'/'1'"},
    {"psfch_period_slots", "integer", "0 | 1 | 2 | 4"},
    {"preemption_enabled", "boolean", "pre-emption feature flag"},
    {"preemption_priority_threshold", "integer", "0..7"},
    {"cbr_busy_threshold_dbm", "number", "subchannel busy level for CBR"},
    {"rsrp_threshold_base_dbm", "number", "exclusion threshold at equal priorities"},
    {"rsrp_threshold_priority_step_db", "number", "added per level of (rx - own) priority"},
    {"rsrp_thresholds", "array", "optional 8x8 dBm table [rx][own]; overrides base/step"},
};
inline constexpr KeySpec kHighwayKeys[] = {
    {"length_m", "number", "ring road length"},
    {"lanes", "integer", "lane count"},
    {"lane_width_m", "number", "lane width"},
    {"lane_speeds_mps", "array", "one speed per lane"},
    {"bidirectional", "boolean", "upper half of the lanes drives towards -x"},
};
inline constexpr KeySpec kTrafficKeys[] = {
    {"preset", "string", "periodic_broadcast | platooning | extended_sensors | remote_driving"},
    {"kind", "string", "periodic | aperiodic | disabled"},
    {"period_ms", "number", "periodic arrivals"},
    {"jitter_ms", "number", "uniform extra delay per arrival, < period"},
    {"rate_per_s", "number", "aperiodic arrival rate"},
    {"size_bytes", "integer", "TB size"},
    {"priority", "integer", "0..7, lower is more urgent"},
    {"pdb_ms", "number", "packet delay budget"},
    {"cast_type", "string", "unicast | groupcast | broadcast"},
    {"feedback", "string", "ack_nack | nack_only | none"},
    {"blind_retransmissions", "boolean", "retransmit without feedback"},
    {"comm_range_m", "number", "groupcast communication range"},
    {"max_tx", "integer", "transmissions per TB, 1..3"},
    {"l_subch", "integer", "subchannels per transmission"},
    {"mcs", "integer", "MCS index"},
};
inline constexpr KeySpec kGroupKeys[] = {
    {"name", "string", "group name"},
    {"count", "integer", "UEs in the group"},
    {"mode", "integer", "1 (gNB scheduled) | 2 (autonomous)"},
    {"pool", "integer", "pool id"},
    {"traffic", "string", "traffic template name"},
    {"placement", "string", "random | uniform | explicit"},
    {"positions", "array", "[[x, y], ...] for explicit placement"},
    {"speed_mps", "number", "overrides the lane speed"},
    {"first_arrival_ms", "number", "first TB time; default random within one period"},
    {"sync_candidates", "array", "[{kind, hops}]: gnss | gnb | syncref_ue | internal"},
    {"grant_type", "string", "type1 | type2 (mode 1)"},
};
inline constexpr KeySpec kEventKeys[] = {
    {"type", "string", "exceptional | dci"},
    {"ue", "integer", "UE id"},
    {"from_ms", "number", "exceptional: start"},
    {"to_ms", "number", "exceptional: end (exclusive)"},
    {"pool", "integer", "exceptional: pool id"},
    {"action", "string", "dci: activate | deactivate"},
    {"at_ms", "number", "dci: time"},
};
inline constexpr KeySpec kSyncKeys[] = {
    {"kind", "string", "gnss | gnb | syncref_ue | internal"},
    {"hops", "integer", "1 | 2 for syncref_ue, else 0"},
};
inline constexpr KeySpec kDefaultsKeys[] = {
    {"link_budget", "object", "see defaults.link_budget"},
    {"phy", "object", "see defaults.phy"},
    {"selection", "object", "see defaults.selection"},
    {"sci", "object", "see defaults.sci"},
    {"harq", "object", "see defaults.harq"},
    {"congestion", "object", "see defaults.congestion"},
    {"sync", "object", "see defaults.sync"},
    {"metrics", "object", "see defaults.metrics"},
};
inline constexpr KeySpec kLinkKeys[] = {
    {"tx_power_dbm", "number", "default 23"},
    {"pathloss_exponent", "number", "default 2.75"},
    {"reference_loss_db", "number", "loss at 1 m, default 47"},
    {"shadowing_sigma_db", "number", "default 3"},
    {"noise_dbm", "number", "noise per subchannel, default -99.4"},
};
inline constexpr KeySpec kPhyKeys[] = {
    {"mcs_threshold_offset_db", "number", "threshold(mcs) = offset + slope * mcs; default -2"},
    {"mcs_threshold_slope_db", "number", "default 1"},
    {"mcs_thresholds_db", "array", "optional explicit table indexed by MCS"},
    {"sci_sinr_threshold_db", "number", "SCI decoding threshold, default -2"},
    {"rsrp_source", "string", "pscch | pssch"},
};
inline constexpr KeySpec kSelectionKeys[] = {
    {"t0_ms", "number", "sensing window depth, default 1100"},
    {"sensing_gap_ms", "number", "default 100"},
    {"t_proc0_slots", "integer", "default 2"},
    {"t_proc1_slots", "integer", "default 4"},
    {"candidate_ratio_by_priority", "array", "8 values from {0.2, 0.35, 0.5}"},
    {"relax_step_db", "number", "must be 3"},
    {"max_reserved", "integer", "1..3"},
    {"rank_by_rsrp", "boolean", "keep only the lowest-RSRP survivors, default false"},
    {"reselection_counter_min", "integer", "default 5"},
    {"reselection_counter_max", "integer", "default 15"},
    {"reevaluation_lead_slots", "integer", "default 2"},
};
inline constexpr KeySpec kSciKeys[] = {
    {"reservation_periods_ms", "array", "allowed periods, starting with 0"},
};
inline constexpr KeySpec kHarqKeys[] = {
    {"max_tx", "integer", "default 3"},
    {"rv_sequence", "array", "default [0, 2, 3, 1]"},
    {"min_gap_slots", "integer", "PSSCH to PSFCH gap, default 2"},
    {"psfch_loss_probability", "number", "default 0"},
};
inline constexpr KeySpec kCongestionKeys[] = {
    {"cbr_window_ms", "number", "must be 100"},
    {"cr_window_ms", "number", "must be 1000"},
    {"cr_past_ms", "number", "past part of the CR window, default 500"},
    {"cbr_interval_ms", "integer", "1 | 2"},
    {"cr_limit_cbr_bounds", "array", "3 increasing CBR bucket bounds"},
    {"cr_limits", "array", "8x4 table [priority][bucket]"},
};
inline constexpr KeySpec kSyncDefaultsKeys[] = {
    {"gnss_first", "boolean", "GNSS ranks above gNB, default true"},
};
inline constexpr KeySpec kMetricsKeys[] = {
    {"prr_bin_m", "number", "default 50"},
    {"prr_max_distance_m", "number", "broadcast receivers beyond this are not counted, default 500"},
    {"warmup_ms", "number", "TBs and CBR samples before this are not counted"},
    {"load_sample_ms", "number", "load.csv sampling interval, default 100"},
    {"tx_events", "boolean", "write a tx event per transmission, default true"},
};
// clang-format on

inline std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

/// Strict view of one JSON object: unknown keys and wrong types are errors.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path, std::span<const KeySpec> keys) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) fail(Errc::validation_error, where() + "must be an object");
    for (const auto& [key, value] : j.items()) {
      (void)value;
      const KeySpec* best = nullptr;
      std::size_t best_d = 0;
      bool known = false;
      for (const auto& k : keys) {
        if (key == k.name) known = true;
        const std::size_t d = edit_distance(key, k.name);
        if (!best || d < best_d) {
          best = &k;
          best_d = d;
        }
      }
      if (known) continue;
      std::string msg = "unknown key '" + join(key) + "'";
      if (best && best_d <= std::max<std::size_t>(2, key.size() / 3))
        msg += "; did you mean '" + join(best->name) + "'?";
      fail(Errc::unknown_key, msg);
    }
  }

  [[nodiscard]] bool has(const char* key) const { return j_.contains(key) && !j_.at(key).is_null(); }
  [[nodiscard]] const json& at(const char* key) const { return j_.at(key); }
  [[nodiscard]] std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  template <class T>
  [[nodiscard]] std::optional<T> opt(const char* key) const {
    if (!has(key)) return std::nullopt;
    return as<T>(j_.at(key), join(key));
  }
  template <class T>
  [[nodiscard]] T get(const char* key, T fallback) const {
    return opt<T>(key).value_or(fallback);
  }
  template <class T>
  [[nodiscard]] T req(const char* key) const {
    if (!has(key)) fail(Errc::validation_error, "missing required key '" + join(key) + "'");
    return as<T>(j_.at(key), join(key));
  }

  template <class T>
  static T as(const json& v, const std::string& path) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) fail(Errc::validation_error, path + ": expected a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (v.is_number_integer()) return v.get<T>();
      if (v.is_number_float()) {
        const double d = v.get<double>();
        if (d == std::floor(d)) return static_cast<T>(d);
      }
      fail(Errc::validation_error, path + ": expected an integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) fail(Errc::validation_error, path + ": expected a number");
      return v.get<T>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) fail(Errc::validation_error, path + ": expected a string");
      return v.get<std::string>();
    } else {
      static_assert(sizeof(T) == 0, "unsupported config value type");
    }
  }

 private:
  [[nodiscard]] std::string where() const { return path_.empty() ? "document " : path_ + " "; }
  const json& j_;
  std::string path_;
};

template <class T>
std::vector<T> array_of(const json& v, const std::string& path) {
  if (!v.is_array()) fail(Errc::validation_error, path + ": expected an array");
  std::vector<T> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(ObjectReader::as<T>(v[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

template <class E>
E enum_value(const std::string& text, std::initializer_list<std::pair<const char*, E>> options, const std::string& path) {
  std::string names;
  for (const auto& [name, value] : options) {
    if (text == name) return value;
    names += names.empty() ? name : std::string(" | ") + name;
  }
  fail(Errc::validation_error, path + ": '" + text + "' is not one of " + names);
}

/// Runs `fn`, turning module errors into validation errors that name the rule and the key.
template <class Fn>
auto checked(const std::string& path, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    if (e.code() == Errc::unknown_key || e.code() == Errc::validation_error || e.code() == Errc::parse_error) throw;
    fail(Errc::validation_error, path + ": " + e.what());
  }
}

inline std::string line_col(const std::string& text, std::size_t byte) {
  std::size_t line = 1;
  std::size_t col = 1;
  for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

inline TrafficTemplate parse_traffic(const json& j, const std::string& path) {
  ObjectReader r(j, path, kTrafficKeys);
  TrafficTemplate t;
  if (auto preset = r.opt<std::string>("preset")) {
    auto p = traffic_preset(*preset);
    if (!p) fail(Errc::validation_error, r.join("preset") + ": unknown preset '" + *preset + "'");
    t = *p;
  }
  if (auto k = r.opt<std::string>("kind"))
    t.kind = enum_value<TrafficKind>(*k, {{"periodic", TrafficKind::periodic}, {"aperiodic", TrafficKind::aperiodic},
                                          {"disabled", TrafficKind::disabled}}, r.join("kind"));
  t.period_ms = r.get("period_ms", t.period_ms);
  t.jitter_ms = r.get("jitter_ms", t.jitter_ms);
  t.rate_per_s = r.get("rate_per_s", t.rate_per_s);
  t.size_bytes = r.get("size_bytes", t.size_bytes);
  t.priority = r.get("priority", t.priority);
  t.pdb_ms = r.get("pdb_ms", t.pdb_ms);
  if (auto c = r.opt<std::string>("cast_type"))
    t.cast_type = enum_value<CastType>(*c, {{"unicast", CastType::unicast}, {"groupcast", CastType::groupcast},
                                            {"broadcast", CastType::broadcast}}, r.join("cast_type"));
  if (auto f = r.opt<std::string>("feedback"))
    t.feedback = enum_value<FeedbackMode>(*f, {{"ack_nack", FeedbackMode::ack_nack}, {"nack_only", FeedbackMode::nack_only},
                                               {"none", FeedbackMode::none}}, r.join("feedback"));
  t.blind_retransmissions = r.get("blind_retransmissions", t.blind_retransmissions);
  if (auto cr = r.opt<double>("comm_range_m")) t.comm_range_m = *cr;
  t.max_tx = r.get("max_tx", t.max_tx);
  t.l_subch = r.get("l_subch", t.l_subch);
  t.mcs = r.get("mcs", t.mcs);
  checked(path, [&] { t.validate(); });
  return t;
}

inline void parse_defaults(const json& j, Scenario& sc) {
  ObjectReader d(j, "defaults", kDefaultsKeys);
  if (d.has("link_budget")) {
    ObjectReader r(d.at("link_budget"), "defaults.link_budget", kLinkKeys);
    auto& l = sc.link;
    l.tx_power_dbm = r.get("tx_power_dbm", l.tx_power_dbm);
    l.pathloss_exponent = r.get("pathloss_exponent", l.pathloss_exponent);
    l.reference_loss_db = r.get("reference_loss_db", l.reference_loss_db);
    l.shadowing_sigma_db = r.get("shadowing_sigma_db", l.shadowing_sigma_db);
    l.noise_dbm = r.get("noise_dbm", l.noise_dbm);
    checked("defaults.link_budget", [&] { l.validate(); });
  }
  if (d.has("phy")) {
    ObjectReader r(d.at("phy"), "defaults.phy", kPhyKeys);
    if (r.has("mcs_thresholds_db")) {
      auto v = array_of<double>(r.at("mcs_thresholds_db"), r.join("mcs_thresholds_db"));
      if (v.empty()) fail(Errc::validation_error, r.join("mcs_thresholds_db") + ": table is empty");
      sc.phy.mcs_table = McsThresholdTable::from(std::move(v));
    } else {
      sc.phy.mcs_table = McsThresholdTable::linear(r.get("mcs_threshold_offset_db", -2.0), r.get("mcs_threshold_slope_db", 1.0));
    }
    sc.phy.sci_sinr_threshold_db = r.get("sci_sinr_threshold_db", sc.phy.sci_sinr_threshold_db);
    if (auto s = r.opt<std::string>("rsrp_source"))
      sc.phy.rsrp_source = enum_value<RsrpSource>(*s, {{"pscch", RsrpSource::pscch}, {"pssch", RsrpSource::pssch}}, r.join("rsrp_source"));
  }
  if (d.has("selection")) {
    ObjectReader r(d.at("selection"), "defaults.selection", kSelectionKeys);
    auto& s = sc.selection;
    s.t0_ms = r.get("t0_ms", s.t0_ms);
    s.sensing_gap_ms = r.get("sensing_gap_ms", s.sensing_gap_ms);
    s.t_proc0_slots = r.get("t_proc0_slots", s.t_proc0_slots);
    s.t_proc1_slots = r.get("t_proc1_slots", s.t_proc1_slots);
    if (r.has("candidate_ratio_by_priority")) {
      auto v = array_of<double>(r.at("candidate_ratio_by_priority"), r.join("candidate_ratio_by_priority"));
      if (v.size() != kNumPriorities)
        fail(Errc::validation_error, r.join("candidate_ratio_by_priority") + ": 8 values required");
      std::copy(v.begin(), v.end(), s.candidate_ratio_by_priority.begin());
    }
    s.relax_step_db = r.get("relax_step_db", s.relax_step_db);
    s.max_reserved = r.get("max_reserved", s.max_reserved);
    s.rank_by_rsrp = r.get("rank_by_rsrp", s.rank_by_rsrp);
    s.reselection_counter_min = r.get("reselection_counter_min", s.reselection_counter_min);
    s.reselection_counter_max = r.get("reselection_counter_max", s.reselection_counter_max);
    s.reevaluation_lead_slots = r.get("reevaluation_lead_slots", s.reevaluation_lead_slots);
    checked("defaults.selection", [&] { s.validate(); });
  }
  if (d.has("sci")) {
    ObjectReader r(d.at("sci"), "defaults.sci", kSciKeys);
    if (r.has("reservation_periods_ms")) {
      auto v = array_of<int>(r.at("reservation_periods_ms"), r.join("reservation_periods_ms"));
      sc.reservation_periods = checked(r.join("reservation_periods_ms"), [&] { return ReservationPeriods(v); });
      if (v.size() > 16) fail(Errc::validation_error, r.join("reservation_periods_ms") + ": at most 16 periods fit the 4-bit field");
    }
  }
  if (d.has("harq")) {
    ObjectReader r(d.at("harq"), "defaults.harq", kHarqKeys);
    auto& h = sc.harq;
    h.max_tx = r.get("max_tx", h.max_tx);
    if (r.has("rv_sequence")) h.rv_sequence = array_of<int>(r.at("rv_sequence"), r.join("rv_sequence"));
    h.min_gap_slots = r.get("min_gap_slots", h.min_gap_slots);
    h.psfch_loss_probability = r.get("psfch_loss_probability", h.psfch_loss_probability);
    checked("defaults.harq", [&] { h.validate(); });
  }
  if (d.has("congestion")) {
    ObjectReader r(d.at("congestion"), "defaults.congestion", kCongestionKeys);
    auto& c = sc.congestion;
    c.cbr_window_ms = r.get("cbr_window_ms", c.cbr_window_ms);
    c.cr_window_ms = r.get("cr_window_ms", c.cr_window_ms);
    c.cr_past_ms = r.get("cr_past_ms", c.cr_past_ms);
    c.cbr_interval_ms = r.get("cbr_interval_ms", c.cbr_interval_ms);
    checked("defaults.congestion", [&] { c.validate(); });
    if (r.has("cr_limit_cbr_bounds")) {
      auto v = array_of<double>(r.at("cr_limit_cbr_bounds"), r.join("cr_limit_cbr_bounds"));
      if (v.size() != 3) fail(Errc::validation_error, r.join("cr_limit_cbr_bounds") + ": 3 bounds required");
      std::copy(v.begin(), v.end(), sc.cr_limits.cbr_bounds.begin());
    }
    if (r.has("cr_limits")) {
      const auto& t = r.at("cr_limits");
      const std::string path = r.join("cr_limits");
      if (!t.is_array() || t.size() != kNumPriorities) fail(Errc::validation_error, path + ": 8 rows required");
      for (std::size_t p = 0; p < kNumPriorities; ++p) {
        auto row = array_of<double>(t[p], path + "[" + std::to_string(p) + "]");
        if (row.size() != 4) fail(Errc::validation_error, path + "[" + std::to_string(p) + "]: 4 buckets required");
        std::copy(row.begin(), row.end(), sc.cr_limits.limits[p].begin());
      }
    }
    checked(r.join("cr_limits"), [&] { sc.cr_limits.validate(); });
  }
  if (d.has("sync")) {
    ObjectReader r(d.at("sync"), "defaults.sync", kSyncDefaultsKeys);
    sc.gnss_first = r.get("gnss_first", sc.gnss_first);
  }
  if (d.has("metrics")) {
    ObjectReader r(d.at("metrics"), "defaults.metrics", kMetricsKeys);
    auto& m = sc.metrics;
    m.prr_bin_m = r.get("prr_bin_m", m.prr_bin_m);
    m.prr_max_distance_m = r.get("prr_max_distance_m", m.prr_max_distance_m);
    m.warmup_ms = r.get("warmup_ms", m.warmup_ms);
    m.load_sample_ms = r.get("load_sample_ms", m.load_sample_ms);
    m.tx_events = r.get("tx_events", m.tx_events);
  }
}

inline ResourcePool parse_pool(const json& j, const std::string& path, const Bwp& bwp) {
  ObjectReader r(j, path, kPoolKeys);
  PoolConfig c;
  c.pool_id = r.req<int>("id");
  if (auto k = r.opt<std::string>("kind"))
    c.kind = enum_value<PoolKind>(*k, {{"normal", PoolKind::normal}, {"exceptional", PoolKind::exceptional}}, r.join("kind"));
  if (auto k = r.opt<std::string>("role"))
    c.role = enum_value<PoolRole>(*k, {{"transmit", PoolRole::transmit}, {"receive", PoolRole::receive}, {"both", PoolRole::both}},
                                  r.join("role"));
  c.prb_offset = r.get("prb_offset", c.prb_offset);
  c.subchannel_size_prb = r.get("subchannel_size_prb", c.subchannel_size_prb);
  if (auto n = r.opt<int>("num_subchannels")) c.num_subchannels = *n;
  if (auto b = r.opt<std::string>("slot_bitmap"))
    c.slot_bitmap = checked(r.join("slot_bitmap"), [&] { return parse_slot_bitmap(*b); });
  c.psfch_period_slots = r.get("psfch_period_slots", c.psfch_period_slots);
  c.preemption_enabled = r.get("preemption_enabled", c.preemption_enabled);
  c.preemption_priority_threshold = r.get("preemption_priority_threshold", c.preemption_priority_threshold);
  c.cbr_busy_threshold_dbm = r.get("cbr_busy_threshold_dbm", c.cbr_busy_threshold_dbm);
  c.rsrp_thresholds = RsrpThresholdTable::linear(r.get("rsrp_threshold_base_dbm", -110.0),
                                                 r.get("rsrp_threshold_priority_step_db", 2.0));
  if (r.has("rsrp_thresholds")) {
    const auto& t = r.at("rsrp_thresholds");
    const std::string tp = r.join("rsrp_thresholds");
    if (!t.is_array() || t.size() != kNumPriorities) fail(Errc::validation_error, tp + ": 8 rows required");
    for (std::size_t rx = 0; rx < kNumPriorities; ++rx) {
      auto row = array_of<double>(t[rx], tp + "[" + std::to_string(rx) + "]");
      if (row.size() != kNumPriorities) fail(Errc::validation_error, tp + "[" + std::to_string(rx) + "]: 8 values required");
      std::copy(row.begin(), row.end(), c.rsrp_thresholds.dbm[rx].begin());
    }
  }
  return checked(path, [&] { return build_resource_pool(bwp, c); });
}

inline SyncSource parse_sync(const json& j, const std::string& path) {
  ObjectReader r(j, path, kSyncKeys);
  SyncSource s;
  s.kind = enum_value<SyncKind>(r.req<std::string>("kind"),
                                {{"gnss", SyncKind::gnss}, {"gnb", SyncKind::gnb}, {"syncref_ue", SyncKind::syncref_ue},
                                 {"internal", SyncKind::internal}}, r.join("kind"));
  s.hops = r.get("hops", 0);
  return s;
}

}  // namespace config

/// Parses and fully validates a scenario document. `base_dir` resolves relative paths.
inline Scenario parse_scenario(const std::string& text, const std::filesystem::path& base_dir = ".") {
  using namespace config;
  json doc;
  try {
    doc = json::parse(text, nullptr, true, true);
  } catch (const json::parse_error& e) {
    std::string msg = e.what();
    if (auto pos = msg.find("parse error at "); pos != std::string::npos) msg = msg.substr(msg.find(':', pos) + 2);
    fail(Errc::parse_error, line_col(text, e.byte > 0 ? e.byte - 1 : 0) + ": " + msg);
  }
  ObjectReader top(doc, "", kTopKeys);
  const int version = top.req<int>("schema_version");
  if (version != kScenarioSchemaVersion)
    fail(Errc::validation_error, "schema_version " + std::to_string(version) + " is not supported (expected " +
                                     std::to_string(kScenarioSchemaVersion) + ")");
  Scenario sc;
  sc.name = top.get<std::string>("name", "scenario");
  sc.seed = top.get<std::uint64_t>("seed", 1);
  sc.duration_ms = top.req<double>("duration_ms");

  if (top.has("defaults")) parse_defaults(top.at("defaults"), sc);

  {
    static const json kEmpty = json::object();
    ObjectReader r(top.has("numerology") ? top.at("numerology") : kEmpty, "numerology", kNumerologyKeys);
    const int mu = r.get("mu", 0);
    const auto cp = enum_value<CyclicPrefix>(r.get<std::string>("cp", "normal"),
                                             {{"normal", CyclicPrefix::normal}, {"extended", CyclicPrefix::extended}}, r.join("cp"));
    sc.numerology = checked("numerology", [&] { return make_numerology(mu, cp); });
  }
  {
    static const json kEmpty = json::object();
    ObjectReader r(top.has("bwp") ? top.at("bwp") : kEmpty, "bwp", kBwpKeys);
    const double f = r.get("carrier_freq_mhz", 5900.0);
    const int bw = r.get("bandwidth_mhz", 10);
    const auto prbs = r.opt<int>("prb_count");
    sc.bwp = checked("bwp", [&] { return make_bwp(f, bw, sc.numerology, prbs); });
  }
  if (!top.has("pools")) fail(Errc::validation_error, "missing required key 'pools'");
  {
    const auto& pools = top.at("pools");
    if (!pools.is_array()) fail(Errc::validation_error, "pools: expected an array");
    for (std::size_t i = 0; i < pools.size(); ++i)
      sc.pools.push_back(parse_pool(pools[i], "pools[" + std::to_string(i) + "]", sc.bwp));
  }
  if (top.has("highway")) {
    ObjectReader r(top.at("highway"), "highway", kHighwayKeys);
    auto& h = sc.highway;
    h.length_m = r.get("length_m", h.length_m);
    h.lanes = r.get("lanes", h.lanes);
    h.lane_width_m = r.get("lane_width_m", h.lane_width_m);
    if (r.has("lane_speeds_mps")) h.lane_speeds_mps = array_of<double>(r.at("lane_speeds_mps"), r.join("lane_speeds_mps"));
    else h.lane_speeds_mps.resize(static_cast<std::size_t>(std::max(h.lanes, 1)), h.lane_speeds_mps.back());
    h.bidirectional = r.get("bidirectional", h.bidirectional);
    checked("highway", [&] { h.validate(); });
  }

  std::map<std::string, TrafficTemplate> templates;
  if (top.has("traffic_templates")) {
    const auto& t = top.at("traffic_templates");
    if (!t.is_object()) fail(Errc::validation_error, "traffic_templates: expected an object");
    for (const auto& [name, value] : t.items()) templates[name] = parse_traffic(value, "traffic_templates." + name);
  }

  if (!top.has("ue_groups")) fail(Errc::validation_error, "missing required key 'ue_groups'");
  const auto& groups = top.at("ue_groups");
  if (!groups.is_array()) fail(Errc::validation_error, "ue_groups: expected an array");
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const std::string path = "ue_groups[" + std::to_string(i) + "]";
    ObjectReader r(groups[i], path, kGroupKeys);
    UeGroupConfig g;
    g.name = r.get<std::string>("name", "group" + std::to_string(i));
    g.count = r.req<int>("count");
    g.mode = r.get("mode", 2);
    g.pool_id = r.req<int>("pool");
    const auto tname = r.req<std::string>("traffic");
    if (auto it = templates.find(tname); it != templates.end()) {
      g.traffic = it->second;
    } else if (auto p = traffic_preset(tname)) {
      g.traffic = *p;
    } else {
      fail(Errc::validation_error, r.join("traffic") + ": no traffic template or preset named '" + tname + "'");
    }
    if (auto p = r.opt<std::string>("placement"))
      g.placement = enum_value<Placement>(*p, {{"random", Placement::random}, {"uniform", Placement::uniform},
                                               {"explicit", Placement::explicit_positions}}, r.join("placement"));
    if (r.has("positions")) {
      const auto& ps = r.at("positions");
      if (!ps.is_array()) fail(Errc::validation_error, r.join("positions") + ": expected an array");
      for (std::size_t k = 0; k < ps.size(); ++k) {
        auto xy = array_of<double>(ps[k], r.join("positions") + "[" + std::to_string(k) + "]");
        if (xy.size() != 2) fail(Errc::validation_error, r.join("positions") + "[" + std::to_string(k) + "]: expected [x, y]");
        g.positions.push_back({xy[0], xy[1]});
      }
    }
    if (auto v = r.opt<double>("speed_mps")) g.speed_mps = *v;
    if (auto v = r.opt<double>("first_arrival_ms")) g.first_arrival_ms = *v;
    if (r.has("sync_candidates")) {
      const auto& sc_list = r.at("sync_candidates");
      if (!sc_list.is_array()) fail(Errc::validation_error, r.join("sync_candidates") + ": expected an array");
      for (std::size_t k = 0; k < sc_list.size(); ++k)
        g.sync_candidates.push_back(parse_sync(sc_list[k], r.join("sync_candidates") + "[" + std::to_string(k) + "]"));
    }
    if (auto t = r.opt<std::string>("grant_type"))
      g.grant_type = enum_value<GrantType>(*t, {{"type1", GrantType::type1}, {"type2", GrantType::type2}}, r.join("grant_type"));
    sc.groups.push_back(std::move(g));
  }

  if (top.has("events")) {
    const auto& evs = top.at("events");
    if (!evs.is_array()) fail(Errc::validation_error, "events: expected an array");
    for (std::size_t i = 0; i < evs.size(); ++i) {
      ObjectReader r(evs[i], "events[" + std::to_string(i) + "]", kEventKeys);
      const auto type = r.req<std::string>("type");
      if (type == "exceptional") {
        sc.exceptional_events.push_back({r.req<int>("ue"), r.req<double>("from_ms"), r.req<double>("to_ms"), r.req<int>("pool")});
      } else if (type == "dci") {
        const auto action = enum_value<DciAction>(r.req<std::string>("action"),
                                                  {{"activate", DciAction::activate}, {"deactivate", DciAction::deactivate}},
                                                  r.join("action"));
        sc.dci_events.push_back({r.req<int>("ue"), action, r.req<double>("at_ms")});
      } else {
        fail(Errc::validation_error, r.join("type") + ": '" + type + "' is not one of exceptional | dci");
      }
    }
  }

  if (auto trace = top.opt<std::string>("mobility_trace")) {
    std::filesystem::path p(*trace);
    if (p.is_relative()) p = base_dir / p;
    sc.mobility_trace = checked("mobility_trace", [&] { return MobilityTrace::load(p.string()); });
  }

  checked("scenario", [&] { sc.validate(); });
  return sc;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::parse_error, "cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str(), std::filesystem::path(path).parent_path());
}

/// Machine-readable description of every config section and key.
inline std::string scenario_schema() {
  using namespace config;
  json out;
  out["schema_version"] = kScenarioSchemaVersion;
  out["format"] = "JSON; // and /* */ comments are allowed; unknown keys are errors";
  auto section = [](std::span<const KeySpec> keys) {
    json s = json::object();
    for (const auto& k : keys) s[k.name] = {{"type", k.type}, {"description", k.description}};
    return s;
  };
  json& sections = out["sections"];
  sections["top"] = section(kTopKeys);
  sections["numerology"] = section(kNumerologyKeys);
  sections["bwp"] = section(kBwpKeys);
  sections["pool"] = section(kPoolKeys);
  sections["highway"] = section(kHighwayKeys);
  sections["traffic_template"] = section(kTrafficKeys);
  sections["ue_group"] = section(kGroupKeys);
  sections["sync_candidate"] = section(kSyncKeys);
  sections["event"] = section(kEventKeys);
  sections["defaults"] = section(kDefaultsKeys);
  sections["defaults.link_budget"] = section(kLinkKeys);
  sections["defaults.phy"] = section(kPhyKeys);
  sections["defaults.selection"] = section(kSelectionKeys);
  sections["defaults.sci"] = section(kSciKeys);
  sections["defaults.harq"] = section(kHarqKeys);
  sections["defaults.congestion"] = section(kCongestionKeys);
  sections["defaults.sync"] = section(kSyncDefaultsKeys);
  sections["defaults.metrics"] = section(kMetricsKeys);
  return out.dump(2) + "\n";
}

}  // namespace nrsl
