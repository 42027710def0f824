#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "nrsl/error.hpp"
#include "nrsl/harq.hpp"
#include "nrsl/radio_grid.hpp"

namespace nrsl {

// ---------------------------------------------------------------------------
// Traffic
// ---------------------------------------------------------------------------

struct TransportBlock {
  std::int64_t tb_id = 0;
  int source_ue = 0;
  SlotIndex created_at_slot = 0;
  int size_bytes = 300;
  int priority = 0;
  double pdb_ms = 100.0;
  CastType cast_type = CastType::broadcast;
  int destination = -1;  // ue id for unicast, group id for groupcast, -1 for broadcast
  std::optional<double> comm_range_m;
};

enum class TrafficKind { periodic, aperiodic, disabled };

struct TrafficTemplate {
  TrafficKind kind = TrafficKind::periodic;
  double period_ms = 100.0;
  double jitter_ms = 0.0;
  double rate_per_s = 10.0;  // aperiodic arrivals
  int size_bytes = 300;
  int priority = 4;
  double pdb_ms = 100.0;
  CastType cast_type = CastType::broadcast;
  FeedbackMode feedback = FeedbackMode::none;
  bool blind_retransmissions = false;
  std::optional<double> comm_range_m;
  int max_tx = 1;
  int l_subch = 1;
  int mcs = 5;

  void validate() const {
    if (kind == TrafficKind::periodic && !(period_ms > 0)) fail(Errc::invalid_argument, "period_ms must be > 0");
    if (jitter_ms < 0 || (kind == TrafficKind::periodic && jitter_ms >= period_ms))
      fail(Errc::invalid_argument, "jitter_ms must be in [0, period_ms)");
    if (kind == TrafficKind::aperiodic && !(rate_per_s > 0)) fail(Errc::invalid_argument, "rate_per_s must be > 0");
    if (!(pdb_ms > 0)) fail(Errc::invalid_argument, "pdb_ms must be > 0");
    if (priority < 0 || priority >= kNumPriorities) fail(Errc::invalid_argument, "priority must be 0..7");
    if (size_bytes <= 0) fail(Errc::invalid_argument, "size_bytes must be > 0");
    if (max_tx < 1 || max_tx > 3) fail(Errc::invalid_argument, "max_tx must be 1..3 (resources per grant)");
    if (l_subch < 1) fail(Errc::invalid_argument, "l_subch must be >= 1");
    if (cast_type == CastType::broadcast && feedback != FeedbackMode::none)
      fail(Errc::invalid_argument, "broadcast traffic carries no HARQ feedback");
    if (feedback == FeedbackMode::nack_only && (cast_type != CastType::groupcast || !comm_range_m))
      fail(Errc::invalid_argument, "NACK-only feedback needs groupcast with a communication range");
    if (comm_range_m && !(*comm_range_m > 0)) fail(Errc::invalid_argument, "comm_range_m must be > 0");
  }
};

/// Named templates modelled on typical V2X services. Their numbers are configuration defaults.
inline std::optional<TrafficTemplate> traffic_preset(const std::string& name) {
  TrafficTemplate t;
  if (name == "periodic_broadcast") {
    t.kind = TrafficKind::periodic;
    t.period_ms = 100;
    t.pdb_ms = 100;
    t.priority = 4;
    t.cast_type = CastType::broadcast;
    return t;
  }
  if (name == "platooning") {
    t.kind = TrafficKind::periodic;
    t.period_ms = 20;
    t.pdb_ms = 20;
    t.priority = 1;
    t.cast_type = CastType::groupcast;
    t.feedback = FeedbackMode::nack_only;
    t.comm_range_m = 150;
    t.max_tx = 2;
    return t;
  }
  if (name == "extended_sensors") {
    t.kind = TrafficKind::periodic;
    t.period_ms = 100;
    t.pdb_ms = 100;
    t.priority = 2;
    t.size_bytes = 1600;
    t.cast_type = CastType::groupcast;
    t.feedback = FeedbackMode::nack_only;
    t.comm_range_m = 300;
    t.max_tx = 2;
    return t;
  }
  if (name == "remote_driving") {
    t.kind = TrafficKind::aperiodic;
    t.rate_per_s = 50;
    t.pdb_ms = 20;
    t.priority = 0;
    t.size_bytes = 1200;
    t.cast_type = CastType::unicast;
    t.feedback = FeedbackMode::ack_nack;
    t.max_tx = 3;
    return t;
  }
  return std::nullopt;
}

/// Per-UE arrival process. Periodic: first arrival at `first_slot`, then every
/// period plus a uniform [0, jitter] delay. Aperiodic: exponential inter-arrivals.
class TrafficGenerator {
 public:
  TrafficGenerator() = default;
  TrafficGenerator(const TrafficTemplate& tmpl, const Numerology& num, int ue_id, SlotIndex first_slot,
                   std::uint64_t stream_seed)
      : tmpl_(tmpl), num_(num), ue_id_(ue_id), rng_(stream_seed), next_slot_(first_slot), first_(first_slot) {
    tmpl_.validate();
    if (tmpl_.kind == TrafficKind::aperiodic) next_slot_ = first_slot + draw_exponential();
  }

  [[nodiscard]] const TrafficTemplate& traffic() const noexcept { return tmpl_; }
  [[nodiscard]] bool enabled() const noexcept { return tmpl_.kind != TrafficKind::disabled; }

  /// Transport blocks created in `slot`; slots must be visited in order.
  std::vector<TransportBlock> next_arrivals(SlotIndex slot, std::int64_t& next_tb_id) {
    std::vector<TransportBlock> out;
    if (!enabled()) return out;
    while (next_slot_ <= slot) {
      if (next_slot_ == slot) out.push_back(make_tb(slot, next_tb_id++));
      advance();
    }
    return out;
  }

  void set_destination(int destination) noexcept { destination_ = destination; }

 private:
  TransportBlock make_tb(SlotIndex slot, std::int64_t id) const {
    TransportBlock tb;
    tb.tb_id = id;
    tb.source_ue = ue_id_;
    tb.created_at_slot = slot;
    tb.size_bytes = tmpl_.size_bytes;
    tb.priority = tmpl_.priority;
    tb.pdb_ms = tmpl_.pdb_ms;
    tb.cast_type = tmpl_.cast_type;
    tb.destination = destination_;
    tb.comm_range_m = tmpl_.comm_range_m;
    return tb;
  }

  void advance() {
    if (tmpl_.kind == TrafficKind::periodic) {
      base_ms_ += tmpl_.period_ms;
      double jitter = 0.0;
      if (tmpl_.jitter_ms > 0) jitter = std::uniform_real_distribution<double>(0.0, tmpl_.jitter_ms)(rng_);
      next_slot_ = first_ + num_.ms_to_slots(base_ms_ + jitter);
    } else {
      next_slot_ += draw_exponential();
    }
  }

  SlotIndex draw_exponential() {
    std::exponential_distribution<double> gap(tmpl_.rate_per_s / 1000.0);  // per ms
    return std::max<SlotIndex>(1, num_.ms_to_slots(gap(rng_)));
  }

  TrafficTemplate tmpl_;
  Numerology num_;
  int ue_id_ = 0;
  int destination_ = -1;
  std::mt19937_64 rng_;
  SlotIndex next_slot_ = 0;
  double base_ms_ = 0.0;
  SlotIndex first_ = 0;  // arrivals are offsets from this phase, so jitter does not accumulate
};

// ---------------------------------------------------------------------------
// Mobility
// ---------------------------------------------------------------------------

struct Position {
  double x = 0.0;
  double y = 0.0;
};

struct UeKinematics {
  Position position_m;
  double speed_mps = 0.0;
  int lane = 0;
  double heading_rad = 0.0;  // 0: +x, pi: -x
};

/// Straight-line motion along the heading, wrapping at the road length on x.
inline UeKinematics advance_mobility(UeKinematics kin, double dt_s, double road_length_m) {
  if (!(dt_s > 0)) fail(Errc::invalid_argument, "dt must be > 0");
  if (kin.speed_mps < 0) fail(Errc::invalid_argument, "speed must be >= 0");
  kin.position_m.x += kin.speed_mps * dt_s * std::cos(kin.heading_rad);
  kin.position_m.y += kin.speed_mps * dt_s * std::sin(kin.heading_rad);
  if (road_length_m > 0) {
    kin.position_m.x = std::fmod(kin.position_m.x, road_length_m);
    if (kin.position_m.x < 0) kin.position_m.x += road_length_m;
  }
  return kin;
}

/// Distance on a ring road of `road_length_m` (x wraps, y does not).
inline double wrapped_distance(const Position& a, const Position& b, double road_length_m) {
  double dx = std::abs(a.x - b.x);
  if (road_length_m > 0) dx = std::min(dx, road_length_m - dx);
  const double dy = a.y - b.y;
  return std::sqrt(dx * dx + dy * dy);
}

/// Position samples loaded from CSV (time_ms, ue_id, x, y); positions hold
/// between samples.
class MobilityTrace {
 public:
  static MobilityTrace parse(std::istream& in) {
    MobilityTrace t;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#') continue;
      if (lineno == 1 && line.find("time_ms") != std::string::npos) continue;
      std::istringstream ls(line);
      std::string f[4];
      for (auto& field : f)
        if (!std::getline(ls, field, ',')) fail(Errc::parse_error, "mobility trace line " + std::to_string(lineno) + ": expected 4 fields");
      try {
        const double time_ms = std::stod(f[0]);
        const int ue = std::stoi(f[1]);
        t.samples_[ue][time_ms] = Position{std::stod(f[2]), std::stod(f[3])};
      } catch (const std::logic_error&) {
        fail(Errc::parse_error, "mobility trace line " + std::to_string(lineno) + ": malformed number");
      }
    }
    return t;
  }

  static MobilityTrace load(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(Errc::io_error, "cannot open mobility trace " + path);
    return parse(in);
  }

  [[nodiscard]] bool has(int ue_id) const { return samples_.contains(ue_id); }

  [[nodiscard]] std::optional<Position> position(int ue_id, double time_ms) const {
    auto it = samples_.find(ue_id);
    if (it == samples_.end() || it->second.empty()) return std::nullopt;
    auto s = it->second.upper_bound(time_ms);
    if (s == it->second.begin()) return s->second;
    return std::prev(s)->second;
  }

 private:
  std::map<int, std::map<double, Position>> samples_;
};

// ---------------------------------------------------------------------------
// Synchronization source
// ---------------------------------------------------------------------------

enum class SyncKind { gnss, gnb, syncref_ue, internal };

inline std::string_view to_string(SyncKind k) noexcept {
  switch (k) {
    case SyncKind::gnss: return "gnss";
    case SyncKind::gnb: return "gnb";
    case SyncKind::syncref_ue: return "syncref_ue";
    case SyncKind::internal: return "internal";
  }
  return "unknown";
}

struct SyncSource {
  SyncKind kind = SyncKind::internal;
  int hops = 0;
  friend bool operator==(const SyncSource&, const SyncSource&) = default;
};

/// Rank of a source, lower is better: GNSS and gNB first (order configurable),
/// then SyncRef UEs one hop and two hops away, then the internal clock.
inline int sync_rank(const SyncSource& s, bool gnss_first = true) {
  switch (s.kind) {
    case SyncKind::gnss: return gnss_first ? 0 : 1;
    case SyncKind::gnb: return gnss_first ? 1 : 0;
    case SyncKind::syncref_ue:
      if (s.hops == 1) return 2;
      if (s.hops == 2) return 3;
      fail(Errc::invalid_argument, "SyncRef UEs are 1 or 2 hops from GNSS/gNB");
    case SyncKind::internal: return 4;
  }
  return 5;
}

inline SyncSource select_sync_source(std::span<const SyncSource> candidates, bool gnss_first = true) {
  SyncSource best{SyncKind::internal, 0};
  int best_rank = sync_rank(best, gnss_first);
  for (const auto& c : candidates) {
    if (c.kind != SyncKind::syncref_ue && c.hops != 0)
      fail(Errc::invalid_argument, "only SyncRef UEs have a hop count");
    const int r = sync_rank(c, gnss_first);
    if (r < best_rank) {
      best = c;
      best_rank = r;
    }
  }
  return best;
}

}  // namespace nrsl
