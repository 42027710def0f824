#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <deque>
#include <limits>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "nrsl/error.hpp"
#include "nrsl/phy_model.hpp"
#include "nrsl/radio_grid.hpp"
#include "nrsl/sci_codec.hpp"

namespace nrsl {

// Priority convention used throughout: a numerically lower level is a higher priority.

/// One decoded stage-1 SCI, with the reservations it announced.
struct SensingEntry {
  SlotIndex observed_slot = 0;
  std::vector<Resource> reserved_resources;
  double rsrp_dbm = 0.0;
  int rx_priority = 0;
  int reservation_period_ms = 0;
  int source_ue = -1;
};

struct SelectionConfig {
  double t0_ms = 1100.0;
  double sensing_gap_ms = 100.0;
  int t_proc0_slots = 2;
  int t_proc1_slots = 4;
  std::array<double, kNumPriorities> candidate_ratio_by_priority{0.50, 0.50, 0.50, 0.35, 0.35, 0.35, 0.20, 0.20};
  double relax_step_db = 3.0;
  int max_reserved = 3;
  int l_subch = 1;
  /// Keep only the X% lowest-RSRP survivors before the random draw.
  bool rank_by_rsrp = false;
  int reselection_counter_min = 5;
  int reselection_counter_max = 15;
  int reevaluation_lead_slots = 2;

  void validate() const {
    if (!(t0_ms > sensing_gap_ms)) fail(Errc::invalid_argument, "t0_ms must exceed sensing_gap_ms");
    if (sensing_gap_ms < 0 || t_proc0_slots < 0 || t_proc1_slots < 0)
      fail(Errc::invalid_argument, "processing times must be >= 0");
    for (double x : candidate_ratio_by_priority)
      if (x != 0.20 && x != 0.35 && x != 0.50)
        fail(Errc::invalid_argument, "candidate ratios must be one of 0.20, 0.35, 0.50");
    if (relax_step_db != 3.0) fail(Errc::invalid_argument, "threshold relaxation step is 3 dB");
    if (max_reserved < 1 || max_reserved > 3) fail(Errc::invalid_argument, "max_reserved must be 1..3");
    if (l_subch < 1) fail(Errc::invalid_argument, "l_subch must be >= 1");
    if (reselection_counter_min < 1 || reselection_counter_max < reselection_counter_min)
      fail(Errc::invalid_argument, "reselection counter range must satisfy 1 <= min <= max");
    if (reevaluation_lead_slots < 0) fail(Errc::invalid_argument, "reevaluation lead must be >= 0");
  }

  [[nodiscard]] SlotIndex sensing_depth_slots(const Numerology& num) const { return num.ms_to_slots(t0_ms); }
  /// Upper edge offset of the sensing window: the larger of the gap and T_proc0.
  [[nodiscard]] SlotIndex sensing_gap_slots(const Numerology& num) const {
    return std::max<SlotIndex>(num.ms_to_slots(sensing_gap_ms), t_proc0_slots);
  }
};

struct Grant {
  std::vector<Resource> resources;  // ascending slot order
  int period_ms = 0;                // 0: one-shot
  int reselection_counter = 0;
  int creating_priority = 0;
  SlotIndex selected_at_slot = 0;
  SlotIndex sensing_edge_slot = 0;  // last slot covered by the sensing used for selection
  double threshold_offset_db = 0.0;

  [[nodiscard]] bool periodic() const noexcept { return period_ms > 0; }
};

// ---------------------------------------------------------------------------
// Sensing database
// ---------------------------------------------------------------------------

class SensingDb {
 public:
  void push(SensingEntry e) { entries_.push_back(std::move(e)); }

  /// Drops entries observed before `oldest_kept`.
  void evict_before(SlotIndex oldest_kept) {
    while (!entries_.empty() && entries_.front().observed_slot < oldest_kept) entries_.pop_front();
  }

  [[nodiscard]] const std::deque<SensingEntry>& entries() const noexcept { return entries_; }
  [[nodiscard]] std::size_t size() const noexcept { return entries_.size(); }
  [[nodiscard]] bool empty() const noexcept { return entries_.empty(); }

 private:
  std::deque<SensingEntry> entries_;  // observed_slot nondecreasing
};

/// Adds a decoded SCI to the database and evicts entries older than the sensing depth.
/// Undecoded observations and SCIs announcing out-of-pool resources leave it unchanged.
inline bool record_sensing(SensingDb& db, SlotIndex slot, const RxObservation& obs, const Resource& anchor,
                           const ResourcePool& pool, const SelectionConfig& cfg, const SciFieldWidths& widths,
                           SlotIndex horizon_slots, int source_ue = -1) {
  db.evict_before(slot - cfg.sensing_depth_slots(pool.numerology()));
  if (!obs.decoded || !obs.sci1) return false;
  if (!std::isfinite(obs.rsrp_dbm)) return false;
  const Sci1& sci = *obs.sci1;
  if (sci.priority < 0 || sci.priority >= kNumPriorities) return false;
  SensingEntry e;
  e.observed_slot = slot;
  try {
    e.reserved_resources = reserved_resources(sci, anchor, pool, horizon_slots, widths);
  } catch (const Error& err) {
    if (err.code() == Errc::assignment_out_of_pool) return false;
    throw;
  }
  e.rsrp_dbm = obs.rsrp_dbm;
  e.rx_priority = sci.priority;
  e.reservation_period_ms = sci.resource_reservation_period_ms;
  e.source_ue = source_ue;
  db.push(std::move(e));
  return true;
}

/// One line per entry: observed_slot,source_ue,rx_priority,rsrp_dbm,period_ms,resources
/// with resources written as slot:start+len separated by ';'.
inline void write_sensing_snapshot(std::ostream& os, const SensingDb& db) {
  os << "observed_slot,source_ue,rx_priority,rsrp_dbm,period_ms,resources\n";
  char buf[32];
  for (const auto& e : db.entries()) {
    std::snprintf(buf, sizeof buf, "%.3f", e.rsrp_dbm);
    os << e.observed_slot << ',' << e.source_ue << ',' << e.rx_priority << ',' << buf << ','
       << e.reservation_period_ms << ',';
    for (std::size_t i = 0; i < e.reserved_resources.size(); ++i) {
      const auto& r = e.reserved_resources[i];
      if (i) os << ';';
      os << r.slot_index << ':' << r.subchannel_start << '+' << r.subchannel_len;
    }
    os << '\n';
  }
}

// ---------------------------------------------------------------------------
// Candidate selection
// ---------------------------------------------------------------------------

/// Whether a UE selecting with `own_priority` may use resources reserved by
/// traffic of `rx_priority` instead of treating them as occupied.
inline bool may_claim(const ResourcePool& pool, int own_priority, int rx_priority) noexcept {
  if (pool.preemption_enabled) return own_priority < rx_priority;
  return rx_priority > pool.preemption_priority_threshold && rx_priority > own_priority;
}

struct CandidateSet {
  std::vector<Resource> resources;
  std::size_t total = 0;  // |M_total|
  int passes = 0;         // exclusion passes run (1 + relaxations)
  double threshold_offset_db = 0.0;
  SlotIndex sensing_edge_slot = 0;
};

inline CandidateSet select_candidates(const SensingDb& db, const ResourcePool& pool, SlotIndex trigger_slot,
                                      SlotIndex pdb_slots, int own_priority, const SelectionConfig& cfg) {
  if (own_priority < 0 || own_priority >= kNumPriorities) fail(Errc::invalid_argument, "priority must be 0..7");
  if (pdb_slots <= cfg.t_proc1_slots)
    fail(Errc::empty_selection_window, "delay budget of " + std::to_string(pdb_slots) +
                                           " slots does not exceed T_proc1 = " + std::to_string(cfg.t_proc1_slots));
  const int l = cfg.l_subch;
  if (l > pool.num_subchannels) fail(Errc::invalid_argument, "l_subch exceeds the pool's subchannels");

  const SlotIndex win_lo = trigger_slot + cfg.t_proc1_slots;
  const SlotIndex win_hi = trigger_slot + pdb_slots;
  const auto slots = sl_slots_in(pool, win_lo, win_hi);
  if (slots.empty()) fail(Errc::empty_selection_window, "no SL slots in the selection window");

  const int starts = pool.num_subchannels - l + 1;
  const std::size_t total = slots.size() * static_cast<std::size_t>(starts);

  // Strongest sensed reservation per candidate and received priority.
  constexpr double kNone = -std::numeric_limits<double>::infinity();
  std::vector<std::array<double, kNumPriorities>> strongest(total);
  for (auto& row : strongest) row.fill(kNone);

  const SlotIndex sense_lo = trigger_slot - cfg.sensing_depth_slots(pool.numerology());
  const SlotIndex sense_hi = trigger_slot - cfg.sensing_gap_slots(pool.numerology());
  for (const auto& e : db.entries()) {
    if (e.observed_slot < sense_lo || e.observed_slot > sense_hi) continue;
    if (may_claim(pool, own_priority, e.rx_priority)) continue;
    for (const auto& r : e.reserved_resources) {
      if (r.slot_index < win_lo || r.slot_index > win_hi) continue;
      auto it = std::lower_bound(slots.begin(), slots.end(), r.slot_index);
      if (it == slots.end() || *it != r.slot_index) continue;
      const auto row = static_cast<std::size_t>(it - slots.begin()) * static_cast<std::size_t>(starts);
      const int first = std::max(0, r.subchannel_start - l + 1);
      const int last = std::min(starts - 1, r.subchannel_end() - 1);
      for (int s = first; s <= last; ++s) {
        auto& cell = strongest[row + static_cast<std::size_t>(s)][static_cast<std::size_t>(e.rx_priority)];
        cell = std::max(cell, e.rsrp_dbm);
      }
    }
  }

  std::array<double, kNumPriorities> threshold{};
  for (int rx = 0; rx < kNumPriorities; ++rx) threshold[rx] = pool.rsrp_thresholds.at(rx, own_priority);
  const double ratio = cfg.candidate_ratio_by_priority[static_cast<std::size_t>(own_priority)];
  const double needed = ratio * static_cast<double>(total);

  CandidateSet out;
  out.total = total;
  out.sensing_edge_slot = sense_hi;
  std::vector<std::size_t> survivors;
  for (;;) {
    ++out.passes;
    survivors.clear();
    for (std::size_t c = 0; c < total; ++c) {
      bool excluded = false;
      for (int rx = 0; rx < kNumPriorities && !excluded; ++rx)
        excluded = strongest[c][rx] > threshold[rx] + out.threshold_offset_db;
      if (!excluded) survivors.push_back(c);
    }
    if (static_cast<double>(survivors.size()) >= needed) break;
    out.threshold_offset_db = cfg.relax_step_db * out.passes;
  }

  if (cfg.rank_by_rsrp) {
    auto level = [&](std::size_t c) { return *std::max_element(strongest[c].begin(), strongest[c].end()); };
    std::stable_sort(survivors.begin(), survivors.end(),
                     [&](std::size_t a, std::size_t b) { return level(a) < level(b); });
    const auto keep = static_cast<std::size_t>(std::ceil(needed));
    if (survivors.size() > keep && keep > 0) survivors.resize(keep);
    std::sort(survivors.begin(), survivors.end());
  }

  out.resources.reserve(survivors.size());
  for (std::size_t c : survivors) {
    const auto slot = slots[c / static_cast<std::size_t>(starts)];
    const int start = static_cast<int>(c % static_cast<std::size_t>(starts));
    out.resources.push_back(Resource{slot, start, l});
  }
  return out;
}

// ---------------------------------------------------------------------------
// MAC selection and grant maintenance
// ---------------------------------------------------------------------------

struct GrantParams {
  int period_ms = 0;
  int priority = 0;
  int counter_min = 5;
  int counter_max = 15;
};

/// Draws `n_tx` candidates uniformly without replacement, at most one per slot.
template <class URBG>
Grant mac_select(std::span<const Resource> candidates, int n_tx, URBG& rng, const GrantParams& params = {}) {
  if (n_tx < 1 || n_tx > 3) fail(Errc::invalid_argument, "a grant holds 1..3 resources");
  if (static_cast<int>(candidates.size()) < n_tx)
    fail(Errc::insufficient_candidates, std::to_string(candidates.size()) + " candidates for " +
                                            std::to_string(n_tx) + " transmissions");
  std::vector<Resource> pool(candidates.begin(), candidates.end());
  Grant g;
  while (static_cast<int>(g.resources.size()) < n_tx) {
    if (pool.empty())
      fail(Errc::insufficient_candidates, "candidates span fewer than " + std::to_string(n_tx) + " distinct slots");
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    const Resource r = pool[pick(rng)];
    g.resources.push_back(r);
    std::erase_if(pool, [&](const Resource& c) { return c.slot_index == r.slot_index; });
  }
  std::sort(g.resources.begin(), g.resources.end());
  g.period_ms = params.period_ms;
  g.creating_priority = params.priority;
  if (params.period_ms > 0) {
    std::uniform_int_distribution<int> counter(params.counter_min, params.counter_max);
    g.reselection_counter = counter(rng);
  }
  return g;
}

struct Reevaluation {
  bool keep = true;
  std::vector<Resource> reselect;
};

/// Checks resources due within the lead time against SCIs decoded after the
/// grant's sensing window, using the threshold level the selection ended at.
inline Reevaluation reevaluate(const Grant& grant, const SensingDb& db, SlotIndex now_slot, int own_priority,
                               const SelectionConfig& cfg, const ResourcePool& pool) {
  Reevaluation out;
  for (const auto& res : grant.resources) {
    if (res.slot_index <= now_slot || res.slot_index > now_slot + cfg.reevaluation_lead_slots) continue;
    bool excluded = false;
    for (const auto& e : db.entries()) {
      if (e.observed_slot <= grant.sensing_edge_slot || e.observed_slot > now_slot) continue;
      if (may_claim(pool, own_priority, e.rx_priority)) continue;
      if (!(e.rsrp_dbm > pool.rsrp_thresholds.at(e.rx_priority, own_priority) + grant.threshold_offset_db)) continue;
      excluded = std::any_of(e.reserved_resources.begin(), e.reserved_resources.end(),
                             [&](const Resource& r) { return r.overlaps(res); });
      if (excluded) break;
    }
    if (excluded) out.reselect.push_back(res);
  }
  out.keep = out.reselect.empty();
  return out;
}

enum class PreemptionAction { none, release, request_preemption };

struct PreemptionOutcome {
  PreemptionAction action = PreemptionAction::none;
  std::vector<SlotIndex> slots;     // contested slots
  std::vector<Resource> released;   // every grant resource in a contested slot
};

inline PreemptionOutcome preemption_check(const Grant& grant, const SensingEntry& incoming, const ResourcePool& pool,
                                          int own_priority) {
  PreemptionOutcome out;
  for (const auto& mine : grant.resources)
    for (const auto& theirs : incoming.reserved_resources)
      if (mine.overlaps(theirs)) {
        out.slots.push_back(mine.slot_index);
        break;
      }
  std::sort(out.slots.begin(), out.slots.end());
  out.slots.erase(std::unique(out.slots.begin(), out.slots.end()), out.slots.end());
  if (out.slots.empty()) return out;

  if (pool.preemption_enabled && incoming.rx_priority < own_priority) {
    out.action = PreemptionAction::release;
    for (const auto& mine : grant.resources)
      if (std::binary_search(out.slots.begin(), out.slots.end(), mine.slot_index)) out.released.push_back(mine);
  } else if (may_claim(pool, own_priority, incoming.rx_priority)) {
    out.action = PreemptionAction::request_preemption;
  } else {
    out.slots.clear();
  }
  return out;
}

enum class ReselectionEvent { counter_expired, preemption_release, reevaluation_fail, new_tb_no_grant, pdb_violation };

inline std::string_view to_string(ReselectionEvent e) noexcept {
  switch (e) {
    case ReselectionEvent::counter_expired: return "counter-expired";
    case ReselectionEvent::preemption_release: return "preemption-release";
    case ReselectionEvent::reevaluation_fail: return "reevaluation-fail";
    case ReselectionEvent::new_tb_no_grant: return "new-tb-no-grant";
    case ReselectionEvent::pdb_violation: return "pdb-violation";
  }
  return "unknown";
}

inline bool reselection_trigger(const Grant& grant, ReselectionEvent event) noexcept {
  if (event == ReselectionEvent::counter_expired) return grant.periodic() && grant.reselection_counter <= 0;
  return true;
}

}  // namespace nrsl
