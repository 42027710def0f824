#pragma once

// Brute-force reference implementations shared by the unit tests and the
// acceptance binary. They favour directness over speed.

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "nrsl/congestion_control.hpp"
#include "nrsl/harq.hpp"
#include "nrsl/sci_codec.hpp"
#include "nrsl/sensing_mode2.hpp"

namespace oracle {

using namespace nrsl;

// ---------------------------------------------------------------------------
// SCI messages
// ---------------------------------------------------------------------------

inline std::uint64_t below(std::mt19937_64& rng, int width) {
  return width >= 64 ? rng() : rng() & ((std::uint64_t{1} << width) - 1);
}

inline Sci1 random_sci1(std::mt19937_64& rng, const SciFieldWidths& w, const ReservationPeriods& periods) {
  Sci1 s;
  s.priority = static_cast<int>(below(rng, w.priority));
  s.freq_resource_assignment = below(rng, w.freq_resource_assignment);
  s.time_resource_assignment = below(rng, w.time_resource_assignment);
  s.resource_reservation_period_ms = periods.values()[rng() % periods.values().size()];
  s.dmrs_pattern = static_cast<int>(below(rng, w.dmrs_pattern));
  s.sci2_format = static_cast<int>(below(rng, w.sci2_format));
  s.mcs = static_cast<int>(below(rng, w.mcs));
  s.reserved_bits = below(rng, w.reserved);
  s.beta_offset = static_cast<int>(below(rng, w.beta_offset));
  s.dmrs_port_indicator = static_cast<int>(below(rng, w.dmrs_ports));
  return s;
}

inline Sci2 random_sci2(std::mt19937_64& rng, const SciFieldWidths& w) {
  Sci2 s;
  s.harq_process_id = static_cast<int>(below(rng, w.harq_process_id));
  s.new_data_indicator = (rng() & 1U) != 0;
  s.redundancy_version = static_cast<int>(below(rng, w.redundancy_version));
  s.source_id = static_cast<std::uint32_t>(below(rng, w.source_id));
  s.destination_id = static_cast<std::uint32_t>(below(rng, w.destination_id));
  s.csi_request = (rng() & 1U) != 0;
  return s;
}

// ---------------------------------------------------------------------------
// Mode-2 candidate selection
// ---------------------------------------------------------------------------

struct Mode2Instance {
  ResourcePool pool;
  SensingDb db;
  SlotIndex trigger = 0;
  SlotIndex pdb = 0;
  int own_priority = 0;
  SelectionConfig cfg;
};

/// Small random instance: <= 5 subchannels, <= 30 window slots, <= 40 sensing entries.
inline Mode2Instance random_mode2_instance(std::mt19937_64& rng) {
  auto uni = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  auto real = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  static constexpr double kRatios[] = {0.20, 0.35, 0.50};
  for (;;) {
    Mode2Instance in;
    PoolConfig pc;
    pc.subchannel_size_prb = 10;
    pc.num_subchannels = uni(1, 5);
    pc.slot_bitmap.assign(static_cast<std::size_t>(uni(1, 4)), false);
    for (auto&& b : pc.slot_bitmap) b = uni(0, 3) != 0;
    pc.slot_bitmap[static_cast<std::size_t>(uni(0, static_cast<int>(pc.slot_bitmap.size()) - 1))] = true;
    for (auto& row : pc.rsrp_thresholds.dbm)
      for (auto& t : row) t = real(-125.0, -85.0);
    pc.preemption_enabled = uni(0, 1) == 1;
    pc.preemption_priority_threshold = uni(0, 7);
    in.pool = build_resource_pool(make_bwp(5900, 10, make_numerology(0)), pc);

    in.cfg.t_proc0_slots = uni(0, 3);
    in.cfg.t_proc1_slots = uni(0, 4);
    in.cfg.l_subch = uni(1, in.pool.num_subchannels);
    for (auto& x : in.cfg.candidate_ratio_by_priority) x = kRatios[uni(0, 2)];
    in.own_priority = uni(0, 7);
    in.trigger = 1200 + uni(0, 50);
    in.pdb = in.cfg.t_proc1_slots + uni(1, 29);
    if (sl_slots_in(in.pool, in.trigger + in.cfg.t_proc1_slots, in.trigger + in.pdb).empty()) continue;

    const int n_entries = uni(0, 40);
    std::vector<SensingEntry> entries;
    for (int k = 0; k < n_entries; ++k) {
      SensingEntry e;
      // Mostly inside the sensing window, some just outside either edge.
      e.observed_slot = in.trigger - uni(90, 1120);
      e.rx_priority = uni(0, 7);
      e.rsrp_dbm = real(-135.0, -50.0);
      for (int r = uni(1, 3); r > 0; --r) {
        Resource res;
        res.slot_index = in.trigger + uni(-2, static_cast<int>(in.pdb) + 2);
        res.subchannel_start = uni(0, in.pool.num_subchannels - 1);
        res.subchannel_len = uni(1, in.pool.num_subchannels - res.subchannel_start);
        e.reserved_resources.push_back(res);
      }
      entries.push_back(std::move(e));
    }
    std::sort(entries.begin(), entries.end(),
              [](const SensingEntry& a, const SensingEntry& b) { return a.observed_slot < b.observed_slot; });
    for (auto& e : entries) in.db.push(std::move(e));
    return in;
  }
}

/// A selecting UE may ignore a reservation when preemption is enabled and its
/// own traffic has higher priority, or when preemption is disabled and the
/// reservation's priority is lower than both the pool threshold and its own.
/// Lower number means higher priority.
inline bool claimable(bool preemption_enabled, int threshold, int own, int rx) {
  const bool rx_lower_than_own = rx > own;
  if (preemption_enabled) return rx_lower_than_own;
  return rx_lower_than_own && rx > threshold;
}

struct BruteSelection {
  std::vector<Resource> resources;
  std::size_t total = 0;
  int passes = 0;
};

inline BruteSelection brute_select(const Mode2Instance& in) {
  const auto& pool = in.pool;
  const auto& cfg = in.cfg;
  const int l = cfg.l_subch;
  const SlotIndex depth = static_cast<SlotIndex>(std::llround(cfg.t0_ms));  // numerology 0: 1 slot per ms
  const SlotIndex gap = std::max<SlotIndex>(static_cast<SlotIndex>(std::llround(cfg.sensing_gap_ms)), cfg.t_proc0_slots);

  std::vector<Resource> all;
  for (SlotIndex s = in.trigger + cfg.t_proc1_slots; s <= in.trigger + in.pdb; ++s) {
    if (!pool.is_sl_slot(s)) continue;
    for (int start = 0; start + l <= pool.num_subchannels; ++start) all.push_back({s, start, l});
  }
  const double x = cfg.candidate_ratio_by_priority[static_cast<std::size_t>(in.own_priority)];

  BruteSelection out;
  out.total = all.size();
  for (int k = 0;; ++k) {
    const double offset = 3.0 * k;
    std::vector<Resource> keep;
    for (const auto& cand : all) {
      bool excluded = false;
      for (const auto& e : in.db.entries()) {
        if (e.observed_slot < in.trigger - depth || e.observed_slot > in.trigger - gap) continue;
        if (claimable(pool.preemption_enabled, pool.preemption_priority_threshold, in.own_priority, e.rx_priority))
          continue;
        if (!(e.rsrp_dbm > pool.rsrp_thresholds.dbm[e.rx_priority][in.own_priority] + offset)) continue;
        for (const auto& r : e.reserved_resources) {
          const bool same_slot = r.slot_index == cand.slot_index;
          const bool freq = r.subchannel_start < cand.subchannel_start + cand.subchannel_len &&
                            cand.subchannel_start < r.subchannel_start + r.subchannel_len;
          if (same_slot && freq) excluded = true;
        }
      }
      if (!excluded) keep.push_back(cand);
    }
    if (static_cast<double>(keep.size()) >= x * static_cast<double>(all.size())) {
      out.resources = std::move(keep);
      out.passes = k + 1;
      return out;
    }
  }
}

/// ceil((max RSRP - min threshold) / 3) + 1, over the entries and thresholds in play.
inline int relaxation_bound(const Mode2Instance& in) {
  double max_rsrp = -1e300;
  for (const auto& e : in.db.entries()) max_rsrp = std::max(max_rsrp, e.rsrp_dbm);
  double min_threshold = 1e300;
  for (int rx = 0; rx < kNumPriorities; ++rx)
    min_threshold = std::min(min_threshold, in.pool.rsrp_thresholds.dbm[rx][in.own_priority]);
  if (in.db.empty() || max_rsrp <= min_threshold) return 1;
  return static_cast<int>(std::ceil((max_rsrp - min_threshold) / 3.0)) + 1;
}

// ---------------------------------------------------------------------------
// CBR / CR
// ---------------------------------------------------------------------------

struct LoadCheck {
  int measurements = 0;
  int mismatches = 0;
  std::string first_mismatch;
};

inline ResourcePool random_load_pool(std::mt19937_64& rng) {
  auto uni = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  PoolConfig pc;
  const int mu = uni(0, 1);
  pc.subchannel_size_prb = 10;
  pc.num_subchannels = uni(1, mu == 0 ? 5 : 2);  // 52 or 24 PRBs in 10 MHz
  pc.slot_bitmap.assign(static_cast<std::size_t>(uni(1, 5)), true);
  for (std::size_t i = 1; i < pc.slot_bitmap.size(); ++i) pc.slot_bitmap[i] = uni(0, 1) == 1;
  pc.cbr_busy_threshold_dbm = -94.0;
  return build_resource_pool(make_bwp(5900, 10, make_numerology(mu)), pc);
}

/// Records a random energy history and compares every CBR measurement with a
/// full recount over (now - window, now].
inline LoadCheck check_cbr_history(std::mt19937_64& rng) {
  auto uni = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  const auto pool = random_load_pool(rng);
  ChannelLoadState state(pool);
  const SlotIndex window = 100 * pool.numerology().slots_per_ms();
  const int busy_pct = uni(0, 100);
  std::map<SlotIndex, int> busy_by_slot;  // recorded slots only
  LoadCheck out;
  const SlotIndex end = uni(50, 600);
  for (SlotIndex now = 0; now < end; ++now) {
    if (pool.is_sl_slot(now) && uni(0, 9) != 0) {
      std::vector<double> energy(static_cast<std::size_t>(pool.num_subchannels));
      int busy = 0;
      for (auto& e : energy) {
        // Exactly at the threshold counts as idle.
        const int roll = uni(0, 99);
        e = roll < busy_pct ? -60.0 : (roll % 7 == 0 ? -94.0 : -110.0);
        busy += e > -94.0;
      }
      state.record_slot(now, energy);
      busy_by_slot[now] = busy;
    }
    if (uni(0, 2) != 0) continue;
    std::int64_t busy = 0, slots = 0;
    for (const auto& [s, b] : busy_by_slot)
      if (s > now - window && s <= now) {
        busy += b;
        ++slots;
      }
    const std::int64_t cells = slots * pool.num_subchannels;
    const double expected = cells > 0 ? static_cast<double>(busy) / static_cast<double>(cells) : 0.0;
    const auto got = state.measure_cbr(now);
    ++out.measurements;
    if (got.ratio != expected || got.ratio < 0.0 || got.ratio > 1.0) {
      if (out.mismatches++ == 0)
        out.first_mismatch = "slot " + std::to_string(now) + ": " + std::to_string(got.ratio) + " vs " + std::to_string(expected);
    }
  }
  return out;
}

/// Brute-force CR: usage summed over [now - past, now + future] divided by the
/// SL subchannel-slots in that window.
inline double brute_cr(const std::map<SlotIndex, int>& usage, const ResourcePool& pool, SlotIndex now, SlotIndex past,
                       SlotIndex future) {
  std::int64_t used = 0;
  for (const auto& [s, n] : usage)
    if (s >= now - past && s <= now + future) used += n;
  std::int64_t sl = 0;
  for (SlotIndex s = std::max<SlotIndex>(0, now - past); s <= now + future; ++s) sl += pool.is_sl_slot(s) ? 1 : 0;
  const std::int64_t cells = sl * pool.num_subchannels;
  return cells > 0 ? std::min(1.0, static_cast<double>(used) / static_cast<double>(cells)) : 0.0;
}

/// Random add/remove usage log with CR measurements at increasing times,
/// followed by one CR-limit enforcement whose result is recomputed.
inline LoadCheck check_cr_history(std::mt19937_64& rng) {
  auto uni = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  const auto pool = random_load_pool(rng);
  ChannelLoadState state(pool);
  const SlotIndex spm = pool.numerology().slots_per_ms();
  const SlotIndex past = 500 * spm, future = 1000 * spm - past - 1;
  std::map<SlotIndex, int> usage;
  LoadCheck out;
  auto mismatch = [&](const std::string& what) {
    if (out.mismatches++ == 0) out.first_mismatch = what;
  };
  SlotIndex now = uni(0, 200);
  const int steps = uni(20, 120);
  for (int step = 0; step < steps; ++step) {
    for (int k = uni(0, 6); k > 0; --k) {
      const SlotIndex s = now + uni(-static_cast<int>(past) - 50, static_cast<int>(future) + 50);
      if (s < 0 || !pool.is_sl_slot(s)) continue;
      const int n = uni(1, pool.num_subchannels);
      if (uni(0, 3) == 0) {
        state.remove_usage(s, n);
        auto it = usage.find(s);
        if (it != usage.end()) {
          it->second -= std::min(n, it->second);
          if (it->second == 0) usage.erase(it);
        }
      } else {
        state.add_usage(s, n);
        usage[s] += n;
      }
    }
    const double got = state.measure_cr(now);
    const double expected = brute_cr(usage, pool, now, past, future);
    ++out.measurements;
    if (got != expected || got < 0.0 || got > 1.0)
      mismatch("slot " + std::to_string(now) + ": " + std::to_string(got) + " vs " + std::to_string(expected));
    now += uni(0, 1) ? uni(1, 5) : uni(1, 400);
  }

  // Enforcement: future reservations are cancellable, the latest is pending.
  std::vector<Resource> future_res;
  for (const auto& [s, n] : usage)
    if (s > now && s <= now + future) future_res.push_back({s, 0, std::min(n, pool.num_subchannels)});
  const double cbr = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  const int priority = uni(0, 7);
  auto table = CrLimitTable::defaults();
  const auto d = enforce_cr_limit(state, now, cbr, priority, table, future_res, {});
  for (const auto& r : d.cancelled) {
    auto it = usage.find(r.slot_index);
    if (it == usage.end()) continue;
    it->second -= std::min(r.subchannel_len, it->second);
    if (it->second == 0) usage.erase(it);
  }
  const double after = brute_cr(usage, pool, now, past, future);
  ++out.measurements;
  if (after != state.measure_cr(now)) mismatch("after enforcement: incremental CR differs from recount");
  if (d.action != CrAction::drop && after > table.limit(priority, cbr)) mismatch("CR above limit after allow/shrink");
  return out;
}

// ---------------------------------------------------------------------------
// HARQ feedback rules
// ---------------------------------------------------------------------------

/// ack_nack answers every attempt; nack_only answers only failures within the
/// communication range; no feedback mode is silent.
inline Feedback expected_feedback(FeedbackMode mode, bool decoded, double distance_m, double range_m) {
  if (mode == FeedbackMode::none) return Feedback::silence;
  if (mode == FeedbackMode::ack_nack) return decoded ? Feedback::ack : Feedback::nack;
  if (decoded) return Feedback::silence;
  return distance_m <= range_m ? Feedback::nack : Feedback::silence;
}

}  // namespace oracle
