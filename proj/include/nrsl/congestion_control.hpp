#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "nrsl/error.hpp"
#include "nrsl/radio_grid.hpp"

namespace nrsl {

struct CongestionConfig {
  double cbr_window_ms = 100.0;
  double cr_window_ms = 1000.0;
  double cr_past_ms = 500.0;  // the rest of the window, minus the current slot, looks ahead
  int cbr_interval_ms = 1;

  void validate() const {
    if (cbr_window_ms != 100.0) fail(Errc::invalid_argument, "CBR window is 100 ms");
    if (cr_window_ms != 1000.0) fail(Errc::invalid_argument, "CR window is 1000 ms");
    if (cbr_interval_ms != 1 && cbr_interval_ms != 2) fail(Errc::invalid_argument, "CBR interval must be 1 or 2 ms");
    if (cr_past_ms < 0 || cr_past_ms >= cr_window_ms) fail(Errc::invalid_argument, "cr_past_ms must be in [0, window)");
  }
};

struct CbrMeasurement {
  double ratio = 0.0;
  bool warm_up = true;  // fewer than a full window of slots observed
};

/// Per-UE channel load view of one pool: busy subchannel counts over the last
/// 100 ms for CBR and own used/reserved subchannels over 1000 ms for CR.
/// Both are maintained incrementally.
class ChannelLoadState {
 public:
  ChannelLoadState(const ResourcePool& pool, const CongestionConfig& cfg = {})
      : pool_(pool),
        cfg_(cfg),
        cbr_window_slots_(pool.numerology().ms_to_slots(cfg.cbr_window_ms)),
        cr_past_slots_(pool.numerology().ms_to_slots(cfg.cr_past_ms)),
        cr_future_slots_(pool.numerology().ms_to_slots(cfg.cr_window_ms) - cr_past_slots_ - 1) {
    cfg_.validate();
  }

  [[nodiscard]] const ResourcePool& pool() const noexcept { return pool_; }
  [[nodiscard]] const CongestionConfig& config() const noexcept { return cfg_; }
  [[nodiscard]] SlotIndex cbr_window_slots() const noexcept { return cbr_window_slots_; }
  [[nodiscard]] SlotIndex cr_past_slots() const noexcept { return cr_past_slots_; }
  [[nodiscard]] SlotIndex cr_future_slots() const noexcept { return cr_future_slots_; }

  // -- CBR ------------------------------------------------------------------

  /// Records the energy sensed on each subchannel in SL slot `slot`; slots
  /// must be recorded in increasing order.
  void record_slot(SlotIndex slot, std::span<const double> subchannel_energy_dbm) {
    if (static_cast<int>(subchannel_energy_dbm.size()) != pool_.num_subchannels)
      fail(Errc::invalid_argument, "one energy value per subchannel required");
    if (!history_.empty() && slot <= history_.back().slot)
      fail(Errc::invalid_argument, "CBR history must be recorded in increasing slot order");
    int busy = 0;
    for (double e : subchannel_energy_dbm)
      if (e > pool_.cbr_busy_threshold_dbm) ++busy;
    if (first_recorded_ < 0) first_recorded_ = slot;
    history_.push_back({slot, busy});
    busy_total_ += busy;
    prune_cbr(slot);
  }

  /// Fraction of busy (slot, subchannel) cells among the SL slots in (now - window, now].
  CbrMeasurement measure_cbr(SlotIndex now) {
    prune_cbr(now);
    CbrMeasurement m;
    m.warm_up = first_recorded_ < 0 || now - first_recorded_ + 1 < cbr_window_slots_;
    // Entries recorded after `now` are not part of this measurement.
    std::int64_t busy = busy_total_;
    auto slots = static_cast<std::int64_t>(history_.size());
    for (auto it = history_.rbegin(); it != history_.rend() && it->slot > now; ++it) {
      busy -= it->busy;
      --slots;
    }
    const std::int64_t cells = slots * pool_.num_subchannels;
    m.ratio = cells > 0 ? static_cast<double>(busy) / static_cast<double>(cells) : 0.0;
    return m;
  }

  [[nodiscard]] std::int64_t busy_cells() const noexcept { return busy_total_; }

  // -- CR -------------------------------------------------------------------

  void add_usage(SlotIndex slot, int subchannels) {
    if (subchannels <= 0) return;
    usage_[slot] += subchannels;
    if (cr_valid_ && slot >= cr_lo_ && slot <= cr_hi_) cr_sum_ += subchannels;
  }

  void remove_usage(SlotIndex slot, int subchannels) {
    auto it = usage_.find(slot);
    if (it == usage_.end() || subchannels <= 0) return;
    const int removed = std::min(subchannels, it->second);
    it->second -= removed;
    if (it->second == 0) usage_.erase(it);
    if (cr_valid_ && slot >= cr_lo_ && slot <= cr_hi_) cr_sum_ -= removed;
  }

  /// (used + reserved subchannels in the window) / (SL slots in window * subchannels).
  double measure_cr(SlotIndex now) {
    const SlotIndex lo = now - cr_past_slots_;
    const SlotIndex hi = now + cr_future_slots_;
    if (!cr_valid_ || lo < cr_lo_ || lo > cr_hi_) {
      cr_sum_ = 0;
      for (auto it = usage_.lower_bound(lo); it != usage_.end() && it->first <= hi; ++it) cr_sum_ += it->second;
    } else {
      for (auto it = usage_.lower_bound(cr_lo_); it != usage_.end() && it->first < lo; ++it) cr_sum_ -= it->second;
      for (auto it = usage_.upper_bound(cr_hi_); it != usage_.end() && it->first <= hi; ++it) cr_sum_ += it->second;
    }
    cr_lo_ = lo;
    cr_hi_ = hi;
    cr_valid_ = true;
    usage_.erase(usage_.begin(), usage_.lower_bound(lo - cr_past_slots_));
    const SlotIndex slots = pool_.sl_slot_count(std::max<SlotIndex>(lo, 0), hi);
    const std::int64_t cells = slots * pool_.num_subchannels;
    return cells > 0 ? std::min(1.0, static_cast<double>(cr_sum_) / static_cast<double>(cells)) : 0.0;
  }

  [[nodiscard]] const std::map<SlotIndex, int>& usage() const noexcept { return usage_; }

 private:
  struct SlotBusy {
    SlotIndex slot;
    int busy;
  };

  void prune_cbr(SlotIndex now) {
    while (!history_.empty() && history_.front().slot <= now - cbr_window_slots_) {
      busy_total_ -= history_.front().busy;
      history_.pop_front();
    }
  }

  ResourcePool pool_;
  CongestionConfig cfg_;
  SlotIndex cbr_window_slots_;
  SlotIndex cr_past_slots_;
  SlotIndex cr_future_slots_;

  std::deque<SlotBusy> history_;
  std::int64_t busy_total_ = 0;
  SlotIndex first_recorded_ = -1;

  std::map<SlotIndex, int> usage_;
  std::int64_t cr_sum_ = 0;
  SlotIndex cr_lo_ = 0;
  SlotIndex cr_hi_ = -1;
  bool cr_valid_ = false;
};

// ---------------------------------------------------------------------------
// CR limits
// ---------------------------------------------------------------------------

/// Maximum CR per (priority, CBR bucket). Buckets: [0, b0), [b0, b1), [b1, b2), [b2, 1].
struct CrLimitTable {
  std::array<double, 3> cbr_bounds{0.30, 0.65, 0.80};
  std::array<std::array<double, 4>, kNumPriorities> limits{};

  static CrLimitTable defaults() {
    CrLimitTable t;
    for (int p = 0; p < kNumPriorities; ++p) {
      t.limits[p][0] = 1.0;
      t.limits[p][1] = 0.080 - 0.0050 * p;
      t.limits[p][2] = 0.040 - 0.0025 * p;
      t.limits[p][3] = 0.020 - 0.00125 * p;
    }
    return t;
  }

  /// Limits must not increase from one priority level to the next lower one.
  void validate() const {
    for (std::size_t i = 1; i < cbr_bounds.size(); ++i)
      if (!(cbr_bounds[i] > cbr_bounds[i - 1])) fail(Errc::malformed_table, "CBR bucket bounds must increase");
    for (int p = 0; p < kNumPriorities; ++p)
      for (int b = 0; b < 4; ++b) {
        const double v = limits[p][b];
        if (!(v >= 0.0 && v <= 1.0)) fail(Errc::malformed_table, "CR limits must lie in [0, 1]");
        if (p > 0 && v > limits[p - 1][b])
          fail(Errc::malformed_table, "priority " + std::to_string(p) + " has a higher CR limit than priority " +
                                          std::to_string(p - 1) + " in CBR bucket " + std::to_string(b));
      }
  }

  [[nodiscard]] int bucket(double cbr) const noexcept {
    int b = 0;
    while (b < 3 && cbr >= cbr_bounds[static_cast<std::size_t>(b)]) ++b;
    return b;
  }
  [[nodiscard]] double limit(int priority, double cbr) const {
    return limits.at(static_cast<std::size_t>(priority))[static_cast<std::size_t>(bucket(cbr))];
  }
};

enum class CrAction { allow, shrink, drop };

inline std::string_view to_string(CrAction a) noexcept {
  switch (a) {
    case CrAction::allow: return "allow";
    case CrAction::shrink: return "shrink";
    case CrAction::drop: return "drop";
  }
  return "unknown";
}

struct CrDecision {
  CrAction action = CrAction::allow;
  double limit = 1.0;
  double cr_before = 0.0;
  double cr_after = 0.0;
  std::vector<Resource> cancelled;
};

/// Keeps the UE's CR within the limit for (priority, CBR). Future reservations
/// are cancelled latest-first; if that is not enough, the cancellations are
/// undone and the pending transmission is withdrawn instead.
inline CrDecision enforce_cr_limit(ChannelLoadState& state, SlotIndex now, double cbr, int priority,
                                   const CrLimitTable& table, std::span<const Resource> cancellable,
                                   std::span<const Resource> pending) {
  CrDecision d;
  d.limit = table.limit(priority, cbr);
  d.cr_before = state.measure_cr(now);
  d.cr_after = d.cr_before;
  if (d.cr_before <= d.limit) return d;

  std::vector<Resource> order(cancellable.begin(), cancellable.end());
  std::sort(order.begin(), order.end(), [](const Resource& a, const Resource& b) { return a.slot_index > b.slot_index; });
  const SlotIndex window_hi = now + state.cr_future_slots();
  for (const auto& r : order) {
    if (r.slot_index <= now || r.slot_index > window_hi) continue;
    state.remove_usage(r.slot_index, r.subchannel_len);
    d.cancelled.push_back(r);
    d.cr_after = state.measure_cr(now);
    if (d.cr_after <= d.limit) {
      d.action = CrAction::shrink;
      return d;
    }
  }
  for (const auto& r : d.cancelled) state.add_usage(r.slot_index, r.subchannel_len);
  d.cancelled.clear();
  for (const auto& r : pending) state.remove_usage(r.slot_index, r.subchannel_len);
  d.action = CrAction::drop;
  d.cr_after = state.measure_cr(now);
  return d;
}

/// Transmission parameter adaptation under congestion: (cbr, priority, mcs,
/// tx power) -> adjusted (mcs, tx power). The default leaves both unchanged.
struct TxParameters {
  int mcs = 0;
  double tx_power_dbm = 23.0;
};
using TxAdaptationHook = std::function<TxParameters(double cbr, int priority, TxParameters)>;

inline TxAdaptationHook identity_adaptation() {
  return [](double, int, TxParameters p) { return p; };
}

}  // namespace nrsl
