#pragma once

#include <algorithm>
#include <array>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "nrsl/error.hpp"

namespace nrsl {

using SlotIndex = std::int64_t;

inline constexpr int kNumPriorities = 8;

// ---------------------------------------------------------------------------
// Numerology
// ---------------------------------------------------------------------------

enum class CyclicPrefix { normal, extended };

struct Numerology {
  int mu = 0;
  int scs_khz = 15;
  CyclicPrefix cp = CyclicPrefix::normal;
  double slot_duration_us = 1000.0;

  [[nodiscard]] int slots_per_ms() const noexcept { return 1 << mu; }
  [[nodiscard]] int symbols_per_slot() const noexcept {
    return cp == CyclicPrefix::normal ? 14 : 12;
  }
  /// Whole slots covering `ms` milliseconds.
  [[nodiscard]] SlotIndex ms_to_slots(double ms) const noexcept {
    return static_cast<SlotIndex>(ms * slots_per_ms() + 0.5);
  }
  [[nodiscard]] double slots_to_ms(SlotIndex slots) const noexcept {
    return static_cast<double>(slots) / slots_per_ms();
  }
};

/// Sub-carrier spacing is 15 * 2^mu kHz; the extended cyclic prefix exists only at mu = 2.
inline Numerology make_numerology(int mu, CyclicPrefix cp = CyclicPrefix::normal) {
  if (mu < 0 || mu > 3) fail(Errc::invalid_mu, "mu must be in {0,1,2,3}, got " + std::to_string(mu));
  if (cp == CyclicPrefix::extended && mu != 2)
    fail(Errc::extended_cp_unsupported, "extended CP requires mu = 2, got mu = " + std::to_string(mu));
  Numerology n;
  n.mu = mu;
  n.scs_khz = 15 << mu;
  n.cp = cp;
  n.slot_duration_us = 1000.0 / static_cast<double>(1 << mu);
  return n;
}

// ---------------------------------------------------------------------------
// Slot format
// ---------------------------------------------------------------------------

struct SymbolRange {
  int first = 0;
  int count = 0;

  [[nodiscard]] bool empty() const noexcept { return count == 0; }
  [[nodiscard]] int last() const noexcept { return first + count - 1; }
  [[nodiscard]] bool contains(int symbol) const noexcept {
    return count > 0 && symbol >= first && symbol <= last();
  }
  friend bool operator==(const SymbolRange&, const SymbolRange&) = default;
};

/// Raw per-symbol role assignment, validated by build_slot_format().
struct SymbolLayout {
  int symbols_per_slot = 14;
  std::optional<int> agc_symbol;
  std::vector<int> pscch_symbols;
  std::vector<int> pssch_symbols;
  std::vector<int> psfch_symbols;
  std::vector<int> ssb_symbols;
  std::vector<int> guard_symbols;
};

struct SlotFormat {
  int symbols_per_slot = 14;
  std::optional<int> agc_symbol_index;
  SymbolRange pscch_symbol_range;
  SymbolRange pssch_symbol_range;
  SymbolRange psfch_symbol_range;
  std::vector<int> guard_symbol_indices;
};

namespace detail {

inline std::optional<SymbolRange> contiguous_range(std::vector<int> symbols) {
  if (symbols.empty()) return SymbolRange{};
  std::sort(symbols.begin(), symbols.end());
  for (std::size_t i = 1; i < symbols.size(); ++i)
    if (symbols[i] != symbols[i - 1] + 1) return std::nullopt;
  return SymbolRange{symbols.front(), static_cast<int>(symbols.size())};
}

}  // namespace detail

inline SlotFormat build_slot_format(const SymbolLayout& layout) {
  const int n = layout.symbols_per_slot;
  if (n != 12 && n != 14) fail(Errc::symbol_out_of_range, "symbols_per_slot must be 12 or 14");

  auto check_range = [n](const std::vector<int>& symbols, const char* what) {
    for (int s : symbols)
      if (s < 0 || s >= n)
        fail(Errc::symbol_out_of_range, std::string(what) + " symbol " + std::to_string(s) + " outside slot");
  };
  check_range(layout.pscch_symbols, "PSCCH");
  check_range(layout.pssch_symbols, "PSSCH");
  check_range(layout.psfch_symbols, "PSFCH");
  check_range(layout.ssb_symbols, "S-SSB");
  check_range(layout.guard_symbols, "guard");
  if (layout.agc_symbol && (*layout.agc_symbol < 0 || *layout.agc_symbol >= n))
    fail(Errc::symbol_out_of_range, "AGC symbol outside slot");

  const std::set<int> pssch(layout.pssch_symbols.begin(), layout.pssch_symbols.end());
  const std::set<int> psfch(layout.psfch_symbols.begin(), layout.psfch_symbols.end());
  const std::set<int> ssb(layout.ssb_symbols.begin(), layout.ssb_symbols.end());
  const std::set<int> guards(layout.guard_symbols.begin(), layout.guard_symbols.end());

  if (pssch.empty()) fail(Errc::pssch_noncontiguous, "PSSCH occupies no symbols");
  if (pssch.size() != layout.pssch_symbols.size())
    fail(Errc::pssch_noncontiguous, "duplicate PSSCH symbols");
  auto pssch_range = detail::contiguous_range(layout.pssch_symbols);
  if (!pssch_range) fail(Errc::pssch_noncontiguous, "PSSCH symbols must form one consecutive run");

  for (int s : pssch)
    if (psfch.contains(s))
      fail(Errc::pssch_overlaps_psfch, "PSSCH and PSFCH share symbol " + std::to_string(s));
  if (pssch.contains(n - 1)) fail(Errc::pssch_uses_last_symbol, "PSSCH may not use the last symbol of the slot");

  for (int s : layout.pscch_symbols)
    if (!pssch.contains(s))
      fail(Errc::symbol_conflict, "PSCCH symbol " + std::to_string(s) + " outside the PSSCH symbols");

  // AGC, S-SSB, PSFCH, guard and PSSCH are mutually exclusive symbol roles.
  std::map<int, int> owners;
  auto claim = [&owners](int s) {
    if (++owners[s] > 1) fail(Errc::symbol_conflict, "symbol " + std::to_string(s) + " has two roles");
  };
  for (int s : pssch) claim(s);
  for (int s : psfch) claim(s);
  for (int s : ssb) claim(s);
  if (layout.agc_symbol) claim(*layout.agc_symbol);
  for (int s : guards) {
    if (owners.contains(s)) fail(Errc::guard_misplaced, "guard symbol " + std::to_string(s) + " overlaps another role");
    const int prev = s - 1;
    if (prev < 0 || !(pssch.contains(prev) || psfch.contains(prev) || ssb.contains(prev)))
      fail(Errc::guard_misplaced,
           "guard symbol " + std::to_string(s) + " does not immediately follow PSSCH, PSFCH or S-SSB");
  }

  auto psfch_range = detail::contiguous_range(layout.psfch_symbols);
  if (!psfch_range) fail(Errc::symbol_conflict, "PSFCH symbols must be consecutive");
  auto pscch_range = detail::contiguous_range(layout.pscch_symbols);
  if (!pscch_range) fail(Errc::symbol_conflict, "PSCCH symbols must be consecutive");

  SlotFormat f;
  f.symbols_per_slot = n;
  f.agc_symbol_index = layout.agc_symbol;
  f.pscch_symbol_range = *pscch_range;
  f.pssch_symbol_range = *pssch_range;
  f.psfch_symbol_range = *psfch_range;
  f.guard_symbol_indices.assign(guards.begin(), guards.end());
  return f;
}

/// Standard layouts: AGC first, PSCCH on the first PSSCH symbols, optional PSFCH
/// block at the slot end, guard after each transmit region.
inline SymbolLayout default_symbol_layout(CyclicPrefix cp, bool with_psfch) {
  SymbolLayout l;
  l.symbols_per_slot = cp == CyclicPrefix::normal ? 14 : 12;
  const int last = l.symbols_per_slot - 1;
  l.agc_symbol = 0;
  const int pssch_end = with_psfch ? last - 4 : last - 1;
  for (int s = 1; s <= pssch_end; ++s) l.pssch_symbols.push_back(s);
  l.pscch_symbols = {1, 2, 3};
  if (with_psfch) {
    l.guard_symbols.push_back(pssch_end + 1);
    l.psfch_symbols = {last - 2, last - 1};
  }
  l.guard_symbols.push_back(last);
  return l;
}

// ---------------------------------------------------------------------------
// Bandwidth part
// ---------------------------------------------------------------------------

/// Transmission bandwidth in PRBs per (SCS, channel bandwidth).
class PrbTable {
 public:
  static PrbTable defaults() {
    PrbTable t;
    t.set(15, 10, 52);
    t.set(15, 20, 106);
    t.set(15, 30, 160);
    t.set(15, 40, 216);
    t.set(30, 10, 24);
    t.set(30, 20, 51);
    t.set(30, 30, 78);
    t.set(30, 40, 106);
    t.set(60, 10, 11);
    t.set(60, 20, 24);
    t.set(60, 30, 38);
    t.set(60, 40, 51);
    return t;
  }

  void set(int scs_khz, int bandwidth_mhz, int prbs) { table_[{scs_khz, bandwidth_mhz}] = prbs; }

  [[nodiscard]] std::optional<int> lookup(int scs_khz, int bandwidth_mhz) const {
    auto it = table_.find({scs_khz, bandwidth_mhz});
    if (it == table_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::map<std::pair<int, int>, int> table_;
};

struct Bwp {
  double carrier_freq_mhz = 5900.0;
  int bandwidth_mhz = 10;
  Numerology numerology;
  int prb_count = 52;
};

inline Bwp make_bwp(double carrier_freq_mhz, int bandwidth_mhz, const Numerology& numerology,
                    std::optional<int> prb_override = std::nullopt,
                    const PrbTable& table = PrbTable::defaults()) {
  if (bandwidth_mhz != 10 && bandwidth_mhz != 20 && bandwidth_mhz != 30 && bandwidth_mhz != 40)
    fail(Errc::invalid_bandwidth, "SL bandwidth must be one of 10, 20, 30, 40 MHz");
  if (carrier_freq_mhz <= 0) fail(Errc::invalid_argument, "carrier frequency must be positive");
  Bwp b;
  b.carrier_freq_mhz = carrier_freq_mhz;
  b.bandwidth_mhz = bandwidth_mhz;
  b.numerology = numerology;
  if (prb_override) {
    if (*prb_override <= 0) fail(Errc::invalid_argument, "prb_count must be positive");
    b.prb_count = *prb_override;
  } else {
    auto prbs = table.lookup(numerology.scs_khz, bandwidth_mhz);
    if (!prbs)
      fail(Errc::prb_count_unknown, "no PRB count for " + std::to_string(numerology.scs_khz) + " kHz / " +
                                        std::to_string(bandwidth_mhz) + " MHz; set prb_count explicitly");
    b.prb_count = *prbs;
  }
  return b;
}

// ---------------------------------------------------------------------------
// Resource pool
// ---------------------------------------------------------------------------

enum class PoolKind { normal, exceptional };
enum class PoolRole { transmit, receive, both };

/// SL-RSRP exclusion thresholds indexed by [received-SCI priority][own priority].
struct RsrpThresholdTable {
  std::array<std::array<double, kNumPriorities>, kNumPriorities> dbm{};

  /// base + step * (rx - own): reservations carrying lower-priority traffic
  /// than our own need more power before they exclude a candidate.
  static RsrpThresholdTable linear(double base_dbm, double priority_step_db) {
    RsrpThresholdTable t;
    for (int rx = 0; rx < kNumPriorities; ++rx)
      for (int own = 0; own < kNumPriorities; ++own) t.dbm[rx][own] = base_dbm + priority_step_db * (rx - own);
    return t;
  }
  [[nodiscard]] double at(int rx_priority, int own_priority) const { return dbm.at(rx_priority).at(own_priority); }
};

struct PoolConfig {
  int pool_id = 0;
  int prb_offset = 0;
  int subchannel_size_prb = 10;
  std::optional<int> num_subchannels;  // default: as many as fit
  std::vector<bool> slot_bitmap{true};
  int psfch_period_slots = 0;
  RsrpThresholdTable rsrp_thresholds = RsrpThresholdTable::linear(-110.0, 2.0);
  double cbr_busy_threshold_dbm = -94.0;
  bool preemption_enabled = false;
  int preemption_priority_threshold = 3;
  PoolKind kind = PoolKind::normal;
  PoolRole role = PoolRole::both;
};

struct PrbRange {
  int first = 0;
  int count = 0;
  [[nodiscard]] int end() const noexcept { return first + count; }
  friend bool operator==(const PrbRange&, const PrbRange&) = default;
};

struct Resource {
  SlotIndex slot_index = 0;
  int subchannel_start = 0;
  int subchannel_len = 1;

  [[nodiscard]] int subchannel_end() const noexcept { return subchannel_start + subchannel_len; }
  [[nodiscard]] bool overlaps(const Resource& o) const noexcept {
    return slot_index == o.slot_index && subchannel_start < o.subchannel_end() &&
           o.subchannel_start < subchannel_end();
  }
  friend auto operator<=>(const Resource&, const Resource&) = default;
};

inline std::string to_string(const Resource& r) {
  return "(" + std::to_string(r.slot_index) + "," + std::to_string(r.subchannel_start) + "+" +
         std::to_string(r.subchannel_len) + ")";
}

class ResourcePool {
 public:
  int pool_id = 0;
  Bwp bwp;
  int prb_offset = 0;
  int subchannel_size_prb = 10;
  int num_subchannels = 0;
  std::vector<bool> slot_bitmap{true};
  int psfch_period_slots = 0;
  RsrpThresholdTable rsrp_thresholds;
  double cbr_busy_threshold_dbm = -94.0;
  bool preemption_enabled = false;
  int preemption_priority_threshold = 3;
  PoolKind kind = PoolKind::normal;
  PoolRole role = PoolRole::both;

  [[nodiscard]] const Numerology& numerology() const noexcept { return bwp.numerology; }

  [[nodiscard]] bool is_sl_slot(SlotIndex slot) const noexcept {
    if (slot < 0) return false;
    return slot_bitmap[static_cast<std::size_t>(slot % static_cast<SlotIndex>(slot_bitmap.size()))];
  }

  /// Number of SL slots in [from, to], inclusive.
  [[nodiscard]] SlotIndex sl_slot_count(SlotIndex from, SlotIndex to) const noexcept {
    if (to < from) return 0;
    return prefix(to + 1) - prefix(from);
  }

  [[nodiscard]] bool contains(const Resource& r) const noexcept {
    return r.subchannel_start >= 0 && r.subchannel_len >= 1 && r.subchannel_end() <= num_subchannels &&
           is_sl_slot(r.slot_index);
  }

  /// PRBs of subchannel `index`, relative to the BWP start.
  [[nodiscard]] PrbRange subchannel_prbs(int index) const noexcept {
    return {prb_offset + index * subchannel_size_prb, subchannel_size_prb};
  }
  [[nodiscard]] PrbRange resource_prbs(const Resource& r) const noexcept {
    return {prb_offset + r.subchannel_start * subchannel_size_prb, r.subchannel_len * subchannel_size_prb};
  }

 private:
  // SL slots in [0, x).
  [[nodiscard]] SlotIndex prefix(SlotIndex x) const noexcept {
    if (x <= 0) return 0;
    const auto period = static_cast<SlotIndex>(slot_bitmap.size());
    const SlotIndex ones = std::count(slot_bitmap.begin(), slot_bitmap.end(), true);
    SlotIndex total = (x / period) * ones;
    for (SlotIndex i = 0; i < x % period; ++i) total += slot_bitmap[static_cast<std::size_t>(i)] ? 1 : 0;
    return total;
  }
};

/// Partitions the BWP (from `prb_offset`) into equal consecutive subchannels;
/// PRBs left over after the last whole subchannel are unused.
inline ResourcePool build_resource_pool(const Bwp& bwp, const PoolConfig& cfg) {
  if (cfg.subchannel_size_prb < 10)
    fail(Errc::subchannel_too_small,
         "subchannel size must be >= 10 PRBs, got " + std::to_string(cfg.subchannel_size_prb));
  if (cfg.prb_offset < 0) fail(Errc::invalid_argument, "prb_offset must be >= 0");
  const int usable = bwp.prb_count - cfg.prb_offset;
  const int fit = usable > 0 ? usable / cfg.subchannel_size_prb : 0;
  int n = cfg.num_subchannels.value_or(fit);
  if (n < 1 || n > fit)
    fail(Errc::pool_exceeds_bwp, "pool needs " + std::to_string(std::max(n, 1) * cfg.subchannel_size_prb) +
                                     " PRBs from offset " + std::to_string(cfg.prb_offset) + " but BWP has " +
                                     std::to_string(bwp.prb_count));
  if (cfg.slot_bitmap.empty() || std::none_of(cfg.slot_bitmap.begin(), cfg.slot_bitmap.end(), [](bool b) { return b; }))
    fail(Errc::invalid_argument, "slot bitmap must contain at least one SL slot");
  if (cfg.psfch_period_slots != 0 && cfg.psfch_period_slots != 1 && cfg.psfch_period_slots != 2 &&
      cfg.psfch_period_slots != 4)
    fail(Errc::invalid_argument, "psfch_period_slots must be one of 0, 1, 2, 4");
  if (cfg.preemption_priority_threshold < 0 || cfg.preemption_priority_threshold >= kNumPriorities)
    fail(Errc::invalid_argument, "preemption_priority_threshold must be 0..7");

  ResourcePool p;
  p.pool_id = cfg.pool_id;
  p.bwp = bwp;
  p.prb_offset = cfg.prb_offset;
  p.subchannel_size_prb = cfg.subchannel_size_prb;
  p.num_subchannels = n;
  p.slot_bitmap = cfg.slot_bitmap;
  p.psfch_period_slots = cfg.psfch_period_slots;
  p.rsrp_thresholds = cfg.rsrp_thresholds;
  p.cbr_busy_threshold_dbm = cfg.cbr_busy_threshold_dbm;
  p.preemption_enabled = cfg.preemption_enabled;
  p.preemption_priority_threshold = cfg.preemption_priority_threshold;
  p.kind = cfg.kind;
  p.role = cfg.role;
  return p;
}

inline std::vector<PrbRange> subchannel_prb_ranges(const ResourcePool& pool) {
  std::vector<PrbRange> out;
  out.reserve(static_cast<std::size_t>(pool.num_subchannels));
  for (int i = 0; i < pool.num_subchannels; ++i) out.push_back(pool.subchannel_prbs(i));
  return out;
}

/// SL slots of the pool within [from_slot, to_slot], ascending.
inline std::vector<SlotIndex> sl_slots_in(const ResourcePool& pool, SlotIndex from_slot, SlotIndex to_slot) {
  std::vector<SlotIndex> out;
  for (SlotIndex s = std::max<SlotIndex>(from_slot, 0); s <= to_slot; ++s)
    if (pool.is_sl_slot(s)) out.push_back(s);
  return out;
}

inline std::vector<bool> parse_slot_bitmap(const std::string& bits) {
  std::vector<bool> out;
  for (char c : bits) {
    if (c == '1') out.push_back(true);
    else if (c == '0') out.push_back(false);
    else fail(Errc::invalid_argument, "slot bitmap may contain only '0' and '1'");
  }
  if (out.empty()) fail(Errc::invalid_argument, "slot bitmap is empty");
  return out;
}

}  // namespace nrsl
