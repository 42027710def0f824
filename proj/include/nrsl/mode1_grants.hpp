#pragma once

#include <algorithm>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "nrsl/error.hpp"
#include "nrsl/radio_grid.hpp"

namespace nrsl {

enum class GrantType { type1, type2 };
enum class DciAction { activate, deactivate };

inline std::string_view to_string(GrantType t) noexcept { return t == GrantType::type1 ? "type1" : "type2"; }

/// Periodic sidelink grant issued by the gNB. `resources` hold slot offsets
/// within one period; occurrence k uses slot offset + k * period_slots.
struct ConfiguredGrant {
  int grant_id = 0;
  int ue_id = 0;
  GrantType grant_type = GrantType::type1;
  std::vector<Resource> resources;
  int period_ms = 0;
  SlotIndex period_slots = 0;
  bool active = false;
  SlotIndex activated_at_slot = -1;  // occurrences after this slot may be used

  [[nodiscard]] bool usable_at(SlotIndex slot) const noexcept { return active && slot > activated_at_slot; }

  /// Resources of this grant falling exactly on `slot`.
  [[nodiscard]] std::vector<Resource> resources_at(SlotIndex slot) const {
    std::vector<Resource> out;
    if (period_slots <= 0 || slot < 0) return out;
    const SlotIndex off = slot % period_slots;
    for (const auto& r : resources)
      if (r.slot_index == off) out.push_back(Resource{slot, r.subchannel_start, r.subchannel_len});
    return out;
  }

  /// Absolute resources of all occurrences within [from, to], ascending.
  [[nodiscard]] std::vector<Resource> occurrences(SlotIndex from, SlotIndex to) const {
    std::vector<Resource> out;
    if (period_slots <= 0 || to < from) return out;
    const SlotIndex first_period = std::max<SlotIndex>(from, 0) / period_slots;
    for (SlotIndex base = first_period * period_slots; base <= to; base += period_slots)
      for (const auto& r : resources) {
        const SlotIndex s = base + r.slot_index;
        if (s >= from && s <= to) out.push_back(Resource{s, r.subchannel_start, r.subchannel_len});
      }
    std::sort(out.begin(), out.end());
    return out;
  }
};

namespace detail {

/// Two periodic resources collide for some occurrence iff their offsets agree
/// modulo gcd of the periods and their subchannels intersect.
inline bool periodic_overlap(const Resource& a, SlotIndex pa, const Resource& b, SlotIndex pb) {
  const SlotIndex g = std::gcd(pa, pb);
  if ((a.slot_index - b.slot_index) % g != 0) return false;
  return a.subchannel_start < b.subchannel_end() && b.subchannel_start < a.subchannel_end();
}

}  // namespace detail

/// gNB-side allocator for one mode-1 pool. All configured grants, active or
/// not, are kept pairwise non-overlapping.
class Mode1Scheduler {
 public:
  explicit Mode1Scheduler(ResourcePool pool) : pool_(std::move(pool)) {}

  void register_ue(int ue_id) { ues_.insert(ue_id); }
  [[nodiscard]] const ResourcePool& pool() const noexcept { return pool_; }

  const ConfiguredGrant& configure_grant(int ue_id, GrantType type, std::vector<Resource> pattern, int period_ms) {
    if (!ues_.contains(ue_id)) fail(Errc::unknown_ue, "UE " + std::to_string(ue_id) + " is not served by this gNB");
    const SlotIndex period_slots = pool_.numerology().ms_to_slots(period_ms);
    validate_pattern(pattern, period_slots);
    for (const auto& g : grants_)
      for (const auto& a : g.resources)
        for (const auto& b : pattern)
          if (detail::periodic_overlap(a, g.period_slots, b, period_slots))
            fail(Errc::overlapping_grant, "pattern overlaps grant " + std::to_string(g.grant_id));
    ConfiguredGrant g;
    g.grant_id = next_id_++;
    g.ue_id = ue_id;
    g.grant_type = type;
    g.resources = std::move(pattern);
    std::sort(g.resources.begin(), g.resources.end());
    g.period_ms = period_ms;
    g.period_slots = period_slots;
    g.active = type == GrantType::type1;
    g.activated_at_slot = -1;
    grants_.push_back(std::move(g));
    return grants_.back();
  }

  /// First-fit packing: `n_resources` resources of `l_subch` subchannels in
  /// distinct slots of one period, scanning slot offsets then subchannels.
  const ConfiguredGrant& first_fit(int ue_id, GrantType type, int l_subch, int n_resources, int period_ms) {
    if (!ues_.contains(ue_id)) fail(Errc::unknown_ue, "UE " + std::to_string(ue_id) + " is not served by this gNB");
    if (l_subch < 1 || l_subch > pool_.num_subchannels) fail(Errc::invalid_argument, "l_subch out of range");
    const SlotIndex period_slots = pool_.numerology().ms_to_slots(period_ms);
    std::vector<Resource> chosen;
    for (SlotIndex off = 0; off < period_slots && static_cast<int>(chosen.size()) < n_resources; ++off) {
      if (!pool_.is_sl_slot(off)) continue;
      for (int start = 0; start + l_subch <= pool_.num_subchannels; ++start) {
        Resource cand{off, start, l_subch};
        if (is_free(cand, period_slots)) {
          chosen.push_back(cand);
          break;
        }
      }
    }
    if (static_cast<int>(chosen.size()) < n_resources)
      fail(Errc::overlapping_grant, "mode-1 pool has no room for another grant of this shape");
    return configure_grant(ue_id, type, std::move(chosen), period_ms);
  }

  const ConfiguredGrant& handle_dci(int grant_id, DciAction action, SlotIndex now_slot = 0) {
    auto& g = find(grant_id);
    if (g.grant_type != GrantType::type2)
      fail(Errc::not_type2, "grant " + std::to_string(grant_id) + " is type1 and needs no DCI");
    if (action == DciAction::activate) {
      if (!g.active) g.activated_at_slot = now_slot;
      g.active = true;
    } else {
      g.active = false;
    }
    return g;
  }

  void release(int grant_id) {
    auto it = std::find_if(grants_.begin(), grants_.end(), [&](const auto& g) { return g.grant_id == grant_id; });
    if (it == grants_.end()) fail(Errc::unknown_grant, "no grant " + std::to_string(grant_id));
    grants_.erase(it);
  }

  [[nodiscard]] const ConfiguredGrant& grant(int grant_id) const {
    return const_cast<Mode1Scheduler*>(this)->find(grant_id);
  }
  [[nodiscard]] const std::vector<ConfiguredGrant>& grants() const noexcept { return grants_; }

  /// grant_id,ue_id,type,period_ms,active
  [[nodiscard]] std::string to_csv() const {
    std::ostringstream os;
    os << "grant_id,ue_id,type,period_ms,active\n";
    for (const auto& g : grants_)
      os << g.grant_id << ',' << g.ue_id << ',' << to_string(g.grant_type) << ',' << g.period_ms << ','
         << (g.active ? 1 : 0) << '\n';
    return os.str();
  }

 private:
  ConfiguredGrant& find(int grant_id) {
    auto it = std::find_if(grants_.begin(), grants_.end(), [&](const auto& g) { return g.grant_id == grant_id; });
    if (it == grants_.end()) fail(Errc::unknown_grant, "no grant " + std::to_string(grant_id));
    return *it;
  }

  void validate_pattern(const std::vector<Resource>& pattern, SlotIndex period_slots) const {
    if (period_slots <= 0) fail(Errc::invalid_argument, "grant period must be positive");
    if (period_slots % static_cast<SlotIndex>(pool_.slot_bitmap.size()) != 0)
      fail(Errc::invalid_argument, "grant period must be a multiple of the pool bitmap length");
    if (pattern.empty()) fail(Errc::invalid_argument, "grant pattern is empty");
    for (std::size_t i = 0; i < pattern.size(); ++i) {
      const auto& r = pattern[i];
      if (r.slot_index < 0 || r.slot_index >= period_slots || !pool_.contains(r))
        fail(Errc::assignment_out_of_pool, "pattern resource " + to_string(r) + " is outside the mode-1 pool");
      for (std::size_t j = 0; j < i; ++j)
        if (pattern[j].overlaps(r)) fail(Errc::overlapping_grant, "pattern overlaps itself");
    }
  }

  [[nodiscard]] bool is_free(const Resource& cand, SlotIndex period_slots) const {
    for (const auto& g : grants_)
      for (const auto& r : g.resources)
        if (detail::periodic_overlap(r, g.period_slots, cand, period_slots)) return false;
    return true;
  }

  ResourcePool pool_;
  std::set<int> ues_;
  std::vector<ConfiguredGrant> grants_;
  int next_id_ = 1;
};

/// Random resource for temporary use of the exceptional pool during RLF or
/// handover: uniform over SL slots in [from_slot, to_slot] and start subchannels.
template <class URBG>
Resource allocate_exceptional(const ResourcePool& pool, int l_subch, SlotIndex from_slot, SlotIndex to_slot,
                              URBG& rng) {
  if (pool.kind != PoolKind::exceptional)
    fail(Errc::wrong_pool_kind, "pool " + std::to_string(pool.pool_id) + " is not an exceptional pool");
  if (l_subch < 1 || l_subch > pool.num_subchannels) fail(Errc::invalid_argument, "l_subch out of range");
  const auto slots = sl_slots_in(pool, from_slot, to_slot);
  if (slots.empty()) fail(Errc::empty_selection_window, "no SL slots for exceptional allocation");
  std::uniform_int_distribution<std::size_t> pick_slot(0, slots.size() - 1);
  std::uniform_int_distribution<int> pick_start(0, pool.num_subchannels - l_subch);
  const SlotIndex slot = slots[pick_slot(rng)];
  return Resource{slot, pick_start(rng), l_subch};
}

}  // namespace nrsl
