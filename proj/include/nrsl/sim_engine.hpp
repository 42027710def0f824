#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "nrsl/congestion_control.hpp"
#include "nrsl/error.hpp"
#include "nrsl/harq.hpp"
#include "nrsl/metrics.hpp"
#include "nrsl/mode1_grants.hpp"
#include "nrsl/phy_model.hpp"
#include "nrsl/radio_grid.hpp"
#include "nrsl/rng.hpp"
#include "nrsl/sci_codec.hpp"
#include "nrsl/sensing_mode2.hpp"
#include "nrsl/traffic_mobility.hpp"

namespace nrsl {

// ---------------------------------------------------------------------------
// Scenario
// ---------------------------------------------------------------------------

struct HighwayConfig {
  double length_m = 2000.0;
  int lanes = 3;
  double lane_width_m = 4.0;
  std::vector<double> lane_speeds_mps{25.0, 30.0, 35.0};
  bool bidirectional = false;  // upper half of the lanes drives towards -x

  void validate() const {
    if (!(length_m > 0)) fail(Errc::invalid_argument, "highway length must be > 0");
    if (lanes < 1) fail(Errc::invalid_argument, "highway needs at least one lane");
    if (!(lane_width_m > 0)) fail(Errc::invalid_argument, "lane width must be > 0");
    if (static_cast<int>(lane_speeds_mps.size()) != lanes)
      fail(Errc::invalid_argument, "one lane speed per lane required");
    for (double v : lane_speeds_mps)
      if (v < 0) fail(Errc::invalid_argument, "lane speeds must be >= 0");
  }
};

enum class Placement { random, uniform, explicit_positions };

struct UeGroupConfig {
  std::string name = "ues";
  int count = 0;
  int mode = 2;
  int pool_id = 0;
  TrafficTemplate traffic;
  Placement placement = Placement::random;
  std::vector<Position> positions;       // explicit placement
  std::optional<double> speed_mps;       // overrides the lane speed
  std::optional<double> first_arrival_ms;  // default: random phase within one period
  std::vector<SyncSource> sync_candidates;
  GrantType grant_type = GrantType::type1;
};

struct PhyConfig {
  McsThresholdTable mcs_table = McsThresholdTable::linear();
  double sci_sinr_threshold_db = -2.0;
  RsrpSource rsrp_source = RsrpSource::pscch;
};

struct MetricsConfig {
  double prr_bin_m = 50.0;
  double prr_max_distance_m = 500.0;
  double warmup_ms = 0.0;
  double load_sample_ms = 100.0;
  bool tx_events = true;
};

/// Temporary use of an exceptional pool by one UE, e.g. during RLF or handover.
struct ExceptionalEvent {
  int ue_id = 0;
  double from_ms = 0.0;
  double to_ms = 0.0;
  int pool_id = 0;
};

struct DciEvent {
  int ue_id = 0;
  DciAction action = DciAction::activate;
  double at_ms = 0.0;
};

struct Scenario {
  std::string name = "scenario";
  std::uint64_t seed = 1;
  double duration_ms = 1000.0;
  Numerology numerology;
  Bwp bwp;
  std::vector<ResourcePool> pools;
  HighwayConfig highway;
  std::vector<UeGroupConfig> groups;
  LinkBudget link;
  PhyConfig phy;
  SelectionConfig selection;
  HarqConfig harq;
  CongestionConfig congestion;
  CrLimitTable cr_limits = CrLimitTable::defaults();
  ReservationPeriods reservation_periods;
  bool gnss_first = true;
  MetricsConfig metrics;
  std::vector<ExceptionalEvent> exceptional_events;
  std::vector<DciEvent> dci_events;
  std::optional<MobilityTrace> mobility_trace;
  TxAdaptationHook adaptation;  // empty: parameters unchanged

  [[nodiscard]] int ue_count() const noexcept {
    int n = 0;
    for (const auto& g : groups) n += g.count;
    return n;
  }

  [[nodiscard]] const ResourcePool* find_pool(int pool_id) const noexcept {
    for (const auto& p : pools)
      if (p.pool_id == pool_id) return &p;
    return nullptr;
  }

  [[nodiscard]] int group_of(int ue_id) const {
    int base = 0;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      if (ue_id < base + groups[g].count) return static_cast<int>(g);
      base += groups[g].count;
    }
    fail(Errc::unknown_ue, "no UE " + std::to_string(ue_id));
  }

  void validate() const {
    if (!(duration_ms > 0)) fail(Errc::invalid_argument, "duration_ms must be > 0");
    if (pools.empty()) fail(Errc::invalid_argument, "at least one resource pool is required");
    std::set<int> ids;
    for (const auto& p : pools) {
      if (!ids.insert(p.pool_id).second) fail(Errc::invalid_argument, "duplicate pool id " + std::to_string(p.pool_id));
      if (p.numerology().mu != numerology.mu) fail(Errc::invalid_argument, "pool numerology differs from the scenario");
    }
    highway.validate();
    link.validate();
    selection.validate();
    harq.validate();
    congestion.validate();
    cr_limits.validate();
    if (!(metrics.prr_bin_m > 0)) fail(Errc::invalid_argument, "prr_bin_m must be > 0");
    if (!(metrics.load_sample_ms > 0)) fail(Errc::invalid_argument, "load_sample_ms must be > 0");
    if (metrics.warmup_ms < 0) fail(Errc::invalid_argument, "warmup_ms must be >= 0");
    if (groups.empty() || ue_count() == 0) fail(Errc::invalid_argument, "scenario has no UEs");
    if (ue_count() > 65535) fail(Errc::invalid_argument, "at most 65535 UEs");

    std::map<int, int> pool_mode;
    for (const auto& g : groups) {
      if (g.count < 0) fail(Errc::invalid_argument, "group '" + g.name + "' has a negative count");
      if (g.mode != 1 && g.mode != 2) fail(Errc::invalid_argument, "group '" + g.name + "': mode must be 1 or 2");
      const ResourcePool* pool = find_pool(g.pool_id);
      if (!pool) fail(Errc::invalid_argument, "group '" + g.name + "' references unknown pool " + std::to_string(g.pool_id));
      if (pool->kind == PoolKind::exceptional)
        fail(Errc::invalid_argument, "group '" + g.name + "' cannot use an exceptional pool as its pool");
      auto [it, inserted] = pool_mode.emplace(g.pool_id, g.mode);
      if (!inserted && it->second != g.mode)
        fail(Errc::invalid_argument, "pool " + std::to_string(g.pool_id) + " is shared by mode-1 and mode-2 groups");
      g.traffic.validate();
      (void)phy.mcs_table.threshold(g.traffic.mcs);
      if (g.traffic.max_tx > selection.max_reserved)
        fail(Errc::invalid_argument, "group '" + g.name + "': max_tx exceeds selection.max_reserved");
      if (g.traffic.l_subch > pool->num_subchannels)
        fail(Errc::invalid_argument, "group '" + g.name + "': l_subch exceeds the pool's subchannels");
      const bool wants_feedback = g.traffic.feedback != FeedbackMode::none && !g.traffic.blind_retransmissions;
      if (wants_feedback && pool->psfch_period_slots == 0)
        fail(Errc::invalid_argument, "group '" + g.name + "' uses HARQ feedback on a pool without PSFCH");
      if (g.traffic.cast_type == CastType::unicast && g.count % 2 != 0)
        fail(Errc::invalid_argument, "unicast group '" + g.name + "' needs an even UE count (pairs)");
      if (g.placement == Placement::explicit_positions && static_cast<int>(g.positions.size()) != g.count)
        fail(Errc::invalid_argument, "group '" + g.name + "': one position per UE required");
      if (g.speed_mps && *g.speed_mps < 0) fail(Errc::invalid_argument, "speed must be >= 0");
      if (g.first_arrival_ms && *g.first_arrival_ms < 0) fail(Errc::invalid_argument, "first_arrival_ms must be >= 0");
      for (const auto& s : g.sync_candidates) {
        std::array<SyncSource, 1> one{s};
        select_sync_source(one, gnss_first);
      }
      if (g.mode == 1) {
        const SlotIndex period = numerology.ms_to_slots(g.traffic.period_ms);
        if (g.traffic.kind != TrafficKind::periodic)
          fail(Errc::invalid_argument, "mode-1 group '" + g.name + "' needs periodic traffic");
        if (period % static_cast<SlotIndex>(pool->slot_bitmap.size()) != 0)
          fail(Errc::invalid_argument, "mode-1 group '" + g.name + "': period must be a multiple of the bitmap length");
      }
    }
    const int n = ue_count();
    for (const auto& e : exceptional_events) {
      if (e.ue_id < 0 || e.ue_id >= n) fail(Errc::unknown_ue, "exceptional event for unknown UE " + std::to_string(e.ue_id));
      const ResourcePool* p = find_pool(e.pool_id);
      if (!p || p->kind != PoolKind::exceptional)
        fail(Errc::wrong_pool_kind, "exceptional event references pool " + std::to_string(e.pool_id) +
                                        ", which is not an exceptional pool");
      if (!(e.to_ms > e.from_ms)) fail(Errc::invalid_argument, "exceptional event must have to_ms > from_ms");
    }
    for (const auto& e : dci_events) {
      if (e.ue_id < 0 || e.ue_id >= n) fail(Errc::unknown_ue, "DCI event for unknown UE " + std::to_string(e.ue_id));
      const auto& g = groups[static_cast<std::size_t>(group_of(e.ue_id))];
      if (g.mode != 1 || g.grant_type != GrantType::type2)
        fail(Errc::not_type2, "DCI event for UE " + std::to_string(e.ue_id) + ", which has no type2 grant");
    }
  }
};

// ---------------------------------------------------------------------------
// Slot records
// ---------------------------------------------------------------------------

struct TxRecord {
  int ue_id = 0;
  int pool_id = 0;
  Resource resource;
  Sci1 sci1;
  Sci2 sci2;
  double power_dbm = 0.0;
  int mcs = 0;
  std::int64_t tb_id = 0;
};

struct RxRecord {
  int ue_id = 0;
  int tx_ue_id = 0;
  RxObservation obs;
  DecodeResult outcome = DecodeResult::failure;
  bool intended = false;
};

struct FeedbackRecord {
  int ue_id = 0;  // transmitter receiving the feedback
  std::int64_t tb_id = 0;
  Feedback feedback = Feedback::silence;
  SlotIndex psfch_slot = 0;
};

struct SlotEvent {
  SlotIndex slot = 0;
  std::vector<TxRecord> tx;
  std::vector<RxRecord> rx;
  std::vector<FeedbackRecord> feedback;

  /// No UE both transmits and decodes in the slot.
  [[nodiscard]] bool half_duplex_ok() const {
    std::set<int> txs;
    for (const auto& t : tx) txs.insert(t.ue_id);
    for (const auto& r : rx)
      if (txs.contains(r.ue_id) && (r.obs.decoded || r.outcome == DecodeResult::success)) return false;
    return true;
  }
};

// ---------------------------------------------------------------------------
// Simulator
// ---------------------------------------------------------------------------

/// Slot-driven world. Phases per slot, in order:
///   0 DCI events, 1 arrivals and resource allocation, 2 transmissions,
///   3 channel and decoding, 4 sensing, preemption and PRR bookkeeping,
///   5 re-evaluation, 6 HARQ feedback, 7 CBR/CR measurement, 8 mobility.
class Simulator {
 public:
  explicit Simulator(Scenario scenario) : sc_(std::move(scenario)) {
    sc_.validate();
    init();
  }

  [[nodiscard]] const Scenario& scenario() const noexcept { return sc_; }
  [[nodiscard]] const Metrics& metrics() const noexcept { return metrics_; }
  [[nodiscard]] SlotIndex current_slot() const noexcept { return slot_; }
  [[nodiscard]] SlotIndex total_slots() const noexcept { return total_slots_; }
  [[nodiscard]] bool finished() const noexcept { return slot_ >= total_slots_; }
  [[nodiscard]] int ue_count() const noexcept { return static_cast<int>(ues_.size()); }
  [[nodiscard]] Position position(int ue) const { return ues_.at(static_cast<std::size_t>(ue)).kin.position_m; }
  [[nodiscard]] const SensingDb& sensing_db(int ue) const { return ues_.at(static_cast<std::size_t>(ue)).sensing; }
  [[nodiscard]] const std::optional<Grant>& grant_of(int ue) const { return ues_.at(static_cast<std::size_t>(ue)).grant; }
  [[nodiscard]] const Mode1Scheduler* scheduler(int pool_id) const {
    auto it = schedulers_.find(pool_id);
    return it == schedulers_.end() ? nullptr : &it->second;
  }

  SlotEvent advance_slot() {
    if (finished()) fail(Errc::runtime_error, "simulation already finished");
    const SlotIndex s = slot_;
    SlotEvent ev;
    ev.slot = s;
    phase_dci(s);
    phase_allocate(s);
    phase_transmit(s, ev);
    std::vector<char> transmitting(ues_.size(), 0);
    for (const auto& t : ev.tx) transmitting[static_cast<std::size_t>(t.ue_id)] = 1;
    phase_channel(s, ev, transmitting);
    phase_sensing(s, ev);
    phase_reevaluate(s);
    phase_feedback(s, ev);
    phase_congestion(s);
    phase_mobility(s);
    if (!ev.half_duplex_ok()) ++metrics_.half_duplex_violations;
    ++metrics_.slots_processed;
    ++slot_;
    if (finished()) finalize();
    return ev;
  }

  Metrics run() {
    while (!finished()) advance_slot();
    return metrics_;
  }

 private:
  struct ActiveTb {
    TransportBlock tb;
    SlotIndex deadline = 0;  // last slot allowed for a transmission
    std::vector<Resource> resources;  // remaining, ascending
    int pool_id = 0;
    int n_tx = 1;
    bool blind = false;
    std::optional<HarqProcess> harq;
    std::vector<int> receivers;  // intended receivers, fixed at the first transmission
    std::vector<double> receiver_distance;
    std::vector<char> delivered;  // per receiver
    bool receivers_fixed = false;
    bool fresh_selection = false;  // re-evaluate before the first use
    SlotIndex last_tx_slot = -1;
    std::optional<SlotIndex> feedback_slot;
    Feedback pending_feedback = Feedback::silence;
    bool via_exceptional = false;
    int harq_id = 0;
  };

  struct Ue {
    int id = 0;
    int group = 0;
    int mode = 2;
    int pool_id = 0;
    TrafficGenerator traffic;
    UeKinematics kin;
    Rng selection_rng;
    Rng harq_rng;
    Rng exceptional_rng;
    SensingDb sensing;
    std::optional<ChannelLoadState> load;
    std::optional<Grant> grant;  // mode 2: resources of the latest committed occurrence
    std::vector<Resource> reserved_next;  // announced next occurrence
    std::set<Resource> counted;  // resources entered into the CR usage
    std::deque<TransportBlock> queue;
    std::optional<ActiveTb> active;
    int next_harq_id = 0;
    int mode1_grant_id = -1;
    double cbr = 0.0;
    SyncSource sync;
  };

  // -- setup ----------------------------------------------------------------

  void init() {
    const Numerology& num = sc_.numerology;
    total_slots_ = num.ms_to_slots(sc_.duration_ms);
    metrics_.slot_duration_ms = num.slots_to_ms(1);
    warmup_slots_ = num.ms_to_slots(sc_.metrics.warmup_ms);
    load_sample_slots_ = std::max<SlotIndex>(1, num.ms_to_slots(sc_.metrics.load_sample_ms));
    cbr_interval_slots_ = std::max<SlotIndex>(1, num.ms_to_slots(sc_.congestion.cbr_interval_ms));

    SlotIndex max_pdb = 1;
    int max_psfch = 0;
    for (const auto& g : sc_.groups) max_pdb = std::max(max_pdb, num.ms_to_slots(g.traffic.pdb_ms));
    for (const auto& p : sc_.pools)
      max_psfch = std::max<int>(max_psfch, p.psfch_period_slots * static_cast<int>(p.slot_bitmap.size()));
    const int offset_bits = std::max(5, static_cast<int>(std::bit_width(static_cast<std::uint64_t>(max_pdb))));
    for (const auto& p : sc_.pools) {
      widths_[p.pool_id] = SciFieldWidths::for_pool(p, offset_bits);
      widths_[p.pool_id].validate();
    }
    horizon_slots_ = sc_.selection.sensing_depth_slots(num) + max_pdb + 1;
    const SlotIndex drain = max_pdb + sc_.harq.min_gap_slots + max_psfch + 2;
    arrival_cutoff_ = std::max<SlotIndex>(0, total_slots_ - drain);

    int id = 0;
    for (std::size_t gi = 0; gi < sc_.groups.size(); ++gi) {
      const auto& g = sc_.groups[gi];
      const ResourcePool& pool = *sc_.find_pool(g.pool_id);
      if (g.mode == 1 && !schedulers_.contains(g.pool_id)) schedulers_.emplace(g.pool_id, Mode1Scheduler(pool));
      for (int k = 0; k < g.count; ++k, ++id) {
        Ue ue;
        ue.id = id;
        ue.group = static_cast<int>(gi);
        ue.mode = g.mode;
        ue.pool_id = g.pool_id;
        Rng placement = substream(sc_.seed, static_cast<std::uint64_t>(id), StreamPurpose::placement);
        ue.kin = place(g, k, placement);
        SlotIndex first = 0;
        if (g.first_arrival_ms) {
          first = num.ms_to_slots(*g.first_arrival_ms);
        } else if (g.traffic.kind == TrafficKind::periodic) {
          const SlotIndex period = std::max<SlotIndex>(1, num.ms_to_slots(g.traffic.period_ms));
          first = std::uniform_int_distribution<SlotIndex>(0, period - 1)(placement);
        }
        Rng traffic_rng = substream(sc_.seed, static_cast<std::uint64_t>(id), StreamPurpose::traffic);
        ue.traffic = TrafficGenerator(g.traffic, num, id, first, traffic_rng());
        if (g.traffic.cast_type == CastType::unicast) ue.traffic.set_destination(id - k + (k ^ 1));
        if (g.traffic.cast_type == CastType::groupcast) ue.traffic.set_destination(static_cast<int>(gi));
        ue.selection_rng = substream(sc_.seed, static_cast<std::uint64_t>(id), StreamPurpose::selection);
        ue.harq_rng = substream(sc_.seed, static_cast<std::uint64_t>(id), StreamPurpose::harq);
        ue.exceptional_rng = substream(sc_.seed, static_cast<std::uint64_t>(id), StreamPurpose::exceptional);
        ue.load.emplace(pool, sc_.congestion);
        ue.sync = select_sync_source(g.sync_candidates, sc_.gnss_first);
        if (!g.sync_candidates.empty())
          event(0, "sync", id, std::string(to_string(ue.sync.kind)) + " hops=" + std::to_string(ue.sync.hops));
        if (g.mode == 1) {
          auto& sched = schedulers_.at(g.pool_id);
          sched.register_ue(id);
          const int n_tx = tx_count_for(g.traffic);
          const auto& cg = sched.first_fit(id, g.grant_type, g.traffic.l_subch, n_tx,
                                           static_cast<int>(std::lround(g.traffic.period_ms)));
          ue.mode1_grant_id = cg.grant_id;
          event(0, "grant", id, "mode1 grant " + std::to_string(cg.grant_id) + " " + std::string(to_string(cg.grant_type)));
        }
        ues_.push_back(std::move(ue));
      }
    }
    if (sc_.mobility_trace)
      for (auto& ue : ues_)
        if (auto p = sc_.mobility_trace->position(ue.id, 0.0)) ue.kin.position_m = *p;
  }

  UeKinematics place(const UeGroupConfig& g, int k, Rng& rng) const {
    const auto& hw = sc_.highway;
    UeKinematics kin;
    if (g.placement == Placement::explicit_positions) {
      kin.position_m = g.positions[static_cast<std::size_t>(k)];
      kin.lane = std::clamp(static_cast<int>(std::floor(kin.position_m.y / hw.lane_width_m)), 0, hw.lanes - 1);
    } else if (g.placement == Placement::uniform) {
      kin.lane = k % hw.lanes;
      kin.position_m.x = hw.length_m * static_cast<double>(k) / std::max(1, g.count);
    } else {
      kin.lane = std::uniform_int_distribution<int>(0, hw.lanes - 1)(rng);
      kin.position_m.x = std::uniform_real_distribution<double>(0.0, hw.length_m)(rng);
    }
    if (g.placement != Placement::explicit_positions) kin.position_m.y = (kin.lane + 0.5) * hw.lane_width_m;
    kin.speed_mps = g.speed_mps.value_or(hw.lane_speeds_mps[static_cast<std::size_t>(kin.lane)]);
    const bool reverse = hw.bidirectional && kin.lane >= (hw.lanes + 1) / 2;
    kin.heading_rad = reverse ? std::numbers::pi : 0.0;
    return kin;
  }

  [[nodiscard]] static int tx_count_for(const TrafficTemplate& t) {
    return (t.blind_retransmissions || t.feedback != FeedbackMode::none) ? t.max_tx : 1;
  }

  [[nodiscard]] const ResourcePool& pool(int pool_id) const { return *sc_.find_pool(pool_id); }
  [[nodiscard]] const UeGroupConfig& group(const Ue& ue) const { return sc_.groups[static_cast<std::size_t>(ue.group)]; }

  void event(SlotIndex slot, std::string type, int ue, std::string detail) {
    metrics_.events.push_back({slot, std::move(type), ue, std::move(detail)});
  }

  // -- CR usage bookkeeping --------------------------------------------------

  static void count_usage(Ue& ue, const Resource& r) {
    if (ue.counted.insert(r).second) ue.load->add_usage(r.slot_index, r.subchannel_len);
  }
  static void uncount_usage(Ue& ue, const Resource& r) {
    if (ue.counted.erase(r) > 0) ue.load->remove_usage(r.slot_index, r.subchannel_len);
  }

  void end_grant(Ue& ue) {
    for (const auto& r : ue.reserved_next) uncount_usage(ue, r);
    ue.reserved_next.clear();
    ue.grant.reset();
  }

  // -- phase 0 ----------------------------------------------------------------

  void phase_dci(SlotIndex s) {
    for (const auto& d : sc_.dci_events) {
      if (sc_.numerology.ms_to_slots(d.at_ms) != s) continue;
      auto& ue = ues_[static_cast<std::size_t>(d.ue_id)];
      auto& sched = schedulers_.at(ue.pool_id);
      sched.handle_dci(ue.mode1_grant_id, d.action, s);
      event(s, "dci", ue.id, d.action == DciAction::activate ? "activate" : "deactivate");
    }
  }

  // -- phase 1 ----------------------------------------------------------------

  [[nodiscard]] const ExceptionalEvent* exceptional_window(int ue, SlotIndex s) const {
    for (const auto& e : sc_.exceptional_events)
      if (e.ue_id == ue && s >= sc_.numerology.ms_to_slots(e.from_ms) && s < sc_.numerology.ms_to_slots(e.to_ms))
        return &e;
    return nullptr;
  }

  void phase_allocate(SlotIndex s) {
    for (auto& ue : ues_) {
      if (s < arrival_cutoff_) {
        for (auto& tb : ue.traffic.next_arrivals(s, next_tb_id_)) {
          ++metrics_.tbs_generated;
          ue.queue.push_back(std::move(tb));
        }
      }
      while (!ue.active && !ue.queue.empty()) {
        TransportBlock tb = ue.queue.front();
        const SlotIndex deadline = tb.created_at_slot + sc_.numerology.ms_to_slots(tb.pdb_ms);
        if (s >= deadline) {
          ue.queue.pop_front();
          finish_unsent(ue, tb, s, TbOutcome::expired_pdb, "delay budget exceeded while queued");
          continue;
        }
        if (!start_tb(ue, tb, deadline, s)) break;  // mode 1 waiting for an active grant
        ue.queue.pop_front();
      }
    }
  }

  /// Allocates resources for a new TB. Returns false when the TB must wait.
  bool start_tb(Ue& ue, const TransportBlock& tb, SlotIndex deadline, SlotIndex s) {
    const auto& tmpl = group(ue).traffic;
    ActiveTb a;
    a.tb = tb;
    a.deadline = deadline;
    a.pool_id = ue.pool_id;
    a.n_tx = tx_count_for(tmpl);
    a.blind = tmpl.blind_retransmissions;
    a.harq_id = ue.next_harq_id;

    if (const auto* exc = exceptional_window(ue.id, s)) {
      const ResourcePool& ep = pool(exc->pool_id);
      const Resource r = allocate_exceptional(ep, std::min(tmpl.l_subch, ep.num_subchannels), s + 1, deadline,
                                              ue.exceptional_rng);
      a.pool_id = exc->pool_id;
      a.resources = {r};
      a.n_tx = 1;
      a.via_exceptional = true;
      event(s, "exceptional", ue.id, "tb " + std::to_string(tb.tb_id) + " on pool " + std::to_string(exc->pool_id) + " " + to_string(r));
    } else if (ue.mode == 1) {
      const auto& cg = schedulers_.at(ue.pool_id).grant(ue.mode1_grant_id);
      std::vector<Resource> occ;
      for (const auto& r : cg.occurrences(s + 1, deadline))
        if (cg.usable_at(s) && static_cast<int>(occ.size()) < a.n_tx) occ.push_back(r);
      if (occ.empty()) {
        if (cg.active) {
          finish_unsent(ue, tb, s, TbOutcome::expired_pdb, "no grant occurrence before the deadline");
          return true;
        }
        return false;
      }
      a.resources = std::move(occ);
    } else {
      if (!allocate_mode2(ue, a, s)) return true;
    }

    ue.next_harq_id = (ue.next_harq_id + 1) % 16;
    HarqConfig hc = sc_.harq;
    hc.max_tx = std::max(1, a.n_tx);
    const FeedbackMode fm = (a.blind || a.via_exceptional) ? FeedbackMode::none : tmpl.feedback;
    a.harq.emplace(a.harq_id, tb.tb_id, tb.cast_type, fm, tb.comm_range_m.value_or(0.0), hc);
    ue.active = std::move(a);
    return true;
  }

  /// Mode-2 allocation: reuse the semi-persistent grant or select anew, then apply the CR limit.
  bool allocate_mode2(Ue& ue, ActiveTb& a, SlotIndex s) {
    const auto& tmpl = group(ue).traffic;
    const ResourcePool& p = pool(ue.pool_id);
    const int prio = a.tb.priority;
    std::vector<Resource> use;
    bool reused = false;

    if (ue.grant && ue.grant->periodic() && ue.grant->reselection_counter > 0) {
      const SlotIndex period = sc_.numerology.ms_to_slots(ue.grant->period_ms);
      std::vector<Resource> occ = ue.grant->resources;
      while (!occ.empty() && occ.front().slot_index <= s)
        for (auto& r : occ) r.slot_index += period;
      const bool fits = !occ.empty() && occ.back().slot_index <= a.deadline &&
                        std::all_of(occ.begin(), occ.end(), [&](const Resource& r) { return p.contains(r); });
      if (fits && static_cast<int>(occ.size()) >= a.n_tx) {
        use.assign(occ.begin(), occ.begin() + a.n_tx);
        reused = true;
      } else {
        ++metrics_.reselections;
        event(s, "reselect", ue.id, std::string(to_string(ReselectionEvent::pdb_violation)));
        end_grant(ue);
      }
    } else if (ue.grant && reselection_trigger(*ue.grant, ReselectionEvent::counter_expired)) {
      ++metrics_.reselections;
      event(s, "reselect", ue.id, std::string(to_string(ReselectionEvent::counter_expired)));
      end_grant(ue);
    } else {
      end_grant(ue);
      event(s, "reselect", ue.id, std::string(to_string(ReselectionEvent::new_tb_no_grant)));
    }

    if (!reused) {
      const int period_ms = tmpl.kind == TrafficKind::periodic
                                ? sc_.reservation_periods.floor(static_cast<int>(std::lround(tmpl.period_ms)))
                                : 0;
      auto g = select_grant(ue, s, a.deadline - s, prio, a.n_tx, period_ms, tmpl.l_subch);
      if (!g) {
        finish_unsent(ue, a.tb, s, TbOutcome::expired_pdb, "no candidate resources in the selection window");
        return false;
      }
      ue.grant = std::move(*g);
      use = ue.grant->resources;
      a.fresh_selection = true;
    }
    for (auto& r : ue.reserved_next)
      if (std::find(use.begin(), use.end(), r) == use.end()) uncount_usage(ue, r);
    ue.reserved_next.clear();

    // Commit this occurrence and announce the next one if the grant continues.
    ue.grant->resources = use;
    if (ue.grant->periodic()) --ue.grant->reselection_counter;
    const bool continues = ue.grant->periodic() && ue.grant->reselection_counter > 0;
    for (const auto& r : use) count_usage(ue, r);
    if (continues) {
      const SlotIndex period = sc_.numerology.ms_to_slots(ue.grant->period_ms);
      for (const auto& r : use) {
        Resource n{r.slot_index + period, r.subchannel_start, r.subchannel_len};
        if (p.contains(n)) {
          ue.reserved_next.push_back(n);
          count_usage(ue, n);
        }
      }
    }

    const CrDecision d = enforce_cr_limit(*ue.load, s, ue.cbr, prio, sc_.cr_limits, ue.reserved_next, use);
    if (d.action == CrAction::shrink) {
      ++metrics_.cr_shrinks;
      for (const auto& r : d.cancelled) {
        ue.counted.erase(r);
        std::erase(ue.reserved_next, r);
      }
      ue.reserved_next.clear();
      ue.grant->reselection_counter = 0;
      event(s, "cr_shrink", ue.id, "cr " + detail::fmt_double(d.cr_before, 4) + " -> " + detail::fmt_double(d.cr_after, 4));
    } else if (d.action == CrAction::drop) {
      ++metrics_.cr_drops;
      for (const auto& r : use) ue.counted.erase(r);
      event(s, "cr_drop", ue.id, "tb " + std::to_string(a.tb.tb_id) + " cr " + detail::fmt_double(d.cr_before, 4));
      end_grant(ue);
      finish_unsent(ue, a.tb, s, TbOutcome::dropped_cr, "channel occupancy limit");
      return false;
    }
    a.resources = use;
    return true;
  }

  /// Candidate selection plus MAC draw; nullopt if the window cannot hold one resource.
  std::optional<Grant> select_grant(Ue& ue, SlotIndex s, SlotIndex pdb_slots, int prio, int n_tx, int period_ms,
                                    int l_subch) {
    const ResourcePool& p = pool(ue.pool_id);
    SelectionConfig cfg = sc_.selection;
    cfg.l_subch = l_subch;
    if (pdb_slots <= cfg.t_proc1_slots || sl_slots_in(p, s + cfg.t_proc1_slots, s + pdb_slots).empty())
      return std::nullopt;
    const CandidateSet cs = select_candidates(ue.sensing, p, s, pdb_slots, prio, cfg);
    metrics_.relaxations += cs.passes - 1;
    std::set<SlotIndex> distinct;
    for (const auto& r : cs.resources) distinct.insert(r.slot_index);
    const int n = std::min<int>(n_tx, static_cast<int>(distinct.size()));
    if (n < 1) return std::nullopt;
    GrantParams gp{period_ms, prio, cfg.reselection_counter_min, cfg.reselection_counter_max};
    Grant g = mac_select(cs.resources, n, ue.selection_rng, gp);
    g.selected_at_slot = s;
    g.sensing_edge_slot = cs.sensing_edge_slot;
    g.threshold_offset_db = cs.threshold_offset_db;
    ++metrics_.selections;
    std::string desc;
    for (const auto& r : g.resources) desc += to_string(r);
    event(s, "select", ue.id, desc + " of " + std::to_string(cs.resources.size()) + "/" + std::to_string(cs.total) +
                                  " relax " + detail::fmt_double(cs.threshold_offset_db, 0) + "dB");
    return g;
  }

  // -- phase 2 ----------------------------------------------------------------

  void phase_transmit(SlotIndex s, SlotEvent& ev) {
    for (auto& ue : ues_) {
      if (!ue.active) continue;
      ActiveTb& a = *ue.active;
      // A resource due while feedback is outstanding cannot carry a retransmission yet.
      while (!a.resources.empty() && a.resources.front().slot_index <= s &&
             (a.resources.front().slot_index < s || (a.feedback_slot && *a.feedback_slot >= s))) {
        uncount_usage(ue, a.resources.front());
        a.resources.erase(a.resources.begin());
      }
      if (a.resources.empty() || a.resources.front().slot_index != s) continue;
      const Resource res = a.resources.front();
      a.resources.erase(a.resources.begin());
      if (!a.receivers_fixed) fix_receivers(ue, a);

      const ResourcePool& p = pool(a.pool_id);
      const auto& w = widths_.at(a.pool_id);
      const auto& tmpl = group(ue).traffic;

      TxParameters params{tmpl.mcs, sc_.link.tx_power_dbm};
      if (sc_.adaptation) params = sc_.adaptation(ue.cbr, a.tb.priority, params);
      (void)sc_.phy.mcs_table.threshold(params.mcs);

      std::vector<ExtraResource> extras;
      for (const auto& r : a.resources) {
        if (static_cast<int>(extras.size()) == kMaxExtraResources) break;
        extras.push_back({static_cast<int>(r.slot_index - s), r.subchannel_start, r.subchannel_len});
      }
      Sci1 sci;
      sci.priority = a.tb.priority;
      const auto assign = encode_assignment(extras, w);
      sci.freq_resource_assignment = assign.frequency;
      sci.time_resource_assignment = assign.time;
      sci.resource_reservation_period_ms = announced_period(ue, a);
      sci.mcs = params.mcs;
      Sci2 sci2;
      sci2.harq_process_id = a.harq_id;
      sci2.new_data_indicator = (a.harq_id % 2) == 0;
      sci2.source_id = static_cast<std::uint32_t>(ue.id) & 0xFFU;
      sci2.destination_id = a.tb.destination < 0 ? 0xFFFFU : static_cast<std::uint32_t>(a.tb.destination) & 0xFFFFU;

      std::optional<SlotIndex> fb;
      if (a.harq->feedback_mode() != FeedbackMode::none) fb = psfch_slot_for(s, p, sc_.harq.min_gap_slots);
      sci2.redundancy_version = a.harq->record_tx(fb);
      a.feedback_slot = fb;
      a.pending_feedback = Feedback::silence;
      a.last_tx_slot = s;
      if (a.fresh_selection) a.fresh_selection = false;

      TxRecord t;
      t.ue_id = ue.id;
      t.pool_id = a.pool_id;
      t.resource = res;
      t.sci1 = decode_sci1(encode_sci1(sci, w, sc_.reservation_periods), w, sc_.reservation_periods);
      t.sci2 = decode_sci2(encode_sci2(sci2, w), w);
      t.power_dbm = params.tx_power_dbm;
      t.mcs = params.mcs;
      t.tb_id = a.tb.tb_id;
      ev.tx.push_back(t);
      ++metrics_.transmissions;
      if (sc_.metrics.tx_events)
        event(s, "tx", ue.id, "tb " + std::to_string(a.tb.tb_id) + " " + to_string(res) + " rv " +
                                  std::to_string(t.sci2.redundancy_version));
    }
    // Mode-1 grants must never collide inside their pool.
    for (std::size_t i = 0; i < ev.tx.size(); ++i)
      for (std::size_t j = i + 1; j < ev.tx.size(); ++j) {
        const auto& x = ev.tx[i];
        const auto& y = ev.tx[j];
        if (x.pool_id == y.pool_id && schedulers_.contains(x.pool_id) && x.resource.overlaps(y.resource)) {
          ++metrics_.mode1_overlaps;
          event(s, "mode1_overlap", x.ue_id, "with ue " + std::to_string(y.ue_id));
        }
      }
  }

  [[nodiscard]] int announced_period(const Ue& ue, const ActiveTb& a) const {
    if (a.via_exceptional) return 0;
    if (ue.mode == 1) {
      const auto& cg = schedulers_.at(ue.pool_id).grant(ue.mode1_grant_id);
      return sc_.reservation_periods.allowed(cg.period_ms) ? cg.period_ms : 0;
    }
    if (ue.grant && ue.grant->periodic() && !ue.reserved_next.empty()) return ue.grant->period_ms;
    return 0;
  }

  [[nodiscard]] bool monitors(const Ue& rx, int pool_id) const {
    return rx.pool_id == pool_id || pool(pool_id).kind == PoolKind::exceptional;
  }

  [[nodiscard]] double distance(const Ue& a, const Ue& b) const {
    return std::max(1.0, wrapped_distance(a.kin.position_m, b.kin.position_m, sc_.highway.length_m));
  }

  void fix_receivers(const Ue& ue, ActiveTb& a) {
    a.receivers_fixed = true;
    const auto& tb = a.tb;
    for (const auto& r : ues_) {
      if (r.id == ue.id || !monitors(r, a.pool_id)) continue;
      const double d = distance(ue, r);
      bool intended = false;
      switch (tb.cast_type) {
        case CastType::broadcast: intended = d <= sc_.metrics.prr_max_distance_m; break;
        case CastType::groupcast:
          intended = r.group == ue.group && (!tb.comm_range_m || d <= *tb.comm_range_m);
          break;
        case CastType::unicast: intended = r.id == tb.destination; break;
      }
      if (!intended) continue;
      a.receivers.push_back(r.id);
      a.receiver_distance.push_back(d);
      a.delivered.push_back(0);
    }
  }

  // -- phase 3 ----------------------------------------------------------------

  [[nodiscard]] double shadow_db(int tx, int rx, SlotIndex s) const {
    if (sc_.link.shadowing_sigma_db == 0.0) return 0.0;
    std::uint64_t key = hash_combine(sc_.seed, static_cast<std::uint64_t>(StreamPurpose::shadowing));
    key = hash_combine(key, static_cast<std::uint64_t>(tx));
    key = hash_combine(key, static_cast<std::uint64_t>(rx));
    key = hash_combine(key, static_cast<std::uint64_t>(s));
    return sc_.link.shadowing_sigma_db * keyed_normal(key);
  }

  [[nodiscard]] PrbRange prbs_of(const TxRecord& t) const { return pool(t.pool_id).resource_prbs(t.resource); }

  static int prb_overlap(const PrbRange& a, const PrbRange& b) noexcept {
    return std::max(0, std::min(a.end(), b.end()) - std::max(a.first, b.first));
  }

  void phase_channel(SlotIndex s, SlotEvent& ev, const std::vector<char>& transmitting) {
    const std::size_t n_tx = ev.tx.size();
    std::vector<PrbRange> tx_prbs(n_tx);
    std::vector<double> tx_psd_scale(n_tx);  // per-PRB share of the per-subchannel power
    for (std::size_t i = 0; i < n_tx; ++i) {
      tx_prbs[i] = prbs_of(ev.tx[i]);
      tx_psd_scale[i] = 1.0 / pool(ev.tx[i].pool_id).subchannel_size_prb;
    }
    std::vector<double> rx_mw(n_tx);
    for (auto& r : ues_) {
      const bool blocked = transmitting[static_cast<std::size_t>(r.id)] != 0;
      for (std::size_t i = 0; i < n_tx; ++i) {
        const auto& t = ev.tx[i];
        if (t.ue_id == r.id) {
          rx_mw[i] = 0.0;
          continue;
        }
        LinkBudget b = sc_.link;
        b.tx_power_dbm = t.power_dbm;
        rx_mw[i] = dbm_to_mw(rsrp_at(b, distance(ues_[static_cast<std::size_t>(t.ue_id)], r), shadow_db(t.ue_id, r.id, s)));
      }
      // CBR sensing on the UE's own pool.
      const ResourcePool& own = pool(r.pool_id);
      if (!blocked && own.is_sl_slot(s)) {
        std::vector<double> energy(static_cast<std::size_t>(own.num_subchannels));
        for (int k = 0; k < own.num_subchannels; ++k) {
          const PrbRange sub = own.subchannel_prbs(k);
          double mw = dbm_to_mw(sc_.link.noise_dbm);
          for (std::size_t i = 0; i < n_tx; ++i)
            mw += rx_mw[i] * tx_psd_scale[i] * prb_overlap(sub, tx_prbs[i]);
          energy[static_cast<std::size_t>(k)] = mw_to_dbm(mw);
        }
        r.load->record_slot(s, energy);
      }
      for (std::size_t i = 0; i < n_tx; ++i) {
        const auto& t = ev.tx[i];
        if (t.ue_id == r.id) continue;
        const auto& tx_ue = ues_[static_cast<std::size_t>(t.ue_id)];
        const bool intended = is_intended(tx_ue, r.id);
        if (!intended && !monitors(r, t.pool_id)) continue;
        const double len = t.resource.subchannel_len;
        double interference = 0.0;
        for (std::size_t j = 0; j < n_tx; ++j) {
          if (j == i || ev.tx[j].ue_id == r.id) continue;
          interference += rx_mw[j] * tx_psd_scale[j] * prb_overlap(tx_prbs[i], tx_prbs[j]);
        }
        interference /= len;  // per subchannel of the wanted resource
        const double signal_dbm = mw_to_dbm(rx_mw[i]);
        const double noise_mw = dbm_to_mw(sc_.link.noise_dbm);
        const double sinr = signal_dbm - mw_to_dbm(noise_mw + interference);
        RxRecord rec;
        rec.ue_id = r.id;
        rec.tx_ue_id = t.ue_id;
        rec.intended = intended;
        rec.obs.sinr_db = sinr;
        rec.obs.rsrp_dbm = signal_dbm;  // per subchannel; PSCCH and PSSCH DMRS see the same PSD here
        rec.obs.energy_dbm = mw_to_dbm(rx_mw[i] + noise_mw + interference);
        const bool sci_ok = !blocked && sinr >= sc_.phy.sci_sinr_threshold_db;
        if (sci_ok) {
          rec.obs.decoded = true;
          rec.obs.sci1 = t.sci1;
        }
        rec.outcome = sci_ok ? decode_outcome(sinr, t.mcs, blocked, sc_.phy.mcs_table) : DecodeResult::failure;
        ev.rx.push_back(std::move(rec));
      }
    }
  }

  [[nodiscard]] bool is_intended(const Ue& tx, int rx) const {
    if (!tx.active) return false;
    const auto& rc = tx.active->receivers;
    return std::find(rc.begin(), rc.end(), rx) != rc.end();
  }

  // -- phase 4 ----------------------------------------------------------------

  void phase_sensing(SlotIndex s, SlotEvent& ev) {
    std::map<int, const TxRecord*> by_ue;
    for (const auto& t : ev.tx) by_ue[t.ue_id] = &t;

    for (const auto& rec : ev.rx) {
      const TxRecord& t = *by_ue.at(rec.tx_ue_id);
      auto& rx = ues_[static_cast<std::size_t>(rec.ue_id)];
      auto& tx = ues_[static_cast<std::size_t>(rec.tx_ue_id)];

      if (rec.intended && tx.active) {
        ActiveTb& a = *tx.active;
        auto it = std::find(a.receivers.begin(), a.receivers.end(), rx.id);
        const auto k = static_cast<std::size_t>(it - a.receivers.begin());
        if (rec.outcome == DecodeResult::success) {
          a.delivered[k] = 1;
        } else if (!transmitting_in(ev, rx.id) && has_cochannel_interferer(ev, t, rx.id)) {
          ++metrics_.collisions;
        }
      }

      if (rx.mode != 2 || t.pool_id != rx.pool_id || !rec.obs.decoded) continue;
      const ResourcePool& p = pool(rx.pool_id);
      const bool added = record_sensing(rx.sensing, s, rec.obs, t.resource, p, sc_.selection, widths_.at(t.pool_id),
                                        horizon_slots_, t.ue_id);
      if (added) check_preemption(rx, rx.sensing.entries().back(), s);
    }

    for (auto& ue : ues_) {
      if (!ue.active) continue;
      ActiveTb& a = *ue.active;
      if (a.last_tx_slot != s || !a.feedback_slot) continue;
      a.pending_feedback = aggregate_feedback(ue, a, ev);
    }
  }

  [[nodiscard]] static bool transmitting_in(const SlotEvent& ev, int ue) {
    return std::any_of(ev.tx.begin(), ev.tx.end(), [&](const TxRecord& t) { return t.ue_id == ue; });
  }

  [[nodiscard]] bool has_cochannel_interferer(const SlotEvent& ev, const TxRecord& wanted, int rx) const {
    const PrbRange w = prbs_of(wanted);
    for (const auto& t : ev.tx)
      if (&t != &wanted && t.ue_id != rx && prb_overlap(w, prbs_of(t)) > 0) return true;
    return false;
  }

  /// HARQ feedback for the latest transmission of `a`, as seen at the PSFCH occasion.
  Feedback aggregate_feedback(Ue& ue, const ActiveTb& a, const SlotEvent& ev) {
    const FeedbackMode mode = a.harq->feedback_mode();
    Feedback out = Feedback::silence;
    if (mode == FeedbackMode::ack_nack) {
      bool all_ok = !a.receivers.empty();
      for (char d : a.delivered) all_ok = all_ok && d;
      out = all_ok ? Feedback::ack : Feedback::nack;  // a missing report counts as NACK
    } else if (mode == FeedbackMode::nack_only) {
      for (std::size_t k = 0; k < a.receivers.size(); ++k) {
        if (a.delivered[k]) continue;
        bool sci_seen = false;
        for (const auto& rec : ev.rx)
          if (rec.ue_id == a.receivers[k] && rec.tx_ue_id == ue.id) sci_seen = rec.obs.decoded;
        if (!sci_seen) continue;
        if (generate_feedback(*a.harq, false, a.receiver_distance[k]) == Feedback::nack) out = Feedback::nack;
      }
    }
    if (out != Feedback::silence && sc_.harq.psfch_loss_probability > 0.0) {
      std::bernoulli_distribution lost(sc_.harq.psfch_loss_probability);
      if (lost(ue.harq_rng)) out = mode == FeedbackMode::ack_nack ? Feedback::nack : Feedback::silence;
    }
    return out;
  }

  void check_preemption(Ue& ue, const SensingEntry& incoming, SlotIndex s) {
    if (!ue.active || ue.active->via_exceptional) return;
    ActiveTb& a = *ue.active;
    Grant view;
    for (const auto& r : a.resources)
      if (r.slot_index > s) view.resources.push_back(r);
    for (const auto& r : ue.reserved_next) view.resources.push_back(r);
    if (view.resources.empty()) return;
    const ResourcePool& p = pool(ue.pool_id);
    const PreemptionOutcome out = preemption_check(view, incoming, p, a.tb.priority);
    if (out.action != PreemptionAction::release) return;

    ++metrics_.preemptions;
    std::string desc = "by ue " + std::to_string(incoming.source_ue) + " prio " + std::to_string(incoming.rx_priority);
    for (SlotIndex sl : out.slots) desc += " slot " + std::to_string(sl);
    event(s, "preempt", ue.id, desc);
    for (const auto& r : out.released) {
      uncount_usage(ue, r);
      std::erase(a.resources, r);
    }
    end_grant(ue);
    ++metrics_.reselections;
    event(s, "reselect", ue.id, std::string(to_string(ReselectionEvent::preemption_release)));
    const int needed = a.n_tx - a.harq->tx_count() - static_cast<int>(a.resources.size());
    if (needed > 0) replace_resources(ue, a, s, needed);
  }

  /// Adds up to `needed` fresh resources in (s, deadline], avoiding slots already held.
  void replace_resources(Ue& ue, ActiveTb& a, SlotIndex s, int needed) {
    if (a.via_exceptional) return;
    const SlotIndex earliest = std::max(s, a.feedback_slot.value_or(s)) + 1;
    auto held = [&](SlotIndex slot) {
      return std::any_of(a.resources.begin(), a.resources.end(), [&](const Resource& h) { return h.slot_index == slot; });
    };
    if (ue.mode == 1) {
      const auto& cg = schedulers_.at(ue.pool_id).grant(ue.mode1_grant_id);
      if (!cg.usable_at(s)) return;
      for (const auto& r : cg.occurrences(earliest, a.deadline)) {
        if (needed <= 0) break;
        if (held(r.slot_index)) continue;
        a.resources.push_back(r);
        --needed;
      }
      std::sort(a.resources.begin(), a.resources.end());
      return;
    }
    const auto& tmpl = group(ue).traffic;
    const ResourcePool& p = pool(ue.pool_id);
    SelectionConfig cfg = sc_.selection;
    cfg.l_subch = tmpl.l_subch;
    const SlotIndex pdb = a.deadline - s;
    if (pdb <= cfg.t_proc1_slots || sl_slots_in(p, s + cfg.t_proc1_slots, a.deadline).empty()) return;
    CandidateSet cs = select_candidates(ue.sensing, p, s, pdb, a.tb.priority, cfg);
    metrics_.relaxations += cs.passes - 1;
    std::erase_if(cs.resources, [&](const Resource& c) { return held(c.slot_index) || c.slot_index < earliest; });
    std::set<SlotIndex> distinct;
    for (const auto& r : cs.resources) distinct.insert(r.slot_index);
    const int n = std::min<int>({needed, static_cast<int>(distinct.size()), 3});
    if (n < 1) return;
    Grant g = mac_select(cs.resources, n, ue.selection_rng, GrantParams{0, a.tb.priority, 1, 1});
    ++metrics_.selections;
    for (const auto& r : g.resources) {
      a.resources.push_back(r);
      count_usage(ue, r);
    }
    std::sort(a.resources.begin(), a.resources.end());
    a.fresh_selection = true;
    std::string desc;
    for (const auto& r : g.resources) desc += to_string(r);
    event(s, "select", ue.id, desc + " replacement for tb " + std::to_string(a.tb.tb_id));
  }

  // -- phase 5 ----------------------------------------------------------------

  void phase_reevaluate(SlotIndex s) {
    for (auto& ue : ues_) {
      if (ue.mode != 2 || !ue.active || !ue.active->fresh_selection || !ue.grant) continue;
      ActiveTb& a = *ue.active;
      Grant view = *ue.grant;
      view.resources = a.resources;
      const Reevaluation r = reevaluate(view, ue.sensing, s, a.tb.priority, sc_.selection, pool(ue.pool_id));
      if (r.keep) continue;
      ++metrics_.reevaluation_reselections;
      ++metrics_.reselections;
      std::string desc(to_string(ReselectionEvent::reevaluation_fail));
      for (const auto& res : r.reselect) {
        desc += " " + to_string(res);
        uncount_usage(ue, res);
        std::erase(a.resources, res);
      }
      event(s, "reevaluate", ue.id, desc);
      const int needed = a.n_tx - a.harq->tx_count() - static_cast<int>(a.resources.size());
      if (needed > 0) replace_resources(ue, a, s, needed);
      // Any new reservations would differ from the announced periodic pattern.
      ue.grant->resources = a.resources;
      if (a.resources.empty()) end_grant(ue);
    }
  }

  // -- phase 6 ----------------------------------------------------------------

  void phase_feedback(SlotIndex s, SlotEvent& ev) {
    for (auto& ue : ues_) {
      if (!ue.active) continue;
      ActiveTb& a = *ue.active;
      if (a.feedback_slot && *a.feedback_slot == s) {
        const Feedback fb = a.pending_feedback;
        ev.feedback.push_back({ue.id, a.tb.tb_id, fb, s});
        a.feedback_slot.reset();
        a.harq->clear_pending_feedback();
        const HarqDecision d = on_feedback(*a.harq, fb, false);
        if (d.step == HarqStep::done) {
          finish_active(ue, s, TbOutcome::delivered);
          continue;
        }
        if (d.step == HarqStep::failed) {
          event(s, "harq_fail", ue.id, "tb " + std::to_string(a.tb.tb_id));
          finish_active(ue, s, TbOutcome::failed_harq);
          continue;
        }
        std::erase_if(a.resources, [&](const Resource& r) {
          if (r.slot_index > s) return false;
          uncount_usage(ue, r);
          return true;
        });
        if (a.resources.empty()) replace_resources(ue, a, s, a.n_tx - a.harq->tx_count());
        if (a.resources.empty()) {
          event(s, "harq_fail", ue.id, "tb " + std::to_string(a.tb.tb_id) + " no resources for retransmission");
          finish_active(ue, s, TbOutcome::failed_harq);
        }
        continue;
      }
      if (!a.feedback_slot && a.last_tx_slot >= 0) {
        const bool more = !a.resources.empty() && a.harq->tx_count() < a.n_tx;
        if (!more) {
          // Without feedback the TB counts as delivered once sent; receivers show up in PRR.
          finish_active(ue, s, TbOutcome::delivered);
        }
      } else if (!a.feedback_slot && a.last_tx_slot < 0 && a.resources.empty()) {
        finish_active(ue, s, TbOutcome::expired_pdb);
      }
    }
  }

  void record_prr(const ActiveTb& a) {
    if (a.tb.created_at_slot < warmup_slots_) return;
    for (std::size_t k = 0; k < a.receivers.size(); ++k)
      metrics_.prr_samples.push_back({a.receiver_distance[k], a.delivered[k] != 0});
  }

  void finish_active(Ue& ue, SlotIndex s, TbOutcome outcome) {
    ActiveTb& a = *ue.active;
    for (const auto& r : a.resources) uncount_usage(ue, r);
    record_prr(a);
    TbRecord rec;
    rec.tb_id = a.tb.tb_id;
    rec.ue_id = ue.id;
    rec.priority = a.tb.priority;
    rec.created_slot = a.tb.created_at_slot;
    rec.finished_slot = s;
    const SlotIndex end = outcome == TbOutcome::delivered && a.last_tx_slot >= 0 ? a.last_tx_slot : s;
    rec.latency_ms = sc_.numerology.slots_to_ms(end - a.tb.created_at_slot);
    rec.outcome = outcome;
    rec.tx_count = a.harq->tx_count();
    metrics_.tbs.push_back(rec);
    if (outcome == TbOutcome::expired_pdb) event(s, "expire", ue.id, "tb " + std::to_string(a.tb.tb_id));
    ue.active.reset();
  }

  void finish_unsent(Ue& ue, const TransportBlock& tb, SlotIndex s, TbOutcome outcome, const std::string& why) {
    TbRecord rec;
    rec.tb_id = tb.tb_id;
    rec.ue_id = ue.id;
    rec.priority = tb.priority;
    rec.created_slot = tb.created_at_slot;
    rec.finished_slot = s;
    rec.latency_ms = sc_.numerology.slots_to_ms(s - tb.created_at_slot);
    rec.outcome = outcome;
    metrics_.tbs.push_back(rec);
    if (outcome == TbOutcome::expired_pdb) event(s, "expire", ue.id, "tb " + std::to_string(tb.tb_id) + " " + why);
  }

  // -- phase 7 ----------------------------------------------------------------

  void phase_congestion(SlotIndex s) {
    if (s % cbr_interval_slots_ == 0) {
      double sum = 0.0;
      for (auto& ue : ues_) {
        ue.cbr = ue.load->measure_cbr(s).ratio;
        sum += ue.cbr;
      }
      if (s >= warmup_slots_ && !ues_.empty()) {
        metrics_.cbr_sum += sum / static_cast<double>(ues_.size());
        ++metrics_.cbr_count;
      }
    }
    if (s % load_sample_slots_ == 0) {
      const double t = sc_.numerology.slots_to_ms(s);
      for (auto& ue : ues_) {
        const double cr = ue.load->measure_cr(s);
        metrics_.load.push_back({t, ue.id, ue.cbr, cr});
        const SlotIndex keep_from = s - 2 * ue.load->cr_past_slots();
        ue.counted.erase(ue.counted.begin(), ue.counted.lower_bound(Resource{keep_from, 0, 0}));
      }
    }
  }

  // -- phase 8 ----------------------------------------------------------------

  void phase_mobility(SlotIndex s) {
    const double dt = sc_.numerology.slots_to_ms(1) / 1000.0;
    const double t_ms = sc_.numerology.slots_to_ms(s + 1);
    for (auto& ue : ues_) {
      if (sc_.mobility_trace && sc_.mobility_trace->has(ue.id)) {
        ue.kin.position_m = *sc_.mobility_trace->position(ue.id, t_ms);
      } else if (ue.kin.speed_mps > 0) {
        ue.kin = advance_mobility(ue.kin, dt, sc_.highway.length_m);
      }
    }
  }

  void finalize() {
    for (auto& ue : ues_) {
      if (ue.active) ++metrics_.unresolved_tbs;
      metrics_.unresolved_tbs += static_cast<std::int64_t>(ue.queue.size());
    }
  }

  Scenario sc_;
  std::vector<Ue> ues_;
  std::map<int, Mode1Scheduler> schedulers_;
  std::map<int, SciFieldWidths> widths_;
  Metrics metrics_;
  SlotIndex slot_ = 0;
  SlotIndex total_slots_ = 0;
  SlotIndex warmup_slots_ = 0;
  SlotIndex load_sample_slots_ = 1;
  SlotIndex cbr_interval_slots_ = 1;
  SlotIndex horizon_slots_ = 0;
  SlotIndex arrival_cutoff_ = 0;
  std::int64_t next_tb_id_ = 0;
};

inline Metrics run(const Scenario& scenario) { return Simulator(scenario).run(); }

}  // namespace nrsl
