#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "nrsl/scenario_config.hpp"
#include "nrsl/sim_engine.hpp"

using namespace nrsl;

namespace {

Scenario base_scenario(int mu = 0, double duration_ms = 1000.0) {
  Scenario sc;
  sc.numerology = make_numerology(mu);
  sc.bwp = make_bwp(5900, mu == 0 ? 10 : 20, sc.numerology);
  PoolConfig pc;
  pc.subchannel_size_prb = 10;
  sc.pools.push_back(build_resource_pool(sc.bwp, pc));
  sc.duration_ms = duration_ms;
  sc.link.shadowing_sigma_db = 0.0;
  return sc;
}

UeGroupConfig fixed_group(std::vector<Position> at, TrafficKind kind = TrafficKind::periodic) {
  UeGroupConfig g;
  g.count = static_cast<int>(at.size());
  g.placement = Placement::explicit_positions;
  g.positions = std::move(at);
  g.speed_mps = 0.0;
  g.traffic.kind = kind;
  return g;
}

std::string csv_dump(const Metrics& m) {
  std::ostringstream os;
  write_prr_csv(os, m, 50.0);
  write_latency_csv(os, m);
  write_load_csv(os, m);
  write_events_csv(os, m);
  return os.str();
}

}  // namespace

TEST(Simulator, SlotCount) {
  EXPECT_EQ(Simulator([] {
              auto sc = base_scenario(0, 100.0);
              sc.groups.push_back(fixed_group({{0, 0}}));
              return sc;
            }())
                .total_slots(),
            100);
  auto sc = base_scenario(1, 100.0);
  sc.groups.push_back(fixed_group({{0, 0}}));
  Simulator sim(sc);
  EXPECT_EQ(sim.total_slots(), 200);
  sim.run();
  EXPECT_EQ(sim.metrics().slots_processed, 200);
  EXPECT_THROW(sim.advance_slot(), Error);
}

TEST(Simulator, SingleLinkAt50m) {
  auto sc = base_scenario();
  sc.groups.push_back(fixed_group({{0, 0}}));
  sc.groups.push_back(fixed_group({{50, 0}}, TrafficKind::disabled));
  sc.groups[1].name = "rx";
  Simulator sim(sc);
  // 23 - (47 + 27.5 log10 50) - (-99.4)
  const double want = 23.0 - (47.0 + 27.5 * std::log10(50.0)) + 99.4;
  int rx_count = 0;
  while (!sim.finished()) {
    const auto ev = sim.advance_slot();
    for (const auto& r : ev.rx) {
      ++rx_count;
      EXPECT_EQ(r.ue_id, 1);
      EXPECT_EQ(r.tx_ue_id, 0);
      EXPECT_TRUE(r.intended);
      EXPECT_NEAR(r.obs.sinr_db, want, 1e-9);
      EXPECT_EQ(r.outcome, DecodeResult::success);
    }
  }
  EXPECT_GT(rx_count, 0);
  const auto& m = sim.metrics();
  EXPECT_EQ(m.collisions, 0);
  EXPECT_DOUBLE_EQ(prr_in_range(m, 0, 100), 1.0);
  for (const auto& s : m.prr_samples) EXPECT_DOUBLE_EQ(s.distance_m, 50.0);
  EXPECT_FALSE(sim.sensing_db(1).empty());
}

TEST(Simulator, OutOfRangeReceiverFails) {
  auto sc = base_scenario();
  sc.groups.push_back(fixed_group({{0, 0}}));
  sc.groups.push_back(fixed_group({{480, 0}}, TrafficKind::disabled));
  sc.link.tx_power_dbm = -20.0;
  Simulator sim(sc);
  const auto m = sim.run();
  ASSERT_FALSE(m.prr_samples.empty());
  EXPECT_DOUBLE_EQ(prr_in_range(m, 400, 500), 0.0);
}

TEST(Simulator, HalfDuplex) {
  auto sc = base_scenario(0, 3000.0);
  std::vector<Position> at;
  for (int k = 0; k < 12; ++k) at.push_back({10.0 * k, 2.0});
  sc.groups.push_back(fixed_group(at));
  sc.groups[0].traffic.period_ms = 20;
  sc.groups[0].traffic.pdb_ms = 20;
  Simulator sim(sc);
  while (!sim.finished()) {
    const auto ev = sim.advance_slot();
    ASSERT_TRUE(ev.half_duplex_ok()) << "slot " << ev.slot;
    std::set<int> txs;
    for (const auto& t : ev.tx) txs.insert(t.ue_id);
    for (const auto& r : ev.rx)
      if (txs.contains(r.ue_id)) {
        EXPECT_NE(r.outcome, DecodeResult::success);
      }
  }
  EXPECT_EQ(sim.metrics().half_duplex_violations, 0);
}

TEST(Simulator, Deterministic) {
  const auto sc = load_scenario(NRSL_SCENARIO_DIR "/highway_small.json");
  auto a = sc;
  auto b = sc;
  a.duration_ms = b.duration_ms = 2000;
  const auto ma = Simulator(a).run();
  const auto mb = Simulator(b).run();
  EXPECT_EQ(csv_dump(ma), csv_dump(mb));
  EXPECT_EQ(ma.transmissions, mb.transmissions);
  auto c = a;
  c.seed = a.seed + 1;
  EXPECT_NE(csv_dump(Simulator(c).run()), csv_dump(ma));
}

TEST(Simulator, Conservation) {
  for (const char* f : {"/highway_small.json", "/mixed_services.json", "/mode1_highway.json"}) {
    auto sc = load_scenario(std::string(NRSL_SCENARIO_DIR) + f);
    sc.duration_ms = 2000;
    const auto m = Simulator(sc).run();
    EXPECT_EQ(static_cast<std::int64_t>(m.tbs.size()) + m.unresolved_tbs, m.tbs_generated) << f;
    EXPECT_EQ(m.unresolved_tbs, 0) << f;
    for (const auto& t : m.tbs) {
      EXPECT_GE(t.finished_slot, t.created_slot);
      if (t.outcome == TbOutcome::delivered) {
        EXPECT_GE(t.tx_count, 1);
      }
    }
    EXPECT_EQ(m.half_duplex_violations, 0) << f;
    EXPECT_EQ(m.mode1_overlaps, 0) << f;
  }
}

TEST(Simulator, Mode1UsesGrantResources) {
  auto sc = load_scenario(NRSL_SCENARIO_DIR "/mode1_highway.json");
  sc.duration_ms = 1000;
  Simulator sim(sc);
  int mode1_pool = -1;
  for (const auto& g : sc.groups)
    if (g.mode == 1) mode1_pool = g.pool_id;
  ASSERT_GE(mode1_pool, 0);
  const Mode1Scheduler* sched = sim.scheduler(mode1_pool);
  ASSERT_NE(sched, nullptr);
  while (!sim.finished()) {
    const auto ev = sim.advance_slot();
    for (const auto& t : ev.tx) {
      if (t.pool_id != mode1_pool) continue;
      bool found = false;
      for (const auto& g : sched->grants())
        if (g.ue_id == t.ue_id)
          for (const auto& r : g.resources_at(t.resource.slot_index)) found = found || r == t.resource;
      EXPECT_TRUE(found) << "ue " << t.ue_id << " slot " << ev.slot;
    }
  }
}

TEST(PrrBins, HandBuilt) {
  Metrics m;
  m.prr_samples = {{20, true}, {40, false}, {60, true}, {170, true}};
  const auto bins = prr_by_distance(m, 50);
  ASSERT_EQ(bins.size(), 3u);  // [100, 150) has no receivers
  EXPECT_EQ(bins[0].expected, 2);
  EXPECT_EQ(bins[0].decoded, 1);
  EXPECT_DOUBLE_EQ(bins[0].prr(), 0.5);
  EXPECT_DOUBLE_EQ(bins[1].low_m, 50);
  EXPECT_DOUBLE_EQ(bins[1].prr(), 1.0);
  EXPECT_DOUBLE_EQ(bins[2].low_m, 150);
  EXPECT_DOUBLE_EQ(prr_in_range(m, 0, 100), 2.0 / 3.0);
  EXPECT_THROW((void)prr_by_distance(m, 0), Error);
}

TEST(PrrBins, AllDecoded) {
  Metrics m;
  for (int k = 0; k < 40; ++k) m.prr_samples.push_back({5.0 * k, true});
  for (const auto& b : prr_by_distance(m, 25)) EXPECT_DOUBLE_EQ(b.prr(), 1.0);
}

TEST(ScenarioCheck, Rejections) {
  auto sc = base_scenario();
  EXPECT_THROW(Simulator{sc}, Error);  // no UEs
  sc.groups.push_back(fixed_group({{0, 0}}));
  sc.groups[0].pool_id = 7;
  EXPECT_THROW(Simulator{sc}, Error);
  sc.groups[0].pool_id = 0;
  sc.groups[0].positions.clear();
  EXPECT_THROW(Simulator{sc}, Error);
}
