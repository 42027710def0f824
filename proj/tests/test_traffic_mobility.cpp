#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "nrsl/traffic_mobility.hpp"

using namespace nrsl;

namespace {

std::vector<SlotIndex> arrival_slots(TrafficGenerator& g, SlotIndex until) {
  std::vector<SlotIndex> out;
  std::int64_t id = 0;
  for (SlotIndex s = 0; s <= until; ++s)
    for (const auto& tb : g.next_arrivals(s, id)) out.push_back(tb.created_at_slot);
  return out;
}

}  // namespace

TEST(Traffic, PeriodicNoJitter) {
  TrafficTemplate t;
  t.period_ms = 100;
  TrafficGenerator g(t, make_numerology(0), 0, 0, 1);
  const auto s = arrival_slots(g, 1000);
  ASSERT_EQ(s.size(), 11u);  // floor(1000 / 100) + 1
  for (std::size_t k = 0; k < s.size(); ++k) EXPECT_EQ(s[k], static_cast<SlotIndex>(100 * k));
}

TEST(Traffic, PeriodicCountProperty) {
  for (double period : {20.0, 50.0, 100.0, 300.0})
    for (SlotIndex duration : {999, 1000, 4321}) {
      TrafficTemplate t;
      t.period_ms = period;
      TrafficGenerator g(t, make_numerology(0), 0, 0, 1);
      EXPECT_EQ(static_cast<SlotIndex>(arrival_slots(g, duration).size()),
                static_cast<SlotIndex>(std::floor(static_cast<double>(duration) / period)) + 1);
    }
}

TEST(Traffic, PeriodicJitterBounded) {
  TrafficTemplate t;
  t.period_ms = 100;
  t.jitter_ms = 10;
  TrafficGenerator g(t, make_numerology(1), 0, 4, 9);
  const auto s = arrival_slots(g, 20000);
  for (std::size_t k = 0; k < s.size(); ++k) {
    const SlotIndex base = 4 + static_cast<SlotIndex>(200 * k);
    EXPECT_GE(s[k], base);
    EXPECT_LE(s[k], base + 20);
  }
}

TEST(Traffic, AperiodicPoisson) {
  // lambda = 10/s over 10 s: mean 100, sigma 10.
  TrafficTemplate t;
  t.kind = TrafficKind::aperiodic;
  t.rate_per_s = 10;
  double total = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    TrafficGenerator g(t, make_numerology(0), 0, 0, seed);
    const auto n = static_cast<double>(arrival_slots(g, 9999).size());
    EXPECT_NEAR(n, 100.0, 30.0) << "seed " << seed;
    total += n;
  }
  // Mean of 20 runs: sigma 10 / sqrt(20).
  EXPECT_NEAR(total / 20.0, 100.0, 3.0 * 10.0 / std::sqrt(20.0));
}

TEST(Traffic, Disabled) {
  TrafficTemplate t;
  t.kind = TrafficKind::disabled;
  TrafficGenerator g(t, make_numerology(0), 0, 0, 1);
  EXPECT_TRUE(arrival_slots(g, 1000).empty());
}

TEST(Traffic, TbFields) {
  auto t = *traffic_preset("platooning");
  TrafficGenerator g(t, make_numerology(0), 3, 5, 1);
  g.set_destination(2);
  std::int64_t id = 40;
  const auto tbs = g.next_arrivals(5, id);
  ASSERT_EQ(tbs.size(), 1u);
  EXPECT_EQ(tbs[0].tb_id, 40);
  EXPECT_EQ(id, 41);
  EXPECT_EQ(tbs[0].source_ue, 3);
  EXPECT_EQ(tbs[0].priority, 1);
  EXPECT_EQ(tbs[0].cast_type, CastType::groupcast);
  EXPECT_EQ(tbs[0].destination, 2);
  EXPECT_EQ(tbs[0].comm_range_m, 150.0);
}

TEST(Traffic, PresetsValidate) {
  for (const char* name : {"periodic_broadcast", "platooning", "extended_sensors", "remote_driving"}) {
    const auto t = traffic_preset(name);
    ASSERT_TRUE(t.has_value()) << name;
    EXPECT_NO_THROW(t->validate());
  }
  EXPECT_FALSE(traffic_preset("nope").has_value());
}

TEST(Traffic, TemplateInvariants) {
  TrafficTemplate t;
  t.cast_type = CastType::broadcast;
  t.feedback = FeedbackMode::ack_nack;
  EXPECT_THROW(t.validate(), Error);
  t = TrafficTemplate{};
  t.pdb_ms = 0;
  EXPECT_THROW(t.validate(), Error);
  t = TrafficTemplate{};
  t.priority = 8;
  EXPECT_THROW(t.validate(), Error);
}

TEST(Mobility, Advance) {
  UeKinematics k;
  k.position_m = {100.0, 4.0};
  k.speed_mps = 30.0;
  const auto n = advance_mobility(k, 1.0, 2000.0);
  EXPECT_NEAR(n.position_m.x, 130.0, 1e-9);
  EXPECT_NEAR(n.position_m.y, 4.0, 1e-9);
}

TEST(Mobility, Wrap) {
  UeKinematics k;
  k.position_m = {1990.0, 0.0};
  k.speed_mps = 30.0;
  EXPECT_NEAR(advance_mobility(k, 1.0, 2000.0).position_m.x, 20.0, 1e-9);
  k.position_m = {10.0, 0.0};
  k.heading_rad = std::numbers::pi;
  EXPECT_NEAR(advance_mobility(k, 1.0, 2000.0).position_m.x, 1980.0, 1e-6);
}

TEST(Mobility, Stationary) {
  UeKinematics k;
  k.position_m = {55.0, 8.0};
  const auto n = advance_mobility(k, 1.0, 2000.0);
  EXPECT_DOUBLE_EQ(n.position_m.x, 55.0);
  EXPECT_DOUBLE_EQ(n.position_m.y, 8.0);
  EXPECT_THROW((void)advance_mobility(k, 0.0, 2000.0), Error);
}

TEST(Mobility, WrappedDistance) {
  EXPECT_DOUBLE_EQ(wrapped_distance({10, 0}, {1990, 0}, 2000), 20.0);
  EXPECT_DOUBLE_EQ(wrapped_distance({0, 0}, {3, 4}, 2000), 5.0);
}

TEST(Mobility, Trace) {
  std::istringstream in("time_ms,ue_id,x,y\n0,1,10,0\n100,1,20,0\n0,2,5,4\n");
  const auto t = MobilityTrace::parse(in);
  EXPECT_TRUE(t.has(1));
  EXPECT_FALSE(t.has(3));
  EXPECT_DOUBLE_EQ(t.position(1, 50)->x, 10.0);
  EXPECT_DOUBLE_EQ(t.position(1, 100)->x, 20.0);
  EXPECT_DOUBLE_EQ(t.position(2, 1000)->y, 4.0);
  std::istringstream bad("0,1,x,0\n");
  EXPECT_THROW((void)MobilityTrace::parse(bad), Error);
}

TEST(Sync, Examples) {
  const std::vector<SyncSource> a{{SyncKind::internal, 0}, {SyncKind::syncref_ue, 1}, {SyncKind::gnb, 0}};
  EXPECT_EQ(select_sync_source(a).kind, SyncKind::gnb);
  const std::vector<SyncSource> b{{SyncKind::internal, 0}, {SyncKind::syncref_ue, 2}, {SyncKind::syncref_ue, 1}};
  EXPECT_EQ(select_sync_source(b), (SyncSource{SyncKind::syncref_ue, 1}));
  const std::vector<SyncSource> c{{SyncKind::internal, 0}};
  EXPECT_EQ(select_sync_source(c).kind, SyncKind::internal);
}

TEST(Sync, GnssGnbOrderConfigurable) {
  const std::vector<SyncSource> both{{SyncKind::gnb, 0}, {SyncKind::gnss, 0}};
  EXPECT_EQ(select_sync_source(both, true).kind, SyncKind::gnss);
  EXPECT_EQ(select_sync_source(both, false).kind, SyncKind::gnb);
}

TEST(Sync, PermutationInvariant) {
  std::vector<SyncSource> all{{SyncKind::internal, 0}, {SyncKind::syncref_ue, 2}, {SyncKind::syncref_ue, 1},
                              {SyncKind::gnb, 0}, {SyncKind::gnss, 0}};
  std::sort(all.begin(), all.end(), [](const auto& x, const auto& y) {
    return std::pair(static_cast<int>(x.kind), x.hops) < std::pair(static_cast<int>(y.kind), y.hops);
  });
  for (std::size_t n = 1; n <= all.size(); ++n) {
    std::vector<SyncSource> sub(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n));
    const auto ref = select_sync_source(sub);
    std::sort(sub.begin(), sub.end(), [](const auto& x, const auto& y) {
      return std::pair(static_cast<int>(x.kind), x.hops) < std::pair(static_cast<int>(y.kind), y.hops);
    });
    do {
      ASSERT_EQ(select_sync_source(sub), ref);
    } while (std::next_permutation(sub.begin(), sub.end(), [](const auto& x, const auto& y) {
      return std::pair(static_cast<int>(x.kind), x.hops) < std::pair(static_cast<int>(y.kind), y.hops);
    }));
  }
}

TEST(Sync, HopsOnlyForSyncRef) {
  const std::vector<SyncSource> bad{{SyncKind::gnb, 1}};
  EXPECT_THROW((void)select_sync_source(bad), Error);
  const std::vector<SyncSource> far{{SyncKind::syncref_ue, 3}};
  EXPECT_THROW((void)select_sync_source(far), Error);
}
