#include <gtest/gtest.h>

#include <random>

#include "nrsl/sci_codec.hpp"
#include "oracles.hpp"

using namespace nrsl;

namespace {

ResourcePool pool_mu0(int subchannels = 5, const std::string& bitmap = "1") {
  PoolConfig c;
  c.subchannel_size_prb = 10;
  c.num_subchannels = subchannels;
  c.slot_bitmap = parse_slot_bitmap(bitmap);
  return build_resource_pool(make_bwp(5900, 10, make_numerology(0)), c);
}

template <class Fn>
Errc error_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an error";
  return Errc::runtime_error;
}

}  // namespace

TEST(Sci1, AllZero) {
  const SciFieldWidths w;
  const auto bits = encode_sci1(Sci1{}, w);
  EXPECT_EQ(bits.size(), static_cast<std::size_t>(w.sci1_bits()));
  EXPECT_EQ(bits.to_string(), std::string(bits.size(), '0'));
  EXPECT_EQ(decode_sci1(bits, w), Sci1{});
}

TEST(Sci1, PriorityFirstThreeBits) {
  const SciFieldWidths w;
  Sci1 s;
  s.priority = 7;
  const auto text = encode_sci1(s, w).to_string();
  EXPECT_EQ(text.substr(0, 3), "111");
  EXPECT_EQ(text.find('1', 3), std::string::npos);
}

TEST(Sci1, McsOverflow) {
  const SciFieldWidths w;
  Sci1 s;
  s.mcs = 40;
  EXPECT_EQ(error_of([&] { (void)encode_sci1(s, w); }), Errc::field_overflow);
}

TEST(Sci1, TruncatedInput) {
  const SciFieldWidths w;
  auto bits = encode_sci1(Sci1{}, w);
  bits.truncate(bits.size() - 1);
  EXPECT_EQ(error_of([&] { (void)decode_sci1(bits, w); }), Errc::length_mismatch);
}

TEST(Sci1, EveryOverflowRejected) {
  const SciFieldWidths w;
  auto expect_overflow = [&](auto mutate) {
    Sci1 s;
    mutate(s);
    EXPECT_EQ(error_of([&] { (void)encode_sci1(s, w); }), Errc::field_overflow);
  };
  expect_overflow([](Sci1& s) { s.priority = 8; });
  expect_overflow([](Sci1& s) { s.priority = -1; });
  expect_overflow([&](Sci1& s) { s.freq_resource_assignment = std::uint64_t{1} << w.freq_resource_assignment; });
  expect_overflow([&](Sci1& s) { s.time_resource_assignment = std::uint64_t{1} << w.time_resource_assignment; });
  expect_overflow([](Sci1& s) { s.dmrs_pattern = 4; });
  expect_overflow([](Sci1& s) { s.sci2_format = 4; });
  expect_overflow([](Sci1& s) { s.mcs = 32; });
  expect_overflow([](Sci1& s) { s.reserved_bits = 4; });
  expect_overflow([](Sci1& s) { s.beta_offset = 4; });
  expect_overflow([](Sci1& s) { s.dmrs_port_indicator = 2; });
  // A 13-entry period list does not fit a 3-bit index.
  SciFieldWidths narrow = w;
  narrow.reservation_period = 3;
  Sci1 s;
  s.resource_reservation_period_ms = 1000;
  EXPECT_EQ(error_of([&] { (void)encode_sci1(s, narrow); }), Errc::field_overflow);
  s.resource_reservation_period_ms = 30;
  EXPECT_EQ(error_of([&] { (void)encode_sci1(s, w); }), Errc::invalid_period);
}

TEST(Sci1, RandomRoundtrip) {
  std::mt19937_64 rng(11);
  const ReservationPeriods periods;
  for (int geometry = 0; geometry < 2; ++geometry) {
    const SciFieldWidths w = geometry == 0 ? SciFieldWidths{} : SciFieldWidths::for_pool(pool_mu0(2), 6);
    const std::size_t length = static_cast<std::size_t>(w.sci1_bits());
    for (int i = 0; i < 10000; ++i) {
      const Sci1 s = oracle::random_sci1(rng, w, periods);
      const auto bits = encode_sci1(s, w, periods);
      ASSERT_EQ(bits.size(), length);
      ASSERT_EQ(decode_sci1(bits, w, periods), s);
    }
  }
}

TEST(Sci2, RandomRoundtrip) {
  std::mt19937_64 rng(12);
  const SciFieldWidths w;
  for (int i = 0; i < 10000; ++i) {
    const Sci2 s = oracle::random_sci2(rng, w);
    const auto bits = encode_sci2(s, w);
    ASSERT_EQ(bits.size(), static_cast<std::size_t>(w.sci2_bits()));
    ASSERT_EQ(decode_sci2(bits, w), s);
  }
}

TEST(Sci2, HarqIdFirst) {
  const SciFieldWidths w;
  Sci2 s;
  s.harq_process_id = 0b1001;
  EXPECT_EQ(encode_sci2(s, w).to_string().substr(0, 4), "1001");
}

TEST(Sci2, NdiTogglesOneBit) {
  const SciFieldWidths w;
  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i) {
    Sci2 a = oracle::random_sci2(rng, w);
    Sci2 b = a;
    b.new_data_indicator = !a.new_data_indicator;
    const auto x = encode_sci2(a, w), y = encode_sci2(b, w);
    int diff = 0;
    std::size_t where = 0;
    for (std::size_t k = 0; k < x.size(); ++k)
      if (x[k] != y[k]) {
        ++diff;
        where = k;
      }
    EXPECT_EQ(diff, 1);
    EXPECT_EQ(where, static_cast<std::size_t>(w.harq_process_id));
  }
}

TEST(Sci2, EveryOverflowRejected) {
  const SciFieldWidths w;
  auto expect_overflow = [&](auto mutate) {
    Sci2 s;
    mutate(s);
    EXPECT_EQ(error_of([&] { (void)encode_sci2(s, w); }), Errc::field_overflow);
  };
  expect_overflow([](Sci2& s) { s.redundancy_version = 4; });
  expect_overflow([](Sci2& s) { s.redundancy_version = -1; });
  expect_overflow([](Sci2& s) { s.harq_process_id = 16; });
  expect_overflow([](Sci2& s) { s.source_id = 256; });
  expect_overflow([](Sci2& s) { s.destination_id = 65536; });
}

TEST(Sci2, TruncatedInput) {
  const SciFieldWidths w;
  auto bits = encode_sci2(Sci2{}, w);
  bits.truncate(3);
  EXPECT_EQ(error_of([&] { (void)decode_sci2(bits, w); }), Errc::length_mismatch);
}

TEST(BitString, BytesMsbFirst) {
  const auto b = BitString::from_string("1010000011");
  EXPECT_EQ(b.to_bytes(), (std::vector<std::uint8_t>{0xA0, 0xC0}));
}

TEST(Widths, ForPool) {
  const auto w = SciFieldWidths::for_pool(pool_mu0(5), 5);
  EXPECT_EQ(w.subchannel_bits, 3);
  EXPECT_EQ(w.freq_resource_assignment, 12);
  EXPECT_EQ(w.time_resource_assignment, 10);
  EXPECT_NO_THROW(w.validate());
  SciFieldWidths bad = w;
  bad.priority = 4;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(Assignment, Roundtrip) {
  const auto pool = pool_mu0(5);
  const auto w = SciFieldWidths::for_pool(pool);
  std::mt19937_64 rng(5);
  for (int i = 0; i < 2000; ++i) {
    std::vector<ExtraResource> extras;
    const int n = static_cast<int>(rng() % 3);
    for (int k = 0; k < n; ++k) {
      ExtraResource e;
      e.slot_offset = 1 + static_cast<int>(rng() % 31);
      e.subchannel_start = static_cast<int>(rng() % 5);
      e.subchannel_len = 1 + static_cast<int>(rng() % (5 - e.subchannel_start));
      extras.push_back(e);
    }
    const auto a = encode_assignment(extras, w);
    Sci1 s;
    s.freq_resource_assignment = a.frequency;
    s.time_resource_assignment = a.time;
    ASSERT_EQ(decode_assignment(decode_sci1(encode_sci1(s, w), w), w), extras);
  }
}

TEST(Reserved, AnchorOnly) {
  const auto pool = pool_mu0();
  const auto w = SciFieldWidths::for_pool(pool);
  const Resource anchor{10, 1, 2};
  EXPECT_EQ(reserved_resources(Sci1{}, anchor, pool, 300, w), (std::vector<Resource>{anchor}));
}

TEST(Reserved, PeriodicWithExtra) {
  const auto pool = pool_mu0();
  const auto w = SciFieldWidths::for_pool(pool);
  const ExtraResource extra{4, 0, 1};
  const auto a = encode_assignment(std::span(&extra, 1), w);
  Sci1 s;
  s.freq_resource_assignment = a.frequency;
  s.time_resource_assignment = a.time;
  s.resource_reservation_period_ms = 100;
  const auto out = reserved_resources(s, Resource{10, 0, 1}, pool, 300, w);
  std::vector<SlotIndex> slots;
  for (const auto& r : out) slots.push_back(r.slot_index);
  EXPECT_EQ(slots, (std::vector<SlotIndex>{10, 14, 110, 114, 210, 214}));
}

TEST(Reserved, OutOfPool) {
  const auto pool = pool_mu0(5);
  const auto w = SciFieldWidths::for_pool(pool);
  const ExtraResource extra{3, 4, 2};
  const auto a = encode_assignment(std::span(&extra, 1), w);
  Sci1 s;
  s.freq_resource_assignment = a.frequency;
  s.time_resource_assignment = a.time;
  EXPECT_EQ(error_of([&] { (void)reserved_resources(s, Resource{0, 0, 1}, pool, 100, w); }), Errc::assignment_out_of_pool);
}

TEST(Reserved, MatchesBruteForce) {
  const ReservationPeriods periods;
  std::mt19937_64 rng(99);
  for (const char* bitmap : {"1", "1101", "10"}) {
    const auto pool = pool_mu0(4, bitmap);
    const auto w = SciFieldWidths::for_pool(pool);
    for (int iter = 0; iter < 500; ++iter) {
      Resource anchor{static_cast<SlotIndex>(rng() % 50), 0, 1};
      while (!pool.is_sl_slot(anchor.slot_index)) ++anchor.slot_index;
      anchor.subchannel_start = static_cast<int>(rng() % 4);
      anchor.subchannel_len = 1 + static_cast<int>(rng() % (4 - anchor.subchannel_start));
      std::vector<ExtraResource> extras;
      for (int k = static_cast<int>(rng() % 3); k > 0; --k) {
        ExtraResource e;
        do e.slot_offset = 1 + static_cast<int>(rng() % 31);
        while (!pool.is_sl_slot(anchor.slot_index + e.slot_offset));
        e.subchannel_start = static_cast<int>(rng() % 4);
        e.subchannel_len = 1 + static_cast<int>(rng() % (4 - e.subchannel_start));
        extras.push_back(e);
      }
      const auto a = encode_assignment(extras, w);
      Sci1 s;
      s.freq_resource_assignment = a.frequency;
      s.time_resource_assignment = a.time;
      s.resource_reservation_period_ms = periods.values()[rng() % 5];
      const SlotIndex horizon = 1 + static_cast<SlotIndex>(rng() % 400);

      // Walk every slot and keep what a receiver would find announced there.
      std::vector<Resource> expected;
      std::vector<Resource> base{anchor};
      for (const auto& e : extras) base.push_back({anchor.slot_index + e.slot_offset, e.subchannel_start, e.subchannel_len});
      const SlotIndex period = s.resource_reservation_period_ms;  // mu = 0: 1 slot per ms
      for (SlotIndex slot = anchor.slot_index; slot < anchor.slot_index + horizon + 32; ++slot)
        for (const auto& b : base) {
          if (slot == b.slot_index) {
            expected.push_back(b);
            continue;
          }
          if (period == 0 || slot < b.slot_index || (slot - b.slot_index) % period != 0) continue;
          if (slot - anchor.slot_index < horizon && pool.is_sl_slot(slot))
            expected.push_back({slot, b.subchannel_start, b.subchannel_len});
        }
      std::sort(expected.begin(), expected.end());

      const auto got = reserved_resources(s, anchor, pool, horizon, w);
      ASSERT_EQ(got, expected) << "iteration " << iter;
      const SlotIndex reps = period > 0 ? horizon / period : 0;
      EXPECT_LE(static_cast<SlotIndex>(got.size()), 3 * (1 + reps));
      for (const auto& r : got) EXPECT_TRUE(pool.contains(r));
    }
  }
}
