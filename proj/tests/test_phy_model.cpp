#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "nrsl/phy_model.hpp"
#include "nrsl/rng.hpp"

using namespace nrsl;

namespace {

LinkBudget budget() {
  LinkBudget b;
  b.tx_power_dbm = 23.0;
  b.reference_loss_db = 47.0;
  b.pathloss_exponent = 2.75;
  return b;
}

}  // namespace

TEST(Rsrp, OneMetre) { EXPECT_DOUBLE_EQ(rsrp_at(budget(), 1.0, 0.0), -24.0); }

TEST(Rsrp, HundredMetres) { EXPECT_NEAR(rsrp_at(budget(), 100.0, 0.0), -79.0, 1e-9); }

TEST(Rsrp, ShadowSubtracts) { EXPECT_NEAR(rsrp_at(budget(), 100.0, 4.5), -83.5, 1e-9); }

TEST(Rsrp, NonpositiveDistance) {
  try {
    (void)rsrp_at(budget(), 0.0, 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::nonpositive_distance);
  }
  EXPECT_THROW((void)rsrp_at(budget(), -3.0, 0.0), Error);
}

TEST(Rsrp, DecreasingInDistance) {
  double prev = rsrp_at(budget(), 0.5, 0.0);
  for (double d = 0.75; d < 5000.0; d *= 1.1) {
    const double r = rsrp_at(budget(), d, 0.0);
    EXPECT_LT(r, prev);
    prev = r;
  }
}

TEST(Sinr, NoInterferers) { EXPECT_NEAR(sinr_db(-79.0, {}, -94.0), 15.0, 1e-12); }

TEST(Sinr, EqualPowerInterferer) {
  const std::vector<double> i{-79.0};
  // 10 log10(1 / (1 + 10^-9.5)) from the linear definition.
  const double expected = -10.0 * std::log10(1.0 + std::pow(10.0, -9.5));
  EXPECT_NEAR(sinr_db(-79.0, i, -174.0), expected, 1e-12);
  EXPECT_NEAR(sinr_db(-79.0, i, -174.0), 0.0, 1e-6);
}

TEST(Sinr, WeakSignal) { EXPECT_NEAR(sinr_db(-200.0, {}, -94.0), -106.0, 1e-12); }

TEST(Sinr, MonotoneInInterferers) {
  std::mt19937 rng(1);
  std::uniform_real_distribution<double> p(-120.0, -60.0);
  std::vector<double> interferers;
  double prev = sinr_db(-70.0, interferers, -95.0);
  for (int k = 0; k < 50; ++k) {
    interferers.push_back(p(rng));
    const double s = sinr_db(-70.0, interferers, -95.0);
    EXPECT_LE(s, prev);
    prev = s;
  }
}

TEST(Decode, ThresholdRule) {
  const auto t = McsThresholdTable::linear();
  EXPECT_DOUBLE_EQ(t.threshold(5), 3.0);
  const auto custom = McsThresholdTable::from({0, 1, 2, 3, 4, 5});
  EXPECT_EQ(decode_outcome(15.0, 5, false, custom), DecodeResult::success);
  EXPECT_EQ(decode_outcome(5.0, 5, false, custom), DecodeResult::success);
  EXPECT_EQ(decode_outcome(3.0, 5, false, custom), DecodeResult::failure);
  for (double s : {-50.0, 0.0, 100.0}) EXPECT_EQ(decode_outcome(s, 5, true, custom), DecodeResult::failure);
}

TEST(Decode, UnknownMcs) {
  const auto t = McsThresholdTable::linear();
  EXPECT_EQ(t.size(), 29);
  try {
    (void)decode_outcome(10.0, 29, false, t);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::unknown_mcs);
  }
}

TEST(Noise, Thermal) { EXPECT_NEAR(thermal_noise_dbm(1e6, 0.0), -114.0, 1e-9); }

TEST(LinkBudgetCheck, Invariants) {
  LinkBudget b;
  b.pathloss_exponent = 0.0;
  EXPECT_THROW(b.validate(), Error);
  b = LinkBudget{};
  b.shadowing_sigma_db = -1.0;
  EXPECT_THROW(b.validate(), Error);
}

TEST(Rng, KeyedNormalMoments) {
  const int n = 200000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = keyed_normal(hash_combine(42, static_cast<std::uint64_t>(i)));
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n;
  EXPECT_NEAR(mean, 0.0, 0.01);
  EXPECT_NEAR(sq / n - mean * mean, 1.0, 0.02);
}

TEST(Rng, SubstreamsIndependentOfOrder) {
  auto a = substream(7, 3, StreamPurpose::traffic);
  auto b = substream(7, 4, StreamPurpose::traffic);
  auto a2 = substream(7, 3, StreamPurpose::traffic);
  EXPECT_EQ(a(), a2());
  EXPECT_NE(substream(7, 3, StreamPurpose::traffic)(), b());
  EXPECT_NE(substream(7, 3, StreamPurpose::traffic)(), substream(7, 3, StreamPurpose::selection)());
}
