#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nrsl/error.hpp"
#include "nrsl/sci_codec.hpp"

namespace nrsl {

inline double dbm_to_mw(double dbm) noexcept { return std::pow(10.0, dbm / 10.0); }
inline double mw_to_dbm(double mw) noexcept {
  return mw > 0.0 ? 10.0 * std::log10(mw) : -std::numeric_limits<double>::infinity();
}

/// Thermal noise over `bandwidth_hz` plus the receiver noise figure.
inline double thermal_noise_dbm(double bandwidth_hz, double noise_figure_db) noexcept {
  return -174.0 + 10.0 * std::log10(bandwidth_hz) + noise_figure_db;
}

struct LinkBudget {
  double tx_power_dbm = 23.0;
  double pathloss_exponent = 2.75;
  double reference_loss_db = 47.0;  // at 1 m
  double shadowing_sigma_db = 3.0;
  double noise_dbm = -99.4;  // per subchannel

  void validate() const {
    if (!(pathloss_exponent > 0.0)) fail(Errc::invalid_argument, "pathloss exponent must be > 0");
    if (!(shadowing_sigma_db >= 0.0)) fail(Errc::invalid_argument, "shadowing sigma must be >= 0");
  }
};

/// Log-distance pathloss with an externally drawn shadowing sample.
inline double rsrp_at(const LinkBudget& budget, double distance_m, double shadow_sample_db) {
  if (!(distance_m > 0.0)) fail(Errc::nonpositive_distance, "distance must be > 0, got " + std::to_string(distance_m));
  return budget.tx_power_dbm - (budget.reference_loss_db + 10.0 * budget.pathloss_exponent * std::log10(distance_m)) -
         shadow_sample_db;
}

inline double sinr_db(double signal_dbm, std::span<const double> interferer_dbm, double noise_dbm) {
  double denom = dbm_to_mw(noise_dbm);
  for (double i : interferer_dbm) denom += dbm_to_mw(i);
  return signal_dbm - mw_to_dbm(denom);
}

/// Minimum SINR for successful decoding, per MCS index.
class McsThresholdTable {
 public:
  /// threshold(mcs) = offset + slope * mcs for mcs in 0..28.
  static McsThresholdTable linear(double offset_db = -2.0, double slope_db = 1.0, int max_mcs = 28) {
    McsThresholdTable t;
    for (int m = 0; m <= max_mcs; ++m) t.thresholds_.push_back(offset_db + slope_db * m);
    return t;
  }
  static McsThresholdTable from(std::vector<double> thresholds) {
    McsThresholdTable t;
    t.thresholds_ = std::move(thresholds);
    return t;
  }

  [[nodiscard]] double threshold(int mcs) const {
    if (mcs < 0 || mcs >= static_cast<int>(thresholds_.size()))
      fail(Errc::unknown_mcs, "no SINR threshold for MCS " + std::to_string(mcs));
    return thresholds_[static_cast<std::size_t>(mcs)];
  }
  [[nodiscard]] int size() const noexcept { return static_cast<int>(thresholds_.size()); }

 private:
  std::vector<double> thresholds_;
};

enum class DecodeResult { success, failure };

inline DecodeResult decode_outcome(double sinr, int mcs, bool half_duplex_blocked, const McsThresholdTable& table) {
  const double threshold = table.threshold(mcs);
  if (half_duplex_blocked) return DecodeResult::failure;
  return sinr >= threshold ? DecodeResult::success : DecodeResult::failure;
}

/// Which reference signal sensing RSRP is measured on.
enum class RsrpSource { pscch, pssch };

struct RxObservation {
  double rsrp_dbm = -std::numeric_limits<double>::infinity();
  double sinr_db = -std::numeric_limits<double>::infinity();
  bool decoded = false;
  std::optional<Sci1> sci1;
  double energy_dbm = -std::numeric_limits<double>::infinity();

  [[nodiscard]] bool valid() const noexcept { return !decoded || sci1.has_value(); }
};

}  // namespace nrsl
