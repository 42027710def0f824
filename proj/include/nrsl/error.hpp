#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nrsl {

/// Error categories raised by the library. Every operation that can fail
/// throws nrsl::Error carrying one of these codes.
enum class Errc {
  // radio_grid
  invalid_mu,
  extended_cp_unsupported,
  symbol_out_of_range,
  symbol_conflict,
  pssch_overlaps_psfch,
  pssch_uses_last_symbol,
  guard_misplaced,
  pssch_noncontiguous,
  invalid_bandwidth,
  prb_count_unknown,
  subchannel_too_small,
  pool_exceeds_bwp,
  // sci_codec
  field_overflow,
  length_mismatch,
  invalid_period,
  assignment_out_of_pool,
  // phy_model
  nonpositive_distance,
  unknown_mcs,
  // sensing_mode2
  empty_selection_window,
  insufficient_candidates,
  // mode1_grants
  overlapping_grant,
  unknown_ue,
  not_type2,
  unknown_grant,
  wrong_pool_kind,
  // congestion_control
  malformed_table,
  // shared
  invalid_argument,
  // cli / config
  parse_error,
  validation_error,
  unknown_key,
  io_error,
  runtime_error,
};

constexpr std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_mu: return "invalid-mu";
    case Errc::extended_cp_unsupported: return "extended-cp-unsupported";
    case Errc::symbol_out_of_range: return "symbol-out-of-range";
    case Errc::symbol_conflict: return "symbol-conflict";
    case Errc::pssch_overlaps_psfch: return "pssch-overlaps-psfch";
    case Errc::pssch_uses_last_symbol: return "pssch-uses-last-symbol";
    case Errc::guard_misplaced: return "guard-misplaced";
    case Errc::pssch_noncontiguous: return "pssch-noncontiguous";
    case Errc::invalid_bandwidth: return "invalid-bandwidth";
    case Errc::prb_count_unknown: return "prb-count-unknown";
    case Errc::subchannel_too_small: return "subchannel-too-small";
    case Errc::pool_exceeds_bwp: return "pool-exceeds-bwp";
    case Errc::field_overflow: return "field-overflow";
    case Errc::length_mismatch: return "length-mismatch";
    case Errc::invalid_period: return "invalid-period";
    case Errc::assignment_out_of_pool: return "assignment-out-of-pool";
    case Errc::nonpositive_distance: return "nonpositive-distance";
    case Errc::unknown_mcs: return "unknown-mcs";
    case Errc::empty_selection_window: return "empty-selection-window";
    case Errc::insufficient_candidates: return "insufficient-candidates";
    case Errc::overlapping_grant: return "overlapping-grant";
    case Errc::unknown_ue: return "unknown-ue";
    case Errc::not_type2: return "not-type2";
    case Errc::unknown_grant: return "unknown-grant";
    case Errc::wrong_pool_kind: return "wrong-pool-kind";
    case Errc::malformed_table: return "malformed-table";
    case Errc::invalid_argument: return "invalid-argument";
    case Errc::parse_error: return "parse-error";
    case Errc::validation_error: return "validation-error";
    case Errc::unknown_key: return "unknown-key";
    case Errc::io_error: return "io-error";
    case Errc::runtime_error: return "runtime-error";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

  [[nodiscard]] Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& detail) { throw Error(code, detail); }

}  // namespace nrsl
