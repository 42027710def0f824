#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nrsl/error.hpp"
#include "nrsl/radio_grid.hpp"

namespace nrsl {

enum class CastType { unicast, groupcast, broadcast };
enum class FeedbackMode { ack_nack, nack_only, none };
enum class Feedback { ack, nack, silence };

inline std::string_view to_string(CastType c) noexcept {
  switch (c) {
    case CastType::unicast: return "unicast";
    case CastType::groupcast: return "groupcast";
    case CastType::broadcast: return "broadcast";
  }
  return "unknown";
}
inline std::string_view to_string(FeedbackMode m) noexcept {
  switch (m) {
    case FeedbackMode::ack_nack: return "ack_nack";
    case FeedbackMode::nack_only: return "nack_only";
    case FeedbackMode::none: return "none";
  }
  return "unknown";
}

struct HarqConfig {
  int max_tx = 3;
  std::vector<int> rv_sequence{0, 2, 3, 1};
  int min_gap_slots = 2;
  double psfch_loss_probability = 0.0;

  void validate() const {
    if (max_tx < 1 || max_tx > 32) fail(Errc::invalid_argument, "max_tx must be 1..32");
    if (rv_sequence.empty()) fail(Errc::invalid_argument, "rv_sequence is empty");
    for (int rv : rv_sequence)
      if (rv < 0 || rv > 3) fail(Errc::invalid_argument, "redundancy versions are 0..3");
    if (min_gap_slots < 1) fail(Errc::invalid_argument, "PSFCH min gap must be >= 1 slot");
    if (!(psfch_loss_probability >= 0.0 && psfch_loss_probability <= 1.0))
      fail(Errc::invalid_argument, "psfch_loss_probability must be in [0, 1]");
  }
};

/// Transmit-side HARQ state for one transport block.
class HarqProcess {
 public:
  HarqProcess(int harq_id, std::int64_t tb_ref, CastType cast, FeedbackMode mode, double comm_range_m,
              const HarqConfig& cfg)
      : harq_id_(harq_id), tb_ref_(tb_ref), cast_(cast), mode_(mode), comm_range_m_(comm_range_m),
        max_tx_(cfg.max_tx), rv_sequence_(cfg.rv_sequence) {
    cfg.validate();
    if (cast == CastType::broadcast && mode != FeedbackMode::none)
      fail(Errc::invalid_argument, "broadcast carries no HARQ feedback");
    if (mode == FeedbackMode::nack_only && cast != CastType::groupcast)
      fail(Errc::invalid_argument, "NACK-only feedback applies to groupcast");
    if (mode == FeedbackMode::nack_only && !(comm_range_m > 0.0))
      fail(Errc::invalid_argument, "NACK-only feedback needs a positive communication range");
  }

  [[nodiscard]] int harq_id() const noexcept { return harq_id_; }
  [[nodiscard]] std::int64_t tb_ref() const noexcept { return tb_ref_; }
  [[nodiscard]] CastType cast_type() const noexcept { return cast_; }
  [[nodiscard]] FeedbackMode feedback_mode() const noexcept { return mode_; }
  [[nodiscard]] double comm_range_m() const noexcept { return comm_range_m_; }
  [[nodiscard]] int tx_count() const noexcept { return tx_count_; }
  [[nodiscard]] int max_tx() const noexcept { return max_tx_; }
  [[nodiscard]] std::optional<SlotIndex> pending_feedback_slot() const noexcept { return pending_feedback_slot_; }

  /// Redundancy version of the next transmission.
  [[nodiscard]] int next_rv() const {
    return rv_sequence_[static_cast<std::size_t>(tx_count_) % rv_sequence_.size()];
  }

  /// Registers a transmission; returns the redundancy version it used.
  int record_tx(std::optional<SlotIndex> feedback_slot = std::nullopt) {
    if (tx_count_ >= max_tx_) fail(Errc::invalid_argument, "HARQ process exceeded max_tx");
    const int rv = next_rv();
    ++tx_count_;
    pending_feedback_slot_ = feedback_slot;
    return rv;
  }

  void clear_pending_feedback() noexcept { pending_feedback_slot_.reset(); }

 private:
  int harq_id_;
  std::int64_t tb_ref_;
  CastType cast_;
  FeedbackMode mode_;
  double comm_range_m_;
  int max_tx_;
  std::vector<int> rv_sequence_;
  int tx_count_ = 0;
  std::optional<SlotIndex> pending_feedback_slot_;
};

/// Receiver feedback for one decoding attempt.
inline Feedback generate_feedback(FeedbackMode mode, bool decode_success, double tx_rx_distance_m,
                                  double comm_range_m) noexcept {
  switch (mode) {
    case FeedbackMode::ack_nack: return decode_success ? Feedback::ack : Feedback::nack;
    case FeedbackMode::nack_only:
      return (!decode_success && tx_rx_distance_m <= comm_range_m) ? Feedback::nack : Feedback::silence;
    case FeedbackMode::none: return Feedback::silence;
  }
  return Feedback::silence;
}

inline Feedback generate_feedback(const HarqProcess& proc, bool decode_success, double tx_rx_distance_m) noexcept {
  return generate_feedback(proc.feedback_mode(), decode_success, tx_rx_distance_m, proc.comm_range_m());
}

/// First PSFCH occasion at or after tx_slot + min_gap: a slot index divisible
/// by the PSFCH period that is also an SL slot of the pool.
inline std::optional<SlotIndex> psfch_slot_for(SlotIndex tx_slot, const ResourcePool& pool, int min_gap_slots) {
  if (pool.psfch_period_slots == 0) return std::nullopt;
  const SlotIndex period = pool.psfch_period_slots;
  SlotIndex s = tx_slot + min_gap_slots;
  if (s % period != 0) s += period - s % period;
  const SlotIndex limit = s + period * static_cast<SlotIndex>(pool.slot_bitmap.size()) + 1;
  for (; s <= limit; s += period)
    if (pool.is_sl_slot(s)) return s;
  return std::nullopt;
}

enum class HarqStep { done, retransmit, failed };

struct HarqDecision {
  HarqStep step = HarqStep::done;
  int rv = 0;  // for retransmit
};

/// Next step after the feedback for the latest transmission. In blind mode the
/// process retransmits until max_tx regardless of feedback.
inline HarqDecision on_feedback(const HarqProcess& proc, Feedback outcome, bool blind_mode) {
  if (blind_mode) {
    if (proc.tx_count() < proc.max_tx()) return {HarqStep::retransmit, proc.next_rv()};
    return {HarqStep::done, 0};
  }
  switch (outcome) {
    case Feedback::ack: return {HarqStep::done, 0};
    case Feedback::silence:
      // nack_only: nobody in range failed. none: nothing to wait for.
      return {HarqStep::done, 0};
    case Feedback::nack:
      if (proc.tx_count() < proc.max_tx()) return {HarqStep::retransmit, proc.next_rv()};
      return {HarqStep::failed, 0};
  }
  return {HarqStep::done, 0};
}

}  // namespace nrsl
