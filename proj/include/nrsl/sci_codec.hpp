#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nrsl/error.hpp"
#include "nrsl/radio_grid.hpp"

namespace nrsl {

/// Fixed-length bit sequence, most significant bit of each field first.
class BitString {
 public:
  BitString() = default;

  static BitString from_string(const std::string& text) {
    BitString b;
    for (char c : text) {
      if (c != '0' && c != '1') fail(Errc::invalid_argument, "bit string may contain only '0' and '1'");
      b.bits_.push_back(c == '1');
    }
    return b;
  }

  void append(std::uint64_t value, int width) {
    for (int i = width - 1; i >= 0; --i) bits_.push_back(((value >> i) & 1U) != 0);
  }

  [[nodiscard]] std::uint64_t read(std::size_t pos, int width) const {
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v = (v << 1) | (bits_.at(pos + static_cast<std::size_t>(i)) ? 1U : 0U);
    return v;
  }

  [[nodiscard]] std::size_t size() const noexcept { return bits_.size(); }
  [[nodiscard]] bool operator[](std::size_t i) const { return bits_.at(i); }
  void truncate(std::size_t n) { bits_.resize(std::min(n, bits_.size())); }
  void flip(std::size_t i) { bits_.at(i) = !bits_.at(i); }

  [[nodiscard]] std::string to_string() const {
    std::string s;
    s.reserve(bits_.size());
    for (bool b : bits_) s.push_back(b ? '1' : '0');
    return s;
  }

  /// Packs into bytes MSB-first; the final byte is zero padded.
  [[nodiscard]] std::vector<std::uint8_t> to_bytes() const {
    std::vector<std::uint8_t> out((bits_.size() + 7) / 8, 0);
    for (std::size_t i = 0; i < bits_.size(); ++i)
      if (bits_[i]) out[i / 8] |= static_cast<std::uint8_t>(0x80U >> (i % 8));
    return out;
  }

  friend bool operator==(const BitString&, const BitString&) = default;

 private:
  std::vector<bool> bits_;
};

// ---------------------------------------------------------------------------
// Field definitions
// ---------------------------------------------------------------------------

struct Sci1 {
  int priority = 0;
  std::uint64_t freq_resource_assignment = 0;
  std::uint64_t time_resource_assignment = 0;
  int resource_reservation_period_ms = 0;
  int dmrs_pattern = 0;
  int sci2_format = 0;
  int mcs = 0;
  std::uint64_t reserved_bits = 0;
  int beta_offset = 0;
  int dmrs_port_indicator = 0;  // 0: one port, 1: two ports

  friend bool operator==(const Sci1&, const Sci1&) = default;
};

struct Sci2 {
  int harq_process_id = 0;
  bool new_data_indicator = false;
  int redundancy_version = 0;
  std::uint32_t source_id = 0;
  std::uint32_t destination_id = 0;
  bool csi_request = false;

  friend bool operator==(const Sci2&, const Sci2&) = default;
};

/// Allowed resource-reservation periods; the SCI carries an index into this list.
class ReservationPeriods {
 public:
  ReservationPeriods() : ms_{0, 20, 50, 100, 200, 300, 400, 500, 600, 700, 800, 900, 1000} {}
  explicit ReservationPeriods(std::vector<int> ms) : ms_(std::move(ms)) {
    if (ms_.empty() || ms_.front() != 0) fail(Errc::invalid_argument, "reservation period set must start with 0");
    for (std::size_t i = 1; i < ms_.size(); ++i)
      if (ms_[i] <= ms_[i - 1]) fail(Errc::invalid_argument, "reservation periods must be strictly increasing");
  }

  [[nodiscard]] int index_of(int period_ms) const {
    auto it = std::find(ms_.begin(), ms_.end(), period_ms);
    if (it == ms_.end()) fail(Errc::invalid_period, std::to_string(period_ms) + " ms is not an allowed reservation period");
    return static_cast<int>(it - ms_.begin());
  }
  [[nodiscard]] int at(std::uint64_t index) const {
    if (index >= ms_.size()) fail(Errc::invalid_period, "reservation period index " + std::to_string(index) + " unused");
    return ms_[index];
  }
  [[nodiscard]] bool allowed(int period_ms) const { return std::find(ms_.begin(), ms_.end(), period_ms) != ms_.end(); }
  /// Largest allowed period not above `ms`.
  [[nodiscard]] int floor(int ms) const {
    int best = 0;
    for (int p : ms_)
      if (p <= ms) best = p;
    return best;
  }
  [[nodiscard]] std::span<const int> values() const noexcept { return ms_; }

 private:
  std::vector<int> ms_;
};

/// Bit width of every SCI field. Assignment widths depend on pool geometry.
struct SciFieldWidths {
  // stage 1
  int priority = 3;
  int freq_resource_assignment = 12;
  int time_resource_assignment = 10;
  int reservation_period = 4;
  int dmrs_pattern = 2;
  int sci2_format = 2;
  int mcs = 5;
  int reserved = 2;
  int beta_offset = 2;
  int dmrs_ports = 1;
  // stage 2
  int harq_process_id = 4;
  int new_data_indicator = 1;
  int redundancy_version = 2;
  int source_id = 8;
  int destination_id = 16;
  int csi_request = 1;
  // Assignment layout: per extra resource a slot offset, a start subchannel and a length.
  int slot_offset_bits = 5;
  int subchannel_bits = 3;

  /// Widths for a pool; two extra resources are signalled per SCI.
  static SciFieldWidths for_pool(const ResourcePool& pool, int slot_offset_bits = 5) {
    SciFieldWidths w;
    w.slot_offset_bits = slot_offset_bits;
    w.subchannel_bits = std::bit_width(static_cast<unsigned>(pool.num_subchannels));
    w.freq_resource_assignment = 2 * 2 * w.subchannel_bits;
    w.time_resource_assignment = 2 * w.slot_offset_bits;
    return w;
  }

  void validate() const {
    if (priority != 3) fail(Errc::invalid_argument, "priority field is 3 bits");
    if (new_data_indicator != 1 || csi_request != 1) fail(Errc::invalid_argument, "flag fields are 1 bit");
    for (int w : {freq_resource_assignment, time_resource_assignment, reservation_period, dmrs_pattern, sci2_format,
                  mcs, reserved, beta_offset, dmrs_ports, harq_process_id, redundancy_version, source_id,
                  destination_id, slot_offset_bits, subchannel_bits})
      if (w < 1 || w > 63) fail(Errc::invalid_argument, "field widths must be in 1..63");
    if (freq_resource_assignment != 4 * subchannel_bits || time_resource_assignment != 2 * slot_offset_bits)
      fail(Errc::invalid_argument, "assignment widths inconsistent with offset/subchannel widths");
  }

  [[nodiscard]] int sci1_bits() const noexcept {
    return priority + freq_resource_assignment + time_resource_assignment + reservation_period + dmrs_pattern +
           sci2_format + mcs + reserved + beta_offset + dmrs_ports;
  }
  [[nodiscard]] int sci2_bits() const noexcept {
    return harq_process_id + new_data_indicator + redundancy_version + source_id + destination_id + csi_request;
  }
};

namespace detail {

inline void put(BitString& out, std::uint64_t value, int width, const char* field) {
  if (width < 64 && value >= (std::uint64_t{1} << width))
    fail(Errc::field_overflow, std::string(field) + " value " + std::to_string(value) + " does not fit " +
                                   std::to_string(width) + " bits");
  out.append(value, width);
}

inline std::uint64_t put_signed(int value, const char* field) {
  if (value < 0) fail(Errc::field_overflow, std::string(field) + " is negative");
  return static_cast<std::uint64_t>(value);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Stage 1 / stage 2 codecs
// ---------------------------------------------------------------------------

inline BitString encode_sci1(const Sci1& sci, const SciFieldWidths& w,
                             const ReservationPeriods& periods = ReservationPeriods{}) {
  using detail::put;
  using detail::put_signed;
  BitString b;
  put(b, put_signed(sci.priority, "priority"), w.priority, "priority");
  put(b, sci.freq_resource_assignment, w.freq_resource_assignment, "frequency resource assignment");
  put(b, sci.time_resource_assignment, w.time_resource_assignment, "time resource assignment");
  put(b, static_cast<std::uint64_t>(periods.index_of(sci.resource_reservation_period_ms)), w.reservation_period,
      "resource reservation period");
  put(b, put_signed(sci.dmrs_pattern, "dmrs pattern"), w.dmrs_pattern, "dmrs pattern");
  put(b, put_signed(sci.sci2_format, "2nd-stage format"), w.sci2_format, "2nd-stage format");
  put(b, put_signed(sci.mcs, "mcs"), w.mcs, "mcs");
  put(b, sci.reserved_bits, w.reserved, "reserved");
  put(b, put_signed(sci.beta_offset, "beta offset"), w.beta_offset, "beta offset");
  put(b, put_signed(sci.dmrs_port_indicator, "dmrs ports"), w.dmrs_ports, "dmrs ports");
  return b;
}

inline Sci1 decode_sci1(const BitString& bits, const SciFieldWidths& w,
                        const ReservationPeriods& periods = ReservationPeriods{}) {
  if (bits.size() != static_cast<std::size_t>(w.sci1_bits()))
    fail(Errc::length_mismatch, "stage-1 SCI needs " + std::to_string(w.sci1_bits()) + " bits, got " +
                                    std::to_string(bits.size()));
  std::size_t pos = 0;
  auto take = [&](int width) {
    auto v = bits.read(pos, width);
    pos += static_cast<std::size_t>(width);
    return v;
  };
  Sci1 s;
  s.priority = static_cast<int>(take(w.priority));
  s.freq_resource_assignment = take(w.freq_resource_assignment);
  s.time_resource_assignment = take(w.time_resource_assignment);
  s.resource_reservation_period_ms = periods.at(take(w.reservation_period));
  s.dmrs_pattern = static_cast<int>(take(w.dmrs_pattern));
  s.sci2_format = static_cast<int>(take(w.sci2_format));
  s.mcs = static_cast<int>(take(w.mcs));
  s.reserved_bits = take(w.reserved);
  s.beta_offset = static_cast<int>(take(w.beta_offset));
  s.dmrs_port_indicator = static_cast<int>(take(w.dmrs_ports));
  return s;
}

inline BitString encode_sci2(const Sci2& sci, const SciFieldWidths& w) {
  using detail::put;
  using detail::put_signed;
  BitString b;
  put(b, put_signed(sci.harq_process_id, "harq process id"), w.harq_process_id, "harq process id");
  put(b, sci.new_data_indicator ? 1 : 0, w.new_data_indicator, "new data indicator");
  put(b, put_signed(sci.redundancy_version, "redundancy version"), w.redundancy_version, "redundancy version");
  put(b, sci.source_id, w.source_id, "source id");
  put(b, sci.destination_id, w.destination_id, "destination id");
  put(b, sci.csi_request ? 1 : 0, w.csi_request, "csi request");
  return b;
}

inline Sci2 decode_sci2(const BitString& bits, const SciFieldWidths& w) {
  if (bits.size() != static_cast<std::size_t>(w.sci2_bits()))
    fail(Errc::length_mismatch, "stage-2 SCI needs " + std::to_string(w.sci2_bits()) + " bits, got " +
                                    std::to_string(bits.size()));
  std::size_t pos = 0;
  auto take = [&](int width) {
    auto v = bits.read(pos, width);
    pos += static_cast<std::size_t>(width);
    return v;
  };
  Sci2 s;
  s.harq_process_id = static_cast<int>(take(w.harq_process_id));
  s.new_data_indicator = take(w.new_data_indicator) != 0;
  s.redundancy_version = static_cast<int>(take(w.redundancy_version));
  s.source_id = static_cast<std::uint32_t>(take(w.source_id));
  s.destination_id = static_cast<std::uint32_t>(take(w.destination_id));
  s.csi_request = take(w.csi_request) != 0;
  return s;
}

// ---------------------------------------------------------------------------
// Resource assignment
// ---------------------------------------------------------------------------

/// A further resource signalled relative to the resource carrying the SCI.
/// A zero slot offset marks an absent entry.
struct ExtraResource {
  int slot_offset = 0;
  int subchannel_start = 0;
  int subchannel_len = 0;
  friend bool operator==(const ExtraResource&, const ExtraResource&) = default;
};

inline constexpr int kMaxExtraResources = 2;

struct ResourceAssignment {
  std::uint64_t frequency = 0;
  std::uint64_t time = 0;
};

/// Time field: offset0 | offset1. Frequency field: start0 | len0 | start1 | len1.
inline ResourceAssignment encode_assignment(std::span<const ExtraResource> extras, const SciFieldWidths& w) {
  if (extras.size() > kMaxExtraResources) fail(Errc::invalid_argument, "at most two extra resources per SCI");
  ResourceAssignment a;
  const std::uint64_t max_offset = (std::uint64_t{1} << w.slot_offset_bits) - 1;
  const std::uint64_t max_sub = (std::uint64_t{1} << w.subchannel_bits) - 1;
  for (int i = 0; i < kMaxExtraResources; ++i) {
    ExtraResource e = i < static_cast<int>(extras.size()) ? extras[static_cast<std::size_t>(i)] : ExtraResource{};
    if (e.slot_offset < 0 || static_cast<std::uint64_t>(e.slot_offset) > max_offset)
      fail(Errc::field_overflow, "slot offset " + std::to_string(e.slot_offset) + " does not fit the time field");
    if (e.slot_offset > 0 && (e.subchannel_len < 1 || e.subchannel_start < 0 ||
                              static_cast<std::uint64_t>(e.subchannel_start) > max_sub ||
                              static_cast<std::uint64_t>(e.subchannel_len) > max_sub))
      fail(Errc::field_overflow, "subchannel indication does not fit the frequency field");
    if (e.slot_offset == 0) e = ExtraResource{};
    a.time = (a.time << w.slot_offset_bits) | static_cast<std::uint64_t>(e.slot_offset);
    a.frequency = (a.frequency << w.subchannel_bits) | static_cast<std::uint64_t>(e.subchannel_start);
    a.frequency = (a.frequency << w.subchannel_bits) | static_cast<std::uint64_t>(e.subchannel_len);
  }
  return a;
}

inline std::vector<ExtraResource> decode_assignment(const Sci1& sci, const SciFieldWidths& w) {
  std::vector<ExtraResource> out;
  const std::uint64_t off_mask = (std::uint64_t{1} << w.slot_offset_bits) - 1;
  const std::uint64_t sub_mask = (std::uint64_t{1} << w.subchannel_bits) - 1;
  for (int i = 0; i < kMaxExtraResources; ++i) {
    const int shift_t = (kMaxExtraResources - 1 - i) * w.slot_offset_bits;
    const int shift_f = (kMaxExtraResources - 1 - i) * 2 * w.subchannel_bits;
    ExtraResource e;
    e.slot_offset = static_cast<int>((sci.time_resource_assignment >> shift_t) & off_mask);
    e.subchannel_start = static_cast<int>((sci.freq_resource_assignment >> (shift_f + w.subchannel_bits)) & sub_mask);
    e.subchannel_len = static_cast<int>((sci.freq_resource_assignment >> shift_f) & sub_mask);
    if (e.slot_offset != 0) out.push_back(e);
  }
  return out;
}

/// Resources announced by `sci` sent on `anchor`: the anchor, up to two extras,
/// and, for a nonzero reservation period, their repetitions at multiples of the
/// period whose distance from the anchor slot is below `horizon_slots`.
inline std::vector<Resource> reserved_resources(const Sci1& sci, const Resource& anchor, const ResourcePool& pool,
                                                SlotIndex horizon_slots, const SciFieldWidths& w) {
  std::vector<Resource> base{anchor};
  for (const auto& e : decode_assignment(sci, w)) {
    Resource r{anchor.slot_index + e.slot_offset, e.subchannel_start, e.subchannel_len};
    if (!pool.contains(r))
      fail(Errc::assignment_out_of_pool, "signalled resource " + to_string(r) + " lies outside the pool");
    base.push_back(r);
  }
  std::vector<Resource> out;
  const SlotIndex period = pool.numerology().ms_to_slots(sci.resource_reservation_period_ms);
  for (SlotIndex shift = 0; shift == 0 || (period > 0 && shift < horizon_slots); shift += period) {
    for (const auto& r : base) {
      Resource rep{r.slot_index + shift, r.subchannel_start, r.subchannel_len};
      if (rep.slot_index - anchor.slot_index >= horizon_slots && shift > 0) continue;
      if (shift > 0 && !pool.is_sl_slot(rep.slot_index)) continue;
      out.push_back(rep);
    }
    if (period == 0) break;
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace nrsl
