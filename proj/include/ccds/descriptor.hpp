#pragma once

#include <atomic>
#include <cstring>
#include <optional>
#include <type_traits>

#include "ccds/common.hpp"

namespace ccds {

// Extended weak descriptors with per-process reuse.
//
// Every process owns a single slot per descriptor type; CreateNew reinitializes
// the slot and bumps its sequence number by two, invalidating all previously
// returned handles for that (process, type) pair. Reads and field CASes
// validate the handle's sequence number against the slot and return a default
// value (or an invalid signal) when stale. No descriptor is ever reclaimed.
//
// A handle is a packed word:
//   bits [0..1]   zero (clients may steal them as flag bits when publishing)
//   bits [2..15]  process id (14 bits)
//   bits [16..63] sequence number (48 bits)
//
// The slot's `mutables` word packs the same 48-bit sequence number above the
// descriptor's mutable bit fields, so one CAS covers both.

struct DescriptorHandle {
  word_t bits = 0;

  static constexpr unsigned kPidShift = 2;
  static constexpr unsigned kSeqShift = 16;

  static DescriptorHandle make(unsigned pid, word_t seq) {
    return {(seq << kSeqShift) | (static_cast<word_t>(pid) << kPidShift)};
  }
  unsigned pid() const { return static_cast<unsigned>((bits >> kPidShift) & 0x3fff); }
  word_t seq() const { return bits >> kSeqShift; }

  friend bool operator==(DescriptorHandle a, DescriptorHandle b) { return a.bits == b.bits; }
};

// A mutable bit field within the packed mutables word.
struct MutField {
  unsigned shift;
  unsigned width;
  constexpr word_t mask() const { return ((word_t{1} << width) - 1) << shift; }
};

// One descriptor slot per process. Imm must be trivially copyable with a size
// that is a multiple of the word size; its contents are only immutable for as
// long as the slot represents the same abstract descriptor.
template <class Imm, unsigned MutBits = 14>
class DescriptorPool {
  static_assert(std::is_trivially_copyable_v<Imm>);
  static_assert(sizeof(Imm) % sizeof(word_t) == 0);
  static_assert(MutBits <= 16, "mutable fields share the word with a 48-bit seq");

  static constexpr unsigned kImmWords = sizeof(Imm) / sizeof(word_t);
  static constexpr unsigned kSeqShift = 16;

 public:
  DescriptorHandle create_new(const Imm& imm, word_t initial_mut = 0) {
    const unsigned pid = static_cast<unsigned>(threads::id());
    Slot& s = slots_[pid];
    if (!s.used.exchange(true)) slots_allocated_.fetch_add(1);
    CCDS_STEP();
    word_t cur = s.mutables.load();
    word_t seq = cur >> kSeqShift;
    CCDS_STEP();
    // Odd while initializing: no handle in the system matches, so the fields
    // below cannot be observed or modified through the ADT.
    s.mutables.store(((seq + 1) << kSeqShift) | (cur & mut_mask()));
    CCDS_STEP();
    word_t raw[kImmWords];
    std::memcpy(raw, &imm, sizeof(Imm));
    for (unsigned i = 0; i < kImmWords; ++i) s.imm[i].store(raw[i]);
    CCDS_STEP();
    s.mutables.store(((seq + 2) << kSeqShift) | (initial_mut & mut_mask()));
    return DescriptorHandle::make(pid, seq + 2);
  }

  // Mutable-field read; the default return is the invalid signal.
  word_t read_field(DescriptorHandle h, MutField f, word_t dv) const {
    CCDS_STEP();
    word_t m = slots_[h.pid()].mutables.load();
    if ((m >> kSeqShift) != h.seq()) return dv;
    return (m & f.mask()) >> f.shift;
  }

  // Immutable-field read by word index; dv signals staleness.
  word_t read_imm_word(DescriptorHandle h, unsigned idx, word_t dv) const {
    const Slot& s = slots_[h.pid()];
    CCDS_STEP();
    word_t v = s.imm[idx].load();
    CCDS_STEP();
    if ((s.mutables.load() >> kSeqShift) != h.seq()) return dv;
    return v;
  }

  // All-or-nothing snapshot of the immutable fields.
  std::optional<Imm> read_immutables(DescriptorHandle h) const {
    const Slot& s = slots_[h.pid()];
    CCDS_STEP();
    word_t raw[kImmWords];
    for (unsigned i = 0; i < kImmWords; ++i) raw[i] = s.imm[i].load();
    CCDS_STEP();
    if ((s.mutables.load() >> kSeqShift) != h.seq()) return std::nullopt;
    Imm out;
    std::memcpy(&out, raw, sizeof(Imm));
    return out;
  }

  // Silently has no effect when the handle is stale.
  void write_field(DescriptorHandle h, MutField f, word_t v) {
    Slot& s = slots_[h.pid()];
    for (;;) {
      CCDS_STEP();
      word_t old = s.mutables.load();
      if ((old >> kSeqShift) != h.seq()) return;
      word_t nw = (old & ~f.mask()) | ((v << f.shift) & f.mask());
      CCDS_STEP();
      if (s.mutables.compare_exchange_strong(old, nw)) return;
    }
  }

  // Returns the prior field value, or nullopt when the handle is stale.
  std::optional<word_t> cas_field(DescriptorHandle h, MutField f, word_t expected, word_t nv) {
    Slot& s = slots_[h.pid()];
    for (;;) {
      CCDS_STEP();
      word_t old = s.mutables.load();
      if ((old >> kSeqShift) != h.seq()) return std::nullopt;
      word_t cur = (old & f.mask()) >> f.shift;
      if (cur != expected) return cur;
      word_t nw = (old & ~f.mask()) | ((nv << f.shift) & f.mask());
      CCDS_STEP();
      if (s.mutables.compare_exchange_strong(old, nw)) return cur;
    }
  }

  unsigned slots_used() const { return slots_allocated_.load(); }

 private:
  static constexpr word_t mut_mask() { return (word_t{1} << MutBits) - 1; }

  struct alignas(128) Slot {
    std::atomic<word_t> mutables{0};
    std::atomic<word_t> imm[kImmWords ? kImmWords : 1];
    std::atomic<bool> used{false};
  };

  Slot slots_[kMaxThreads];
  std::atomic<unsigned> slots_allocated_{0};
};

}  // namespace ccds
