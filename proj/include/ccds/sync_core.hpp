#pragma once

#include <array>
#include <atomic>
#include <bit>
#include <cstring>

#include "ccds/common.hpp"
#include "ccds/descriptor.hpp"
#include "ccds/record.hpp"

namespace ccds {

enum class ScxState : word_t { kInProgress = 0, kCommitted = 1, kAborted = 2 };

// LLX/SCX/VLX over records of one node type, built from single-word CAS with
// cooperative helping. SCX-records live in per-process reusable descriptor
// slots; the info word of a frozen record holds the operation's handle with
// the low bit set, so handles and the dummy-descriptor pointer can share the
// word.
template <class Rec>
class ScxDomain {
 public:
  static constexpr unsigned kMaxV = 8;

  struct Snapshot {
    word_t info = 0;
    unsigned n = 0;
    std::array<word_t, Rec::kMaxMut> vals{};
    word_t operator[](unsigned i) const { return vals[i]; }
  };

  enum class LlxStatus { kSnapshot, kFail, kFinalized };

  // All records of this domain are created with this info value.
  word_t initial_info() const { return reinterpret_cast<word_t>(&dummy_); }

  LlxStatus llx(Rec* r, Snapshot* out) {
    CCDS_STEP();
    const bool marked1 = r->marked.load();
    CCDS_STEP();
    const word_t rinfo = r->info.load();
    const ScxState state = state_of(rinfo);
    CCDS_STEP();
    const bool marked2 = r->marked.load();
    if (state == ScxState::kAborted || (state == ScxState::kCommitted && !marked2)) {
      // r was not frozen at the state read; collect the fields and make sure
      // the same operation (if any) is still the last one to touch r.
      const unsigned n = r->mut_count;
      for (unsigned i = 0; i < n; ++i) {
        CCDS_STEP();
        out->vals[i] = r->mut[i].load();
      }
      CCDS_STEP();
      if (r->info.load() == rinfo) {
        out->info = rinfo;
        out->n = n;
        return LlxStatus::kSnapshot;
      }
    }
    const ScxState s2 = state_of(rinfo);
    if ((s2 == ScxState::kCommitted ||
         (s2 == ScxState::kInProgress && help(handle_of(rinfo)))) &&
        marked1) {
      return LlxStatus::kFinalized;
    }
    CCDS_STEP();
    const word_t cur = r->info.load();
    if (state_of(cur) == ScxState::kInProgress) help(handle_of(cur));
    return LlxStatus::kFail;
  }

  // One SCX operation: V as parallel (records, linked snapshots) arrays,
  // finalize_mask selecting R within V, and the field to change named by
  // (record index in V, mutable-field index).
  struct ScxOp {
    std::array<Rec*, kMaxV> v{};
    std::array<const Snapshot*, kMaxV> snap{};
    unsigned n = 0;
    unsigned finalize_mask = 0;
    unsigned fld_rec = 0;
    unsigned fld_index = 0;
    word_t new_value = 0;

    void add(Rec* r, const Snapshot* s, bool finalize = false) {
      assert(n < kMaxV);
      v[n] = r;
      snap[n] = s;
      if (finalize) finalize_mask |= 1u << n;
      ++n;
    }
    void set_field(unsigned rec_idx, unsigned field_idx, word_t nv) {
      fld_rec = rec_idx;
      fld_index = field_idx;
      new_value = nv;
    }
  };

  bool scx(const ScxOp& op) {
    assert(op.n >= 1 && op.fld_rec < op.n);
    attempts_.fetch_add(1);
    Imm d{};
    d.n = op.n;
    d.fld = (static_cast<word_t>(op.fld_rec) << 8) | op.fld_index;
    d.finalize_mask = op.finalize_mask;
    d.old_val = op.snap[op.fld_rec]->vals[op.fld_index];
    d.new_val = op.new_value;
    assert(d.new_val != d.old_val && "SCX must install a value fld never held");
    for (unsigned i = 0; i < op.n; ++i) {
      d.v[i] = op.v[i];
      d.info_fields[i] = op.snap[i]->info;
    }
    const DescriptorHandle h = pool_.create_new(d, mut_word(ScxState::kInProgress, false));
    const bool ok = help(h);
    if (ok) {
      successes_.fetch_add(1);
      finalized_.fetch_add(std::popcount(op.finalize_mask));
    }
    return ok;
  }

  // True iff no record in V changed since its linked llx, at the first info
  // recheck; the union of the linked snapshots is then a consistent cut.
  bool vlx(Rec* const* v, const Snapshot* const* snaps, unsigned n) {
    for (unsigned i = 0; i < n; ++i) {
      CCDS_STEP();
      if (v[i]->info.load() != snaps[i]->info) return false;
    }
    return true;
  }

  // Marked with a committed freezer: permanently removed from the structure.
  bool is_finalized(const Rec* r) const {
    if (!r->marked.load()) return false;
    return state_of(r->info.load()) == ScxState::kCommitted;
  }

  std::uint64_t finalized_count() const { return finalized_.load(); }
  std::uint64_t scx_attempts() const { return attempts_.load(); }
  std::uint64_t scx_successes() const { return successes_.load(); }
  unsigned descriptor_slots_used() const { return pool_.slots_used(); }

 private:
  struct Imm {
    word_t n = 0;
    word_t fld = 0;  // (record index << 8) | field index
    word_t finalize_mask = 0;
    word_t old_val = 0;
    word_t new_val = 0;
    Rec* v[kMaxV] = {};
    word_t info_fields[kMaxV] = {};
  };

  static constexpr MutField kStateField{0, 2};
  static constexpr MutField kAllFrozenField{2, 1};

  static constexpr word_t mut_word(ScxState s, bool all_frozen) {
    return static_cast<word_t>(s) | (static_cast<word_t>(all_frozen) << 2);
  }

  static bool is_handle(word_t info) { return (info & 1) != 0; }
  static DescriptorHandle handle_of(word_t info) { return {info & ~word_t{1}}; }

  ScxState state_of(word_t info) const {
    if (!is_handle(info)) return ScxState::kCommitted;  // the dummy descriptor
    // A stale read means the operation already terminated; Committed keeps
    // every caller on the same code path it would take for a finished SCX.
    return static_cast<ScxState>(pool_.read_field(
        handle_of(info), kStateField, static_cast<word_t>(ScxState::kCommitted)));
  }

  bool help(DescriptorHandle h) {
    const auto immo = pool_.read_immutables(h);
    if (!immo) return false;  // stale helper; its return value is never used
    const Imm& d = *immo;
    const word_t fdes = h.bits | 1;

    // Freeze all records in V, in order.
    for (unsigned i = 0; i < d.n; ++i) {
      Rec* r = d.v[i];
      CCDS_STEP();
      word_t seen = d.info_fields[i];
      if (!r->info.compare_exchange_strong(seen, fdes)) {
        if (seen != fdes) {
          // Frozen for another operation.
          if (pool_.read_field(h, kAllFrozenField, 1) == 1) return true;
          pool_.cas_field(h, kStateField, static_cast<word_t>(ScxState::kInProgress),
                          static_cast<word_t>(ScxState::kAborted));
          return false;
        }
      } else {
        CCDS_ON_INSTALL(r, fdes);
      }
    }

    pool_.write_field(h, kAllFrozenField, 1);
    for (unsigned i = 0; i < d.n; ++i) {
      if (d.finalize_mask & (word_t{1} << i)) {
        CCDS_STEP();
        d.v[i]->marked.store(true);
      }
    }
    CCDS_STEP();
    word_t expect = d.old_val;
    d.v[d.fld >> 8]->mut[d.fld & 0xff].compare_exchange_strong(expect, d.new_val);
    pool_.cas_field(h, kStateField, static_cast<word_t>(ScxState::kInProgress),
                    static_cast<word_t>(ScxState::kCommitted));
    return true;
  }

  // Shared pre-committed dummy descriptor; only its address matters, reads of
  // its state short-circuit in state_of.
  struct alignas(8) DummyDescriptor {
    ScxState state = ScxState::kCommitted;
    bool all_frozen = true;
  };

  DummyDescriptor dummy_;
  DescriptorPool<Imm, 3> pool_;
  std::atomic<std::uint64_t> finalized_{0};
  std::atomic<std::uint64_t> attempts_{0};
  std::atomic<std::uint64_t> successes_{0};
};

}  // namespace ccds
