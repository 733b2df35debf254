#pragma once

#include <cstdint>

#include "ccds/common.hpp"

namespace ccds::reclaim {

// Epoch-based deferred reclamation. Finalized nodes may still be traversed by
// in-flight searches, so unlinked nodes are retired to a per-thread limbo bin
// and freed only once the global epoch has advanced at least two steps past
// the retirement epoch. The scheme is blocking in the sense that a stalled
// in-guard thread stalls reclamation (never operation progress).

void set_enabled(bool on);
bool enabled();

// Number of retirements between automatic epoch-advance attempts.
// Initialized from the CCDS_EPOCH_FREQ environment variable when set.
void set_advance_frequency(unsigned n);
unsigned advance_frequency();

void guard_enter();
void guard_exit();

struct Guard {
  Guard() { guard_enter(); }
  ~Guard() { guard_exit(); }
  Guard(const Guard&) = delete;
  Guard& operator=(const Guard&) = delete;
};

void retire(void* p, void (*deleter)(void*));

template <class T>
void retire(T* p) {
  retire(p, [](void* q) { delete static_cast<T*>(q); });
}

// Advances the global epoch iff every in-guard thread has announced the
// current epoch. Returns true when the epoch moved.
bool try_advance();

std::uint64_t current_epoch();
std::uint64_t retired_count();
std::uint64_t freed_count();

// Frees every limbo bin unconditionally. Caller guarantees quiescence.
void flush_all();

// Test aid: forget all counters and pending bins (leaking them deliberately;
// used by leak-accounting tests that run with reclamation disabled).
void reset_counters();

}  // namespace ccds::reclaim
