#pragma once

#include <atomic>
#include <cassert>
#include <cstdint>
#include <cstdlib>
#include <limits>

namespace ccds {

using word_t = std::uint64_t;
using key_type = std::int64_t;
using value_type = std::uint64_t;

// Reserved key values acting as the +/- infinity sentinels.
inline constexpr key_type kKeyInf = std::numeric_limits<key_type>::max();
inline constexpr key_type kKeyNegInf = std::numeric_limits<key_type>::min();

inline constexpr unsigned kMaxThreads = 64;

// Thread identity. Slots, epochs and descriptor pools are all indexed by a
// small dense id. Ids are assigned on first use and recycled when a thread
// deregisters (worker pools in the benchmark reuse them).
namespace threads {

int acquire_id();
void release_id(int id);

struct Registration {
  Registration();
  ~Registration();
  int id;
};

// Dense id of the calling thread, registering it if needed.
int id();

unsigned max_id_in_use();

// Logical-thread override for schedulers that multiplex several logical
// threads onto one OS thread (the deterministic test scheduler). -1 clears.
void set_id_override(int id);

}  // namespace threads

struct TreeStats {
  std::uint64_t size = 0;     // number of keys
  std::uint64_t height = 0;   // edges on the longest root-to-leaf path
  double avg_leaf_depth = 0;  // mean leaf depth in edges
  std::uint64_t violations = 0;
};

#if defined(CCDS_TEST_HOOKS)
// Test-only scheduling hook: the schedule-enumeration tests install a handler
// that is invoked before every shared-memory step of sync-core, letting a
// deterministic scheduler pick interleavings.
namespace testhooks {
using StepFn = void (*)(void*);
inline StepFn g_step = nullptr;
inline void* g_step_arg = nullptr;
inline void step() {
  if (g_step) g_step(g_step_arg);
}
// History tracking for the freeze-freshness property: the harness records
// every value successfully installed into an info field.
using InstallFn = void (*)(void*, const void* rec, word_t info);
inline InstallFn g_on_install = nullptr;
inline void* g_install_arg = nullptr;
inline void on_install(const void* rec, word_t info) {
  if (g_on_install) g_on_install(g_install_arg, rec, info);
}
}  // namespace testhooks
#define CCDS_STEP() ::ccds::testhooks::step()
#define CCDS_ON_INSTALL(rec, info) ::ccds::testhooks::on_install((rec), (info))
#else
#define CCDS_STEP() ((void)0)
#define CCDS_ON_INSTALL(rec, info) ((void)0)
#endif

}  // namespace ccds
