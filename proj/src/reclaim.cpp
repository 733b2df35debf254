#include "ccds/reclaim.hpp"

#include <atomic>
#include <cstdlib>
#include <vector>

namespace ccds::reclaim {

namespace {

struct RetiredNode {
  void* ptr;
  void (*deleter)(void*);
};

struct Bin {
  std::uint64_t epoch = 0;
  std::vector<RetiredNode> nodes;
};

struct alignas(128) ThreadSlot {
  // (epoch << 1) | active
  std::atomic<std::uint64_t> announce{0};
  Bin bins[3];
  std::uint64_t since_advance = 0;
};

std::atomic<std::uint64_t> g_epoch{2};
ThreadSlot g_slots[kMaxThreads];
thread_local int t_guard_depth = 0;

std::atomic<bool> g_enabled{true};
std::atomic<unsigned> g_frequency{[] {
  if (const char* e = std::getenv("CCDS_EPOCH_FREQ")) {
    long v = std::atol(e);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return 64u;
}()};

std::atomic<std::uint64_t> g_retired{0};
std::atomic<std::uint64_t> g_freed{0};

void free_bin(Bin& b) {
  for (auto& n : b.nodes) n.deleter(n.ptr);
  g_freed.fetch_add(b.nodes.size());
  b.nodes.clear();
}

}  // namespace

void set_enabled(bool on) { g_enabled.store(on); }
bool enabled() { return g_enabled.load(); }

void set_advance_frequency(unsigned n) { g_frequency.store(n ? n : 1); }
unsigned advance_frequency() { return g_frequency.load(); }

void guard_enter() {
  if (t_guard_depth++ == 0) {
    ThreadSlot& s = g_slots[threads::id()];
    s.announce.store((g_epoch.load() << 1) | 1);
  }
}

void guard_exit() {
  assert(t_guard_depth > 0 && "unbalanced guard_exit");
  if (--t_guard_depth == 0) {
    g_slots[threads::id()].announce.store(0);
  }
}

bool try_advance() {
  std::uint64_t e = g_epoch.load();
  unsigned n = threads::max_id_in_use();
  for (unsigned i = 0; i < n; ++i) {
    std::uint64_t a = g_slots[i].announce.load();
    if ((a & 1) && (a >> 1) != e) return false;
  }
  return g_epoch.compare_exchange_strong(e, e + 1);
}

void retire(void* p, void (*deleter)(void*)) {
  g_retired.fetch_add(1);
  ThreadSlot& s = g_slots[threads::id()];
  if (!g_enabled.load()) {
    // Nothing is freed while disabled; flush_all picks these up later.
    s.bins[0].nodes.push_back({p, deleter});
    return;
  }
  std::uint64_t e = g_epoch.load();
  Bin& b = s.bins[e % 3];
  if (b.epoch != e) {
    // Rotating into this bin means its contents were retired at least three
    // epochs ago; two full advances have happened since, so they are free.
    free_bin(b);
    b.epoch = e;
  }
  b.nodes.push_back({p, deleter});

  if (++s.since_advance >= g_frequency.load()) {
    s.since_advance = 0;
    try_advance();
  }
}

std::uint64_t current_epoch() { return g_epoch.load(); }
std::uint64_t retired_count() { return g_retired.load(); }
std::uint64_t freed_count() { return g_freed.load(); }

void flush_all() {
  for (auto& s : g_slots) {
    for (auto& b : s.bins) free_bin(b);
  }
}

void reset_counters() {
  for (auto& s : g_slots) {
    for (auto& b : s.bins) {
      b.nodes.clear();
      b.epoch = 0;
    }
    s.since_advance = 0;
  }
  g_retired.store(0);
  g_freed.store(0);
}

}  // namespace ccds::reclaim
