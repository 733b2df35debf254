#include <mutex>

#include "ccds/common.hpp"

namespace ccds::threads {

namespace {
std::mutex g_mu;
bool g_used[kMaxThreads];
unsigned g_high_water = 0;

thread_local int t_id = -1;
thread_local int t_override = -1;
}  // namespace

int acquire_id() {
  std::lock_guard<std::mutex> lk(g_mu);
  for (unsigned i = 0; i < kMaxThreads; ++i) {
    if (!g_used[i]) {
      g_used[i] = true;
      if (i + 1 > g_high_water) g_high_water = i + 1;
      return static_cast<int>(i);
    }
  }
  std::abort();  // more than kMaxThreads concurrent threads
}

void release_id(int id) {
  std::lock_guard<std::mutex> lk(g_mu);
  g_used[id] = false;
}

Registration::Registration() : id(acquire_id()) { t_id = id; }

Registration::~Registration() {
  release_id(id);
  t_id = -1;
}

int id() {
  if (t_override >= 0) return t_override;
  if (t_id < 0) {
    static thread_local Registration reg;
    t_id = reg.id;
  }
  return t_id;
}

void set_id_override(int id) { t_override = id; }

unsigned max_id_in_use() {
  std::lock_guard<std::mutex> lk(g_mu);
  return g_high_water;
}

}  // namespace ccds::threads
