#pragma once

#include <ucontext.h>

#include <cstdio>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "ccds/record.hpp"
#include "ccds/sync_core.hpp"

// Deterministic schedule enumeration over the real llx/scx/vlx code. Logical
// threads are ucontext fibers on one OS thread; every shared-memory step of
// sync-core yields to the scheduler, which explores interleavings by
// depth-first search over bounded-preemption schedules. Every produced
// history of {llx snapshots, llx finalized, successful scx, successful vlx}
// must linearize against the sequential record model, and every info-word
// install must be a value the record never held before.

namespace schedharness {

using namespace ccds;

constexpr unsigned kMaxRecs = 3;

struct SRec : Record<2> {
  explicit SRec(word_t info) : Record<2>(info, 2) {}
};

using Dom = ScxDomain<SRec>;
using Status = Dom::LlxStatus;

// --- history ----------------------------------------------------------

struct HOp {
  int thread;
  enum Kind { kLlxSnap, kLlxFinal, kScx, kVlx } kind;
  int target = -1;                                    // llx record
  std::array<word_t, 2> snap{};                       // llx snapshot
  std::vector<int> v;                                 // scx/vlx records
  std::vector<std::array<word_t, 2>> linked;          // their linked snapshots
  unsigned finalize_mask = 0;
  int fld_rec = -1;
  unsigned fld_idx = 0;
  word_t new_value = 0;
  std::uint64_t inv = 0, res = 0;
};

struct ModelRec {
  std::array<word_t, 2> vals{};
  bool finalized = false;
};

// Wing-Gong style search for a valid linearization.
bool linearize_from(std::vector<HOp>& ops, std::vector<bool>& done, unsigned remaining,
                    std::array<ModelRec, kMaxRecs>& model) {
  if (remaining == 0) return true;
  for (unsigned i = 0; i < ops.size(); ++i) {
    if (done[i]) continue;
    // minimality: no unlinearized op responded before this one was invoked
    bool minimal = true;
    for (unsigned j = 0; j < ops.size() && minimal; ++j) {
      if (!done[j] && ops[j].res < ops[i].inv) minimal = false;
    }
    if (!minimal) continue;

    const HOp& op = ops[i];
    auto saved = model;
    bool ok = true;
    switch (op.kind) {
      case HOp::kLlxSnap:
        ok = !model[op.target].finalized && model[op.target].vals == op.snap;
        break;
      case HOp::kLlxFinal:
        ok = model[op.target].finalized;
        break;
      case HOp::kScx:
      case HOp::kVlx:
        for (unsigned k = 0; k < op.v.size() && ok; ++k) {
          ok = !model[op.v[k]].finalized && model[op.v[k]].vals == op.linked[k];
        }
        if (ok && op.kind == HOp::kScx) {
          model[op.fld_rec].vals[op.fld_idx] = op.new_value;
          for (unsigned k = 0; k < op.v.size(); ++k) {
            if (op.finalize_mask & (1u << k)) model[op.v[k]].finalized = true;
          }
        }
        break;
    }
    if (ok) {
      done[i] = true;
      if (linearize_from(ops, done, remaining - 1, model)) return true;
      done[i] = false;
    }
    model = saved;
  }
  return false;
}

bool linearizable(std::vector<HOp> ops, const std::array<ModelRec, kMaxRecs>& initial) {
  std::vector<bool> done(ops.size(), false);
  auto model = initial;
  return linearize_from(ops, done, ops.size(), model);
}

// --- fiber scheduler ---------------------------------------------------

class Runner;
Runner* g_runner = nullptr;

class Runner {
 public:
  static constexpr unsigned kStack = 64 * 1024;
  using Task = std::function<void(int)>;

  explicit Runner(std::vector<Task> tasks, unsigned budget)
      : tasks_(std::move(tasks)), budget0_(budget) {}

  // Stacks are reused across the millions of replays an exploration runs.
  static char* pooled_stack(unsigned i) {
    static std::vector<std::unique_ptr<char[]>> pool;
    while (pool.size() <= i) pool.push_back(std::make_unique<char[]>(kStack));
    return pool[i].get();
  }

  // Runs one schedule following `prefix`; appends the option count of every
  // decision into `counts`. Returns false on step-budget blowup.
  bool run(const std::vector<unsigned>& prefix, std::vector<unsigned>& counts) {
    const unsigned n = tasks_.size();
    done_.assign(n, false);
    ctx_.resize(n);
    budget_ = budget0_;
    counts.clear();
    steps_ = 0;
    for (unsigned i = 0; i < n; ++i) {
      getcontext(&ctx_[i]);
      ctx_[i].uc_stack.ss_sp = pooled_stack(i);
      ctx_[i].uc_stack.ss_size = kStack;
      ctx_[i].uc_link = &main_;
      makecontext(&ctx_[i], reinterpret_cast<void (*)()>(&Runner::trampoline), 1, i);
    }
    g_runner = this;
    testhooks::g_step = [](void*) { g_runner->yield(); };
    current_ = -1;

    unsigned depth = 0;
    for (;;) {
      std::vector<int> options;
      const bool cur_ok = current_ >= 0 && !done_[current_];
      if (cur_ok) options.push_back(current_);
      for (unsigned i = 0; i < n; ++i) {
        if (done_[i] || static_cast<int>(i) == current_) continue;
        if (!cur_ok || budget_ > 0) options.push_back(i);
      }
      if (options.empty()) break;
      unsigned pick = depth < prefix.size() ? prefix[depth] : 0;
      if (pick >= options.size()) pick = 0;
      counts.push_back(options.size());
      ++depth;
      const int next = options[pick];
      if (cur_ok && next != current_) --budget_;
      current_ = next;
      if (++steps_ > 100000) return false;
      threads::set_id_override(current_);
      swapcontext(&main_, &ctx_[current_]);
    }
    testhooks::g_step = nullptr;
    threads::set_id_override(-1);
    return true;
  }

  void yield() {
    // back to the scheduler between shared-memory steps
    swapcontext(&ctx_[current_], &main_);
  }

 private:
  static void trampoline(unsigned idx) {
    Runner* r = g_runner;
    r->tasks_[idx](static_cast<int>(idx));
    r->done_[idx] = true;
    // uc_link returns to main_
  }

  std::vector<Task> tasks_;
  std::vector<ucontext_t> ctx_;
  std::vector<bool> done_;
  ucontext_t main_{};
  int current_ = -1;
  unsigned budget0_, budget_ = 0;
  std::uint64_t steps_ = 0;

 public:
  // advanced by the workload helpers for history timestamps
  std::uint64_t clock = 0;
};

// --- workload harness ---------------------------------------------------

struct World {
  std::unique_ptr<Dom> dom;
  std::vector<std::unique_ptr<SRec>> recs;
  std::array<ModelRec, kMaxRecs> initial{};
  std::vector<HOp> history;
  std::map<const void*, std::set<word_t>> installs;  // P1 tracking
  bool p1_ok = true;
  Runner* runner = nullptr;
  word_t fresh_counter = 1000;

  int index_of(const SRec* r) const {
    for (unsigned i = 0; i < recs.size(); ++i) {
      if (recs[i].get() == r) return static_cast<int>(i);
    }
    return -1;
  }

  void reset(unsigned nrecs, const std::vector<std::array<word_t, 2>>& vals) {
    dom = std::make_unique<Dom>();
    recs.clear();
    history.clear();
    installs.clear();
    p1_ok = true;
    fresh_counter = 1000;
    for (unsigned i = 0; i < nrecs; ++i) {
      recs.push_back(std::make_unique<SRec>(dom->initial_info()));
      recs[i]->mut[0].store(vals[i][0]);
      recs[i]->mut[1].store(vals[i][1]);
      initial[i].vals = vals[i];
      initial[i].finalized = false;
    }
    testhooks::g_install_arg = this;
    testhooks::g_on_install = [](void* arg, const void* rec, word_t info) {
      auto* w = static_cast<World*>(arg);
      if (!w->installs[rec].insert(info).second) w->p1_ok = false;
    };
  }

  // One SCX-Update: linked llx over `v`, then scx. Logs everything.
  bool update(int tid, const std::vector<int>& v, unsigned finalize_mask, int fld_rec,
              unsigned fld_idx, word_t new_value) {
    std::vector<Dom::Snapshot> snaps(v.size());
    std::vector<HOp> pending;
    for (unsigned i = 0; i < v.size(); ++i) {
      HOp op;
      op.thread = tid;
      op.target = v[i];
      op.inv = runner->clock++;
      Status st = dom->llx(recs[v[i]].get(), &snaps[i]);
      op.res = runner->clock++;
      if (st == Status::kSnapshot) {
        op.kind = HOp::kLlxSnap;
        op.snap = {snaps[i].vals[0], snaps[i].vals[1]};
        pending.push_back(op);
      } else if (st == Status::kFinalized) {
        op.kind = HOp::kLlxFinal;
        history.push_back(op);
        return false;
      } else {
        return false;  // Fail: not part of the linearized set
      }
    }
    for (auto& op : pending) history.push_back(op);

    Dom::ScxOp op;
    for (unsigned i = 0; i < v.size(); ++i) {
      op.add(recs[v[i]].get(), &snaps[i], (finalize_mask >> i) & 1);
    }
    unsigned fld_pos = 0;
    for (unsigned i = 0; i < v.size(); ++i) {
      if (v[i] == fld_rec) fld_pos = i;
    }
    op.set_field(fld_pos, fld_idx, new_value);

    HOp h;
    h.thread = tid;
    h.kind = HOp::kScx;
    h.v = v;
    for (auto& s : snaps) h.linked.push_back({s.vals[0], s.vals[1]});
    h.finalize_mask = finalize_mask;
    h.fld_rec = fld_rec;
    h.fld_idx = fld_idx;
    h.new_value = new_value;
    h.inv = runner->clock++;
    const bool ok = dom->scx(op);
    h.res = runner->clock++;
    if (ok) history.push_back(h);
    return ok;
  }

  int llx_only(int tid, int rec, Dom::Snapshot* out) {
    HOp op;
    op.thread = tid;
    op.target = rec;
    op.inv = runner->clock++;
    Status st = dom->llx(recs[rec].get(), out);
    op.res = runner->clock++;
    if (st == Status::kSnapshot) {
      op.kind = HOp::kLlxSnap;
      op.snap = {out->vals[0], out->vals[1]};
      history.push_back(op);
      return 0;
    }
    if (st == Status::kFinalized) {
      op.kind = HOp::kLlxFinal;
      history.push_back(op);
      return 2;
    }
    return 1;
  }

  void vlx_logged(int tid, const std::vector<int>& v,
                  const std::vector<Dom::Snapshot>& snaps) {
    std::vector<SRec*> rs;
    std::vector<const Dom::Snapshot*> sp;
    for (unsigned i = 0; i < v.size(); ++i) {
      rs.push_back(recs[v[i]].get());
      sp.push_back(&snaps[i]);
    }
    HOp h;
    h.thread = tid;
    h.kind = HOp::kVlx;
    h.v = v;
    for (auto& s : snaps) h.linked.push_back({s.vals[0], s.vals[1]});
    h.inv = runner->clock++;
    const bool ok = dom->vlx(rs.data(), sp.data(), v.size());
    h.res = runner->clock++;
    if (ok) history.push_back(h);
  }

  word_t fresh() { return ++fresh_counter; }
};

struct Scenario {
  const char* name;
  unsigned nrecs;
  std::vector<std::array<word_t, 2>> init;
  std::vector<Runner::Task> (*make_tasks)(World&);
  unsigned budget;
};

// Enumerates all bounded-preemption schedules of the scenario and checks
// every resulting history. Returns the number of schedules explored.
struct ExploreResult {
  std::uint64_t schedules = 0;
  bool ok = true;
  std::string message;
};

ExploreResult explore(const Scenario& sc, bool expect_no_finalized_llx_outside_r = false) {
  ExploreResult res;
  std::vector<unsigned> prefix;
  for (;;) {
    World world;
    world.reset(sc.nrecs, sc.init);
    Runner runner(sc.make_tasks(world), sc.budget);
    world.runner = &runner;
    std::vector<unsigned> counts;
    if (!runner.run(prefix, counts)) {
      res.ok = false;
      res.message = std::string(sc.name) + ": step budget exhausted";
      return res;
    }
    ++res.schedules;

    if (!world.p1_ok) {
      res.ok = false;
      res.message = std::string(sc.name) + ": an info field revisited an old value";
      return res;
    }
    if (!linearizable(world.history, world.initial)) {
      res.ok = false;
      res.message = std::string(sc.name) + ": non-linearizable history at schedule " +
                    std::to_string(res.schedules);
      return res;
    }
    if (expect_no_finalized_llx_outside_r) {
      for (auto& op : world.history) {
        if (op.kind == HOp::kLlxFinal) {
          res.ok = false;
          res.message = std::string(sc.name) + ": llx reported finalized outside R";
          return res;
        }
      }
    }

    // odometer over the decision option counts
    prefix.resize(counts.size());
    for (size_t i = prefix.size(); i-- > 0;) {
      if (prefix[i] + 1 < counts[i]) {
        ++prefix[i];
        prefix.resize(i + 1);
        goto next;
      }
    }
    break;
  next:;
  }
  return res;
}

}  // namespace schedharness
