#pragma once
#include <cstdio>

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "ccds/sync_core.hpp"

namespace ccds::tmpl {

// The generic tree-update driver: search phase, llx loop with conflict
// checks, one scx. Hooks supply the data-structure-specific policy:
//
//   struct Hooks {
//     using SearchResult = ...;           // the relevant part m
//     using Result = ...;
//     SearchResult search_phase();
//     Rec* root_of(const SearchResult&);  // n0
//     bool update_not_needed(const SearchResult&);
//     Result result_early(const SearchResult&);     // zero-llx return
//     bool conflict(unsigned i, Rec*, const Snapshot&, const SearchResult&);
//     bool condition(const Ctx&, const SearchResult&);  // true: stop llx loop
//     Rec* next_node(const Ctx&, const SearchResult&);  // non-nil child from a snapshot
//     bool update_not_needed(const Ctx&, const SearchResult&);
//     ScxOp scx_arguments(const Ctx&, const SearchResult&);
//     Result result(const Ctx&, const SearchResult&);
//   };
//
// Returns nullopt on Fail (caller retries). Shared memory is modified only by
// the single scx.

inline constexpr unsigned kMaxSigma = 8;

template <class Rec>
struct UpdateContext {
  using Snapshot = typename ScxDomain<Rec>::Snapshot;
  std::array<Rec*, kMaxSigma> nodes{};
  std::array<Snapshot, kMaxSigma> snaps{};
  unsigned count = 0;
};

template <class Rec, class Hooks>
std::optional<typename std::remove_reference_t<Hooks>::Result> run_update(ScxDomain<Rec>& dom,
                                                                          Hooks&& hooks) {
  using Status = typename ScxDomain<Rec>::LlxStatus;
  auto m = hooks.search_phase();
  if (hooks.update_not_needed(m)) return hooks.result_early(m);

  UpdateContext<Rec> ctx;
  Rec* next = hooks.root_of(m);
  for (;;) {
    assert(ctx.count < kMaxSigma);
    Rec* r = ctx.nodes[ctx.count] = next;
    Status st = dom.llx(r, &ctx.snaps[ctx.count]);
    if (st != Status::kSnapshot) return std::nullopt;
    if (hooks.conflict(ctx.count, r, ctx.snaps[ctx.count], m)) return std::nullopt;
    ++ctx.count;
    if (hooks.condition(ctx, m)) break;
    next = hooks.next_node(ctx, m);
  }
  if (hooks.update_not_needed(ctx, m)) return hooks.result(ctx, m);
  if (dom.scx(hooks.scx_arguments(ctx, m))) return hooks.result(ctx, m);
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Debug validation of scx arguments.

enum class Pc {
  kPc1,  // V is a subsequence of sigma
  kPc2,  // the record containing fld is in V
  kPc3,  // R is a subsequence of V
  kPc4,  // every node of m is in V
  kPc5,  // old = nil implies R and F_N empty
  kPc6,  // R empty and old != nil implies F_N = {old}
  kPc7,  // R nonempty implies G_R is a down-tree rooted at old with F_N = F_R
  kPc8,  // G_N is a nonempty down-tree rooted at new
  kPc9,  // every node of N is freshly allocated
  kPc10  // V ordered by the fixed (breadth-first) traversal
};

// Raw argument form so that malformed inputs (R not within V, stale new) can
// be expressed in tests; the structures' ScxOp encoding is converted to this.
template <class Rec>
struct RawScxArgs {
  using Snapshot = typename ScxDomain<Rec>::Snapshot;
  std::vector<Rec*> v;
  std::vector<const Snapshot*> snaps;  // parallel to v
  std::vector<Rec*> r;
  Rec* fld_record = nullptr;
  unsigned fld_index = 0;
  word_t new_value = 0;
  std::vector<Rec*> fresh;  // N, as declared by the operation
};

// Pure function of the captured snapshots: returns every violated
// postcondition. link_mask selects which mutable-field indices hold child
// links; when the changed field is not a link, the graph conditions
// degenerate to requiring both R and N to be empty (in-place scalar change).
template <class Rec>
std::vector<Pc> validate_scx_arguments(const RawScxArgs<Rec>& a,
                                       const UpdateContext<Rec>& sigma,
                                       const std::vector<Rec*>& m,
                                       word_t link_mask) {
  using Snapshot = typename ScxDomain<Rec>::Snapshot;
  std::vector<Pc> out;
  auto fail = [&](Pc pc) {
    if (std::find(out.begin(), out.end(), pc) == out.end()) out.push_back(pc);
  };

  // PC1: every record in V was llx'd (V's own order is PC10's business; the
  // llx order may differ, e.g. a sibling llx'd after a deeper node).
  for (Rec* r : a.v) {
    bool found = false;
    for (unsigned i = 0; i < sigma.count; ++i) found |= (sigma.nodes[i] == r);
    if (!found) {
      fail(Pc::kPc1);
      break;
    }
  }
  // PC2.
  if (std::find(a.v.begin(), a.v.end(), a.fld_record) == a.v.end()) fail(Pc::kPc2);
  // PC3: R subsequence of V.
  {
    unsigned j = 0;
    for (Rec* r : a.r) {
      while (j < a.v.size() && a.v[j] != r) ++j;
      if (j == a.v.size()) {
        fail(Pc::kPc3);
        break;
      }
      ++j;
    }
  }
  // PC4.
  for (Rec* r : m) {
    if (std::find(a.v.begin(), a.v.end(), r) == a.v.end()) {
      fail(Pc::kPc4);
      break;
    }
  }

  // Snapshot lookup within sigma (last llx of each record).
  auto snap_of = [&](Rec* r) -> const Snapshot* {
    for (unsigned i = sigma.count; i-- > 0;) {
      if (sigma.nodes[i] == r) return &sigma.snaps[i];
    }
    return nullptr;
  };

  const bool fld_is_link = (link_mask >> a.fld_index) & 1;
  word_t old_val = 0;
  if (const Snapshot* s = snap_of(a.fld_record)) old_val = s->vals[a.fld_index];

  const std::set<Rec*> nset(a.fresh.begin(), a.fresh.end());

  // G_N: edges are the link fields of fresh nodes as initialized.
  std::set<Rec*> f_n;
  std::map<Rec*, int> indeg;
  bool gn_ok = true;
  for (Rec* f : a.fresh) {
    for (unsigned i = 0; i < f->mut_count; ++i) {
      if (!((link_mask >> i) & 1)) continue;
      auto* c = reinterpret_cast<Rec*>(f->read_mut(i));
      if (!c) continue;
      if (nset.count(c)) {
        ++indeg[c];
      } else {
        f_n.insert(c);
      }
    }
  }

  if (!fld_is_link) {
    // Pure scalar replacement: nothing may be added or removed.
    if (!a.r.empty() || !a.fresh.empty()) fail(Pc::kPc5);
    return out;
  }

  auto* new_rec = reinterpret_cast<Rec*>(a.new_value);

  // PC8/PC9: G_N nonempty down-tree rooted at new, all freshly allocated.
  if (a.fresh.empty() || !nset.count(new_rec)) {
    fail(Pc::kPc8);
    gn_ok = false;
  } else {
    for (Rec* f : a.fresh) {
      int d = indeg.count(f) ? indeg[f] : 0;
      if (f == new_rec ? d != 0 : d != 1) gn_ok = false;
    }
    if (!gn_ok) fail(Pc::kPc8);
  }
  for (Rec* f : a.fresh) {
    bool in_sigma = false;
    for (unsigned i = 0; i < sigma.count; ++i) in_sigma |= (sigma.nodes[i] == f);
    if (in_sigma || std::find(m.begin(), m.end(), f) != m.end()) {
      fail(Pc::kPc9);
      break;
    }
  }

  // PC5/PC6/PC7.
  if (old_val == 0) {
    if (!a.r.empty() || !f_n.empty()) fail(Pc::kPc5);
  } else if (a.r.empty()) {
    if (!(f_n.size() == 1 && *f_n.begin() == reinterpret_cast<Rec*>(old_val))) fail(Pc::kPc6);
  } else {
    // G_R from the captured snapshots of the records in R.
    std::set<Rec*> rset(a.r.begin(), a.r.end());
    std::set<Rec*> f_r;
    std::map<Rec*, int> rdeg;
    bool gr_ok = true;
    for (Rec* r : a.r) {
      const Snapshot* s = snap_of(r);
      if (!s) {
        gr_ok = false;
        break;
      }
      for (unsigned i = 0; i < s->n; ++i) {
        if (!((link_mask >> i) & 1)) continue;
        auto* c = reinterpret_cast<Rec*>(s->vals[i]);
        if (!c) continue;
        if (rset.count(c)) {
          ++rdeg[c];
        } else {
          f_r.insert(c);
        }
      }
    }
    auto* old_rec = reinterpret_cast<Rec*>(old_val);
    if (gr_ok) {
      if (!rset.count(old_rec)) {
        gr_ok = false;
      } else {
        for (Rec* r : a.r) {
          int d = rdeg.count(r) ? rdeg[r] : 0;
          if (r == old_rec ? d != 0 : d != 1) gr_ok = false;
        }
      }
    }
    if (!gr_ok || f_n != f_r) fail(Pc::kPc7);
  }

  // PC10: V consistent with a breadth-first (top-down, left-to-right)
  // traversal of G_sigma.
  {
    std::map<Rec*, unsigned> rank;
    std::vector<Rec*> queue{sigma.count ? sigma.nodes[0] : nullptr};
    unsigned next_rank = 0;
    for (unsigned qi = 0; qi < queue.size(); ++qi) {
      Rec* r = queue[qi];
      if (!r || rank.count(r)) continue;
      rank[r] = next_rank++;
      if (const Snapshot* s = snap_of(r)) {
        for (unsigned i = 0; i < s->n; ++i) {
          if (!((link_mask >> i) & 1)) continue;
          if (auto* c = reinterpret_cast<Rec*>(s->vals[i])) queue.push_back(c);
        }
      }
    }
    unsigned prev = 0;
    bool first = true;
    for (Rec* r : a.v) {
      auto it = rank.find(r);
      if (it == rank.end()) {
        fail(Pc::kPc10);
        break;
      }
      if (!first && it->second <= prev) {
        fail(Pc::kPc10);
        break;
      }
      prev = it->second;
      first = false;
    }
  }
  return out;
}

// Converts a domain ScxOp plus the op's sigma records into the raw form and
// asserts that no postcondition is violated. Compiled away unless
// CCDS_VALIDATE_SCX is defined.
template <class Rec>
void assert_scx_valid(const typename ScxDomain<Rec>::ScxOp& op,
                      const UpdateContext<Rec>& sigma, const std::vector<Rec*>& m,
                      std::initializer_list<Rec*> fresh, word_t link_mask) {
  RawScxArgs<Rec> raw;
  for (unsigned i = 0; i < op.n; ++i) {
    raw.v.push_back(op.v[i]);
    raw.snaps.push_back(op.snap[i]);
    if (op.finalize_mask & (1u << i)) raw.r.push_back(op.v[i]);
  }
  raw.fld_record = op.v[op.fld_rec];
  raw.fld_index = op.fld_index;
  raw.new_value = op.new_value;
  raw.fresh.assign(fresh.begin(), fresh.end());
  auto viol = validate_scx_arguments<Rec>(raw, sigma, m, link_mask);
#if !defined(NDEBUG)
  if (!viol.empty()) {
    for (Pc pc : viol) std::fprintf(stderr, "violated PC%d\n", static_cast<int>(pc) + 1);
  }
#endif
  assert(viol.empty() && "scx arguments violate a template postcondition");
  (void)viol;
}

}  // namespace ccds::tmpl

#if defined(CCDS_VALIDATE_SCX)
#define CCDS_CHECK_SCX(Rec, op, sigma, m, fresh, link_mask) \
  ::ccds::tmpl::assert_scx_valid<Rec>((op), (sigma), (m), (fresh), (link_mask))
#else
#define CCDS_CHECK_SCX(Rec, op, sigma, m, fresh, link_mask) ((void)0)
#endif
