#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "ccds/chromatic.hpp"  // ValidationReport
#include "ccds/reclaim.hpp"
#include "ccds/template_update.hpp"

namespace ccds {

// Lock-free relaxed AVL tree. Each node carries an integer tag and a stored
// relaxed balance factor; relaxed heights are heights computed with tags
// added in, and the balance invariant rbf in {-1,0,1} is maintained against
// relaxed heights. Nonzero tags are the violations: updates create them at
// the leaves and rebalancing steps eliminate them or move them upward, each
// step preserving the relaxed height of the subtree it replaces (except at
// the root, whose tag is pinned to zero).
struct RavlNode : Record<2> {
  static constexpr unsigned kLeft = 0;
  static constexpr unsigned kRight = 1;

  const key_type key;
  const value_type value;
  const std::int32_t tag;
  const std::int8_t rbf;

  RavlNode(word_t info, key_type k, value_type v, std::int32_t t, std::int8_t b, RavlNode* l,
           RavlNode* r)
      : Record<2>(info, 2), key(k), value(v), tag(t), rbf(b) {
    mut[kLeft].store(reinterpret_cast<word_t>(l));
    mut[kRight].store(reinterpret_cast<word_t>(r));
  }

  RavlNode* left() const { return reinterpret_cast<RavlNode*>(mut[kLeft].load()); }
  RavlNode* right() const { return reinterpret_cast<RavlNode*>(mut[kRight].load()); }
  bool is_leaf() const { return left() == nullptr; }
};

enum class RavlStep {
  kR3,
  kR3_5,
  kR3_6,
  kR3_7,
  kR3_8,
  kR4,
  kR4_9,
  kR4_10,
  kR4_11,
  kR4_12,
  kR4_13,
  kFixSiblingFirst,  // positive tree defers to a negative violation at the sibling
};

class RavlTree {
 public:
  using Domain = ScxDomain<RavlNode>;
  using Snapshot = Domain::Snapshot;
  using LlxStatus = Domain::LlxStatus;

  static constexpr word_t kLinkMask = 0b11;

  explicit RavlTree(unsigned violation_threshold = 1) : k_(violation_threshold) {
    assert(k_ >= 1);
    auto* leaf = mk(kKeyInf, 0, 0, 0, nullptr, nullptr);
    entry_ = mk(kKeyInf, 0, 0, 0, leaf, nullptr);
  }

  ~RavlTree() { free_subtree(entry_); }

  std::optional<value_type> get(key_type key) const {
    assert(key < kKeyInf);
    reclaim::Guard g;
    SearchRes s = search(key);
    if (s.l->key == key) return s.l->value;
    return std::nullopt;
  }

  std::optional<value_type> insert(key_type key, value_type value) {
    bool created = false;
    auto old = insert_deferred(key, value, &created);
    if (created) cleanup(key);
    return old;
  }

  std::optional<value_type> erase(key_type key) {
    bool created = false;
    auto old = erase_deferred(key, &created);
    if (created) cleanup(key);
    return old;
  }

  std::optional<value_type> insert_deferred(key_type key, value_type value, bool* created_violation) {
    assert(key < kKeyInf);
    reclaim::Guard g;
    for (;;) {
      auto r = try_insert(key, value);
      if (r) {
        *created_violation = r->first;
        return r->second;
      }
    }
  }

  std::optional<value_type> erase_deferred(key_type key, bool* created_violation) {
    assert(key < kKeyInf);
    reclaim::Guard g;
    for (;;) {
      auto r = try_delete(key);
      if (r) {
        *created_violation = r->first;
        return r->second;
      }
    }
  }

  void cleanup(key_type key) {
    reclaim::Guard g;
    for (;;) {
      RavlNode* gp = nullptr;
      RavlNode* p = nullptr;
      RavlNode* l = entry_;
      // Position of the first violation on the path; rebalancing is applied
      // there once the threshold is met, so its ancestors are violation-free.
      RavlNode *fp_gp = nullptr, *fp_p = nullptr, *fp_l = nullptr;
      unsigned seen = 0;
      for (;;) {
        if (is_violation(l)) {
          if (++seen == 1) {
            fp_gp = gp;
            fp_p = p;
            fp_l = l;
          }
          if (seen >= k_) break;
        }
        if (l->is_leaf()) break;
        gp = p;
        p = l;
        CCDS_STEP();
        l = key < l->key ? l->left() : l->right();
      }
      if (seen < k_) return;
      try_rebalance(fp_gp, fp_p, fp_l);
    }
  }

  // Published decision tree over relative balance factors and tags; inputs
  // are oriented so that the violation at v is a "left" violation.
  static RavlStep choose_step(bool negative, int b_u, int b_v, int w_tag, int b_w, int x_tag) {
    if (negative) {
      if (b_u <= 0) return RavlStep::kR3;
      if (b_v >= 0) return RavlStep::kR3_5;
      if (w_tag > 0) return RavlStep::kR3_6;
      if (w_tag == 0) return RavlStep::kR3_7;
      return RavlStep::kR3_8;
    }
    if (b_u >= 0) return RavlStep::kR4;
    if (w_tag > 0) return RavlStep::kR4_9;
    if (w_tag < 0) return RavlStep::kFixSiblingFirst;
    if (b_w <= 0) return RavlStep::kR4_10;
    if (x_tag > 0) return RavlStep::kR4_11;
    if (x_tag == 0) return RavlStep::kR4_12;
    return RavlStep::kR4_13;
  }

  // --- validation & stats ---

  ValidationReport validate(std::uint64_t in_flight = 0, bool quiescent = true) const {
    ValidationReport rep;
    RavlNode* root = ravl_root();
    if (entry_->key != kKeyInf || entry_->tag != 0) rep.errors.push_back("bad entry sentinel");
    if (!root) return rep;
    if (root->tag != 0) rep.errors.push_back("root tag != 0");

    check_bst(root, std::nullopt, std::nullopt, rep);
    check_constraint3(entry_, rep);
    check_balance(root, rep);

    const std::uint64_t viol = count_violations();
    const std::uint64_t n = size();
    const double bound = 1.44 * std::log2(static_cast<double>(n) + 2.0) + 2.0;
    if (quiescent && k_ == 1) {
      if (viol != 0) rep.errors.push_back("violations present at quiescence");
      if (!all_tags_zero(root)) rep.errors.push_back("nonzero tag at quiescence");
      if (!is_strict_avl(root)) rep.errors.push_back("not an AVL tree");
      if (static_cast<double>(height_of(root)) > bound) {
        rep.errors.push_back("height exceeds the AVL bound");
      }
    } else {
      if (viol > in_flight + (k_ - 1) * count_leaves(root)) {
        rep.errors.push_back("violation count exceeds in-flight bound");
      }
      // Every retained violation unit moves the height by at most two.
      if (static_cast<double>(height_of(root)) >
          bound + 2.0 * static_cast<double>(in_flight + viol)) {
        rep.errors.push_back("height exceeds the relaxed bound");
      }
    }
    return rep;
  }

  TreeStats stats() const {
    TreeStats st;
    st.violations = count_violations();
    RavlNode* root = ravl_root();
    if (!root) return st;
    std::uint64_t leaves = 0, depth_sum = 0;
    leaf_depths(root, 0, leaves, depth_sum, st.height);
    st.size = size();
    st.avg_leaf_depth = leaves ? static_cast<double>(depth_sum) / leaves : 0.0;
    return st;
  }

  std::uint64_t size() const {
    RavlNode* root = ravl_root();
    return root ? count_keys(root) : 0;
  }

  long long key_sum() const {
    RavlNode* root = ravl_root();
    return root ? sum_keys(root) : 0;
  }

  // Violation units: internal tag<0 counts one, any tag>0 counts tag.
  std::uint64_t count_violations() const {
    RavlNode* root = ravl_root();
    return root ? violations_in(root) : 0;
  }

  Domain& domain() { return dom_; }
  unsigned threshold() const { return k_; }

  struct TestAccess;

 private:
  struct SearchRes {
    RavlNode* gp;
    RavlNode* p;
    RavlNode* l;
  };

  struct LlxCtx {
    tmpl::UpdateContext<RavlNode> s;
    const Snapshot* llx(Domain& d, RavlNode* r) {
      assert(s.count < tmpl::kMaxSigma);
      if (d.llx(r, &s.snaps[s.count]) != LlxStatus::kSnapshot) return nullptr;
      s.nodes[s.count] = r;
      return &s.snaps[s.count++];
    }
  };

  static RavlNode* sl(const Snapshot& s) {
    return reinterpret_cast<RavlNode*>(s.vals[RavlNode::kLeft]);
  }
  static RavlNode* sr(const Snapshot& s) {
    return reinterpret_cast<RavlNode*>(s.vals[RavlNode::kRight]);
  }

  RavlNode* mk(key_type k, value_type v, std::int32_t tag, std::int8_t rbf, RavlNode* l, RavlNode* r) {
    return new RavlNode(dom_.initial_info(), k, v, tag, rbf, l, r);
  }

  static bool is_violation(const RavlNode* n) {
    return n->is_leaf() ? n->tag > 0 : n->tag != 0;
  }

  SearchRes search(key_type key) const {
    SearchRes r{nullptr, entry_, entry_->left()};
    while (!r.l->is_leaf()) {
      r.gp = r.p;
      r.p = r.l;
      CCDS_STEP();
      r.l = key < r.l->key ? r.l->left() : r.l->right();
    }
    return r;
  }

  std::optional<std::pair<bool, std::optional<value_type>>> try_insert(key_type key, value_type value) {
    SearchRes res = search(key);
    RavlNode* p = res.p;
    RavlNode* l = res.l;
    LlxCtx ctx;
    const Snapshot* sp = ctx.llx(dom_, p);
    if (!sp) return std::nullopt;
    if (sl(*sp) != l && sr(*sp) != l) return std::nullopt;
    const Snapshot* slf = ctx.llx(dom_, l);
    if (!slf) return std::nullopt;

    RavlNode* repl;
    std::optional<value_type> old;
    const bool replace = l->key == key;
    if (replace) {
      old = l->value;
      repl = mk(key, value, l->tag, 0, nullptr, nullptr);  // same tag
    } else {
      // Both leaves carry tag zero; the routing node's tag l.tag - 1 keeps
      // the relaxed height of the replaced position (pinned at the root).
      auto* new_leaf = mk(key, value, 0, 0, nullptr, nullptr);
      auto* lcopy = mk(l->key, l->value, 0, 0, nullptr, nullptr);
      const std::int32_t tag = p->key == kKeyInf ? 0 : l->tag - 1;
      repl = key < l->key ? mk(l->key, 0, tag, 0, new_leaf, lcopy)
                          : mk(key, 0, tag, 0, lcopy, new_leaf);
    }

    typename Domain::ScxOp op;
    op.add(p, sp);
    op.add(l, slf, /*finalize=*/true);
    op.set_field(0, sl(*sp) == l ? RavlNode::kLeft : RavlNode::kRight,
                 reinterpret_cast<word_t>(repl));
    const bool ok = replace ? commit(op, ctx, {repl})
                            : commit(op, ctx, {repl, repl->left(), repl->right()});
    if (!ok) return std::nullopt;
    return std::make_pair(is_violation(repl), old);
  }

  std::optional<std::pair<bool, std::optional<value_type>>> try_delete(key_type key) {
    SearchRes res = search(key);
    RavlNode* gp = res.gp;
    RavlNode* p = res.p;
    RavlNode* l = res.l;
    if (gp == nullptr) return std::make_pair(false, std::optional<value_type>{});
    if (l->key != key) return std::make_pair(false, std::optional<value_type>{});

    LlxCtx ctx;
    const Snapshot* sgp = ctx.llx(dom_, gp);
    if (!sgp) return std::nullopt;
    if (sl(*sgp) != p && sr(*sgp) != p) return std::nullopt;
    const Snapshot* sp = ctx.llx(dom_, p);
    if (!sp) return std::nullopt;
    if (sl(*sp) != l && sr(*sp) != l) return std::nullopt;
    const Snapshot* slf = ctx.llx(dom_, l);
    if (!slf) return std::nullopt;
    const bool l_left = sl(*sp) == l;
    RavlNode* s = l_left ? sr(*sp) : sl(*sp);
    const Snapshot* ss = ctx.llx(dom_, s);
    if (!ss) return std::nullopt;

    // The copy of s inherits p's tag plus one for the lost level, plus one
    // more when the deleted leaf's side was the strictly taller side.
    std::int32_t tag;
    if (p->key == kKeyInf || gp->key == kKeyInf) {
      tag = 0;  // the copy lands in a root or sentinel position
    } else {
      const int taller_l = l_left ? (p->rbf == 1 ? 1 : 0) : (p->rbf == -1 ? 1 : 0);
      tag = s->tag + p->tag + 1 + taller_l;
    }
    auto* repl = mk(s->key, s->value, tag, s->rbf, sl(*ss), sr(*ss));

    typename Domain::ScxOp op;
    op.add(gp, sgp);
    op.add(p, sp, true);
    if (l_left) {
      op.add(l, slf, true);
      op.add(s, ss, true);
    } else {
      op.add(s, ss, true);
      op.add(l, slf, true);
    }
    op.set_field(0, sl(*sgp) == p ? RavlNode::kLeft : RavlNode::kRight,
                 reinterpret_cast<word_t>(repl));
    if (!commit(op, ctx, {repl})) return std::nullopt;
    return std::make_pair(is_violation(repl), std::optional<value_type>{l->value});
  }

  // One rebalancing attempt at the violation at v (child of u, grandchild of
  // gp); silent return on interference.
  void try_rebalance(RavlNode* gp, RavlNode* u, RavlNode* v) {
    assert(gp && u);
    LlxCtx ctx;
    const Snapshot* sgp = ctx.llx(dom_, gp);
    if (!sgp) return;
    if (sl(*sgp) != u && sr(*sgp) != u) return;
    const Snapshot* su = ctx.llx(dom_, u);
    if (!su) return;
    if (sl(*su) != v && sr(*su) != v) return;
    bool v_left = sl(*su) == v;

    // The first violation on the path has violation-free ancestors.
    assert(u->tag == 0);

    bool negative = v->tag < 0;
    if (!negative) {
      // Positive violation: a negative violation at the sibling is fixed
      // first when present.
      RavlNode* w = v_left ? sr(*su) : sl(*su);
      if (!w->is_leaf() && w->tag < 0) {
        v = w;
        v_left = !v_left;
        negative = true;
      }
    }

    const int b_u = rel(u, v_left);
    if (negative) {
      apply_negative(ctx, gp, sgp, u, su, v, v_left, b_u);
    } else {
      apply_positive(ctx, gp, sgp, u, su, v, v_left, b_u);
    }
  }

  // Relative balance factor: positive means the v side is taller.
  static int rel(const RavlNode* n, bool v_left) { return v_left ? n->rbf : -n->rbf; }

  // Builds a node whose inner child sits on the violation's side.
  RavlNode* mks(key_type k, value_type val, std::int32_t tag, int b_rel, bool v_left, RavlNode* in,
                RavlNode* out) {
    return v_left ? mk(k, val, tag, static_cast<std::int8_t>(b_rel), in, out)
                  : mk(k, val, tag, static_cast<std::int8_t>(-b_rel), out, in);
  }

  std::int32_t pin_tag(const RavlNode* parent, const RavlNode* top, std::int32_t tag) {
    return (parent->key == kKeyInf || top->key == kKeyInf) ? 0 : tag;
  }

  void apply_negative(LlxCtx& ctx, RavlNode* gp, const Snapshot* sgp, RavlNode* u,
                      const Snapshot* su, RavlNode* v, bool v_left, int b_u) {
    const Snapshot* sv = ctx.llx(dom_, v);
    if (!sv) return;
    RavlNode* v_in = v_left ? sl(*sv) : sr(*sv);
    RavlNode* v_out = v_left ? sr(*sv) : sl(*sv);
    RavlNode* z = v_left ? sr(*su) : sl(*su);
    const int b_v = rel(v, v_left);

    const RavlStep step = choose_step(true, b_u, b_v, v_out->tag, 0, 0);
    switch (step) {
      case RavlStep::kR3: {
        auto* nv = mk(v->key, v->value, 0, v->rbf, sl(*sv), sr(*sv));
        auto* nu = mks(u->key, u->value, pin_tag(gp, u, b_u == 0 ? u->tag - 1 : u->tag),
                       b_u + 1, v_left, nv, z);
        replace_u(ctx, gp, sgp, u, su, {v, sv}, nullptr, nullptr, nu, {nu, nv});
        return;
      }
      case RavlStep::kR3_5: {
        auto* nu = mks(u->key, u->value, 0, 1 - b_v, v_left, v_out, z);
        auto* nv = mks(v->key, v->value, pin_tag(gp, u, b_v == 0 ? u->tag - 1 : u->tag),
                       b_v - 1, v_left, v_in, nu);
        replace_u(ctx, gp, sgp, u, su, {v, sv}, nullptr, nullptr, nv, {nv, nu});
        return;
      }
      default:
        break;
    }

    // The double-rotation family pivots on v's outer child.
    RavlNode* w = v_out;
    const Snapshot* sw = ctx.llx(dom_, w);
    if (!sw) return;
    RavlNode* w_in = v_left ? sl(*sw) : sr(*sw);
    RavlNode* w_out = v_left ? sr(*sw) : sl(*sw);
    const int b_w = rel(w, v_left);

    switch (step) {
      case RavlStep::kR3_6: {
        auto* nw = mk(w->key, w->value, w->tag - 1, w->rbf, sl(*sw), sr(*sw));
        auto* nv = mks(v->key, v->value, 0, 0, v_left, v_in, nw);
        // u keeps its place; only its link to v swings.
        typename Domain::ScxOp op;
        op.add(u, su);
        op.add(v, sv, true);
        op.add(w, sw, true);
        op.set_field(0, v_left ? RavlNode::kLeft : RavlNode::kRight,
                     reinterpret_cast<word_t>(nv));
        commit(op, ctx, {nv, nw});
        return;
      }
      case RavlStep::kR3_7: {
        auto* nv = mks(v->key, v->value, 0, b_w == -1 ? 1 : 0, v_left, v_in, w_in);
        auto* nu = mks(u->key, u->value, 0, b_w == 1 ? -1 : 0, v_left, w_out, z);
        auto* nw = mks(w->key, w->value, pin_tag(gp, u, u->tag), 0, v_left, nv, nu);
        replace_u(ctx, gp, sgp, u, su, {v, sv}, &w, sw, nw, {nw, nv, nu});
        return;
      }
      case RavlStep::kR3_8: {
        auto* nv = mks(v->key, v->value, 0, b_w >= 0 ? -1 : 0, v_left, v_in, w_in);
        auto* nu = mks(u->key, u->value, 0, b_w == 1 ? 0 : 1, v_left, w_out, z);
        auto* nw = mks(w->key, w->value, pin_tag(gp, u, u->tag - 1), b_w, v_left, nv, nu);
        replace_u(ctx, gp, sgp, u, su, {v, sv}, &w, sw, nw, {nw, nv, nu});
        return;
      }
      default:
        return;
    }
  }

  void apply_positive(LlxCtx& ctx, RavlNode* gp, const Snapshot* sgp, RavlNode* u,
                      const Snapshot* su, RavlNode* v, bool v_left, int b_u) {
    RavlNode* w = v_left ? sr(*su) : sl(*su);  // sibling
    // Decision inputs live in immutable fields; the sibling's inner child is
    // confirmed against w's snapshot after the llx.
    CCDS_STEP();
    RavlNode* x_hint = w->is_leaf() ? nullptr : (v_left ? w->left() : w->right());
    const int b_w = rel(w, v_left);
    const RavlStep step =
        choose_step(false, b_u, 0, w->tag, b_w, x_hint ? x_hint->tag : 0);

    if (step == RavlStep::kR4) {
      const Snapshot* sv = ctx.llx(dom_, v);
      if (!sv) return;
      auto* nv = mk(v->key, v->value, v->tag - 1, v->rbf, sl(*sv), sr(*sv));
      auto* nu = mks(u->key, u->value, pin_tag(gp, u, b_u == 1 ? u->tag + 1 : u->tag),
                     b_u - 1, v_left, nv, w);
      replace_u(ctx, gp, sgp, u, su, {v, sv}, nullptr, nullptr, nu, {nu, nv});
      return;
    }

    // Remaining steps freeze both children of u, in left-to-right order.
    const Snapshot *sv, *sw;
    RavlNode* phys_first = v_left ? v : w;
    RavlNode* phys_second = v_left ? w : v;
    const Snapshot* s_first = ctx.llx(dom_, phys_first);
    if (!s_first) return;
    const Snapshot* s_second = ctx.llx(dom_, phys_second);
    if (!s_second) return;
    sv = v_left ? s_first : s_second;
    sw = v_left ? s_second : s_first;

    RavlNode* w_in = v_left ? sl(*sw) : sr(*sw);
    RavlNode* w_out = v_left ? sr(*sw) : sl(*sw);

    switch (step) {
      case RavlStep::kR4_9: {
        auto* nv = mk(v->key, v->value, v->tag - 1, v->rbf, sl(*sv), sr(*sv));
        auto* nw = mk(w->key, w->value, w->tag - 1, w->rbf, sl(*sw), sr(*sw));
        auto* nu = mks(u->key, u->value, pin_tag(gp, u, u->tag + 1), -1, v_left, nv, nw);
        replace_both(ctx, gp, sgp, u, su, phys_first, s_first, phys_second, s_second, nullptr,
                     nullptr, nu, {nu, nv, nw});
        return;
      }
      case RavlStep::kR4_10: {
        auto* nv = mk(v->key, v->value, v->tag - 1, v->rbf, sl(*sv), sr(*sv));
        auto* nu = mks(u->key, u->value, 0, -1 - b_w, v_left, nv, w_in);
        auto* nw = mks(w->key, w->value, pin_tag(gp, u, b_w == 0 ? u->tag : u->tag + 1),
                       b_w == 0 ? 1 : 0, v_left, nu, w_out);
        replace_both(ctx, gp, sgp, u, su, phys_first, s_first, phys_second, s_second, nullptr,
                     nullptr, nw, {nw, nu, nv});
        return;
      }
      default:
        break;
    }

    // R4:11/12/13 additionally replace x = the sibling's inner child.
    RavlNode* x = w_in;
    if (x != x_hint) return;  // a node we examined was replaced concurrently
    const Snapshot* sx = ctx.llx(dom_, x);
    if (!sx) return;
    RavlNode* x_in = v_left ? sl(*sx) : sr(*sx);
    RavlNode* x_out = v_left ? sr(*sx) : sl(*sx);
    const int b_x = rel(x, v_left);

    switch (step) {
      case RavlStep::kR4_11: {
        auto* nv = mk(v->key, v->value, v->tag - 1, v->rbf, sl(*sv), sr(*sv));
        auto* nx = mk(x->key, x->value, x->tag - 1, x->rbf, sl(*sx), sr(*sx));
        auto* nu = mks(u->key, u->value, 0, 0, v_left, nv, nx);
        auto* nw = mks(w->key, w->value, pin_tag(gp, u, u->tag + 1), 1, v_left, nu, w_out);
        replace_both(ctx, gp, sgp, u, su, phys_first, s_first, phys_second, s_second, &x, sx, nw,
                     {nw, nu, nv, nx});
        return;
      }
      case RavlStep::kR4_12: {
        auto* nv = mk(v->key, v->value, v->tag - 1, v->rbf, sl(*sv), sr(*sv));
        auto* nu = mks(u->key, u->value, 0, b_x == -1 ? 1 : 0, v_left, nv, x_in);
        auto* nw = mks(w->key, w->value, 0, b_x == 1 ? -1 : 0, v_left, x_out, w_out);
        auto* nx = mks(x->key, x->value, pin_tag(gp, u, u->tag + 1), 0, v_left, nu, nw);
        replace_both(ctx, gp, sgp, u, su, phys_first, s_first, phys_second, s_second, &x, sx, nx,
                     {nx, nu, nw, nv});
        return;
      }
      case RavlStep::kR4_13: {
        auto* nv = mk(v->key, v->value, v->tag - 1, v->rbf, sl(*sv), sr(*sv));
        auto* nu = mks(u->key, u->value, 0, b_x >= 0 ? -1 : 0, v_left, nv, x_in);
        auto* nw = mks(w->key, w->value, 0, b_x == 1 ? 0 : 1, v_left, x_out, w_out);
        auto* nx = mks(x->key, x->value, pin_tag(gp, u, u->tag), b_x, v_left, nu, nw);
        replace_both(ctx, gp, sgp, u, su, phys_first, s_first, phys_second, s_second, &x, sx, nx,
                     {nx, nu, nw, nv});
        return;
      }
      default:
        return;
    }
  }

  // scx replacing u (and v, optionally the pivot w) by repl under gp.
  void replace_u(LlxCtx& ctx, RavlNode* gp, const Snapshot* sgp, RavlNode* u, const Snapshot* su,
                 std::pair<RavlNode*, const Snapshot*> v, RavlNode* const* w, const Snapshot* sw,
                 RavlNode* repl, std::initializer_list<RavlNode*> fresh) {
    typename Domain::ScxOp op;
    op.add(gp, sgp);
    op.add(u, su, true);
    op.add(v.first, v.second, true);
    if (w) op.add(*w, sw, true);
    op.set_field(0, sl(*sgp) == u ? RavlNode::kLeft : RavlNode::kRight,
                 reinterpret_cast<word_t>(repl));
    commit(op, ctx, fresh);
  }

  // scx replacing u and both of its children (and optionally x) under gp.
  void replace_both(LlxCtx& ctx, RavlNode* gp, const Snapshot* sgp, RavlNode* u,
                    const Snapshot* su, RavlNode* first, const Snapshot* sfirst, RavlNode* second,
                    const Snapshot* ssecond, RavlNode* const* x, const Snapshot* sx,
                    RavlNode* repl, std::initializer_list<RavlNode*> fresh) {
    typename Domain::ScxOp op;
    op.add(gp, sgp);
    op.add(u, su, true);
    op.add(first, sfirst, true);
    op.add(second, ssecond, true);
    if (x) op.add(*x, sx, true);
    op.set_field(0, sl(*sgp) == u ? RavlNode::kLeft : RavlNode::kRight,
                 reinterpret_cast<word_t>(repl));
    commit(op, ctx, fresh);
  }

  bool commit(typename Domain::ScxOp& op, const LlxCtx& ctx,
              std::initializer_list<RavlNode*> fresh) {
#if defined(CCDS_VALIDATE_SCX)
    std::vector<RavlNode*> m(op.v.begin(), op.v.begin() + op.n);
    CCDS_CHECK_SCX(RavlNode, op, ctx.s, m, fresh, kLinkMask);
#else
    (void)ctx;
#endif
    if (dom_.scx(op)) {
      for (unsigned i = 0; i < op.n; ++i) {
        if (op.finalize_mask & (1u << i)) {
          assert(dom_.is_finalized(op.v[i]));
          reclaim::retire(op.v[i]);
        }
      }
      return true;
    }
    for (auto* f : fresh) delete f;
    return false;
  }

  // --- traversal helpers (quiescent) ---

  RavlNode* ravl_root() const {
    RavlNode* s = entry_->left();
    return s->is_leaf() ? nullptr : s->left();
  }

  static void free_subtree(RavlNode* n) {
    if (!n) return;
    free_subtree(n->left());
    free_subtree(n->right());
    delete n;
  }

  static std::uint64_t count_keys(const RavlNode* n) {
    if (n->is_leaf()) return n->key == kKeyInf ? 0 : 1;
    return count_keys(n->left()) + count_keys(n->right());
  }

  static long long sum_keys(const RavlNode* n) {
    if (n->is_leaf()) return n->key == kKeyInf ? 0 : n->key;
    return sum_keys(n->left()) + sum_keys(n->right());
  }

  static std::uint64_t count_leaves(const RavlNode* n) {
    if (n->is_leaf()) return 1;
    return count_leaves(n->left()) + count_leaves(n->right());
  }

  static std::uint64_t height_of(const RavlNode* n) {
    if (n->is_leaf()) return 0;
    return 1 + std::max(height_of(n->left()), height_of(n->right()));
  }

  static void leaf_depths(const RavlNode* n, std::uint64_t d, std::uint64_t& leaves,
                          std::uint64_t& sum, std::uint64_t& height) {
    if (n->is_leaf()) {
      ++leaves;
      sum += d;
      if (d > height) height = d;
      return;
    }
    leaf_depths(n->left(), d + 1, leaves, sum, height);
    leaf_depths(n->right(), d + 1, leaves, sum, height);
  }

  static std::uint64_t violations_in(const RavlNode* n) {
    std::uint64_t v = 0;
    if (n->is_leaf()) return n->tag > 0 ? static_cast<std::uint64_t>(n->tag) : 0;
    if (n->tag < 0) v += 1;
    if (n->tag > 0) v += static_cast<std::uint64_t>(n->tag);
    return v + violations_in(n->left()) + violations_in(n->right());
  }

  static bool all_tags_zero(const RavlNode* n) {
    if (n->tag != 0) return false;
    if (n->is_leaf()) return true;
    return all_tags_zero(n->left()) && all_tags_zero(n->right());
  }

  // Relaxed height; also checks the stored balance factors on the way up.
  static std::int64_t relaxed_height(const RavlNode* n, ValidationReport& rep) {
    if (n->is_leaf()) {
      if (n->tag < 0) rep.errors.push_back("negative tag on a leaf");
      return n->tag;
    }
    if (n->tag < -1) rep.errors.push_back("internal tag below -1");
    std::int64_t hl = relaxed_height(n->left(), rep);
    std::int64_t hr = relaxed_height(n->right(), rep);
    std::int64_t b = hl - hr;
    if (b < -1 || b > 1) rep.errors.push_back("relaxed balance factor out of range");
    if (b != n->rbf) rep.errors.push_back("stored rbf disagrees with relaxed heights");
    return std::max(hl, hr) + 1 + n->tag;
  }

  void check_balance(const RavlNode* root, ValidationReport& rep) const {
    (void)relaxed_height(root, rep);
  }

  static std::int64_t true_height(const RavlNode* n, bool& avl) {
    if (n->is_leaf()) return 0;
    std::int64_t hl = true_height(n->left(), avl);
    std::int64_t hr = true_height(n->right(), avl);
    if (hl - hr < -1 || hl - hr > 1) avl = false;
    return std::max(hl, hr) + 1;
  }

  static bool is_strict_avl(const RavlNode* root) {
    bool avl = true;
    (void)true_height(root, avl);
    return avl;
  }

  static void check_bst(const RavlNode* n, std::optional<key_type> lo, std::optional<key_type> hi,
                        ValidationReport& rep) {
    if (lo && n->key < *lo) rep.errors.push_back("key below range bound");
    if (hi && n->key > *hi) rep.errors.push_back("key above range bound");
    if (n->is_leaf()) return;
    if (n->value != 0) rep.errors.push_back("internal node carries a value");
    check_bst(n->left(), lo, std::optional<key_type>(n->key - 1), rep);
    check_bst(n->right(), n->key, hi, rep);
  }

  void check_constraint3(const RavlNode* n, ValidationReport& rep) const {
    if (!n) return;
    if (dom_.is_finalized(n)) rep.errors.push_back("reachable node is finalized");
    if (!n->is_leaf()) {
      check_constraint3(n->left(), rep);
      check_constraint3(n->right(), rep);
    }
  }

  Domain dom_;
  RavlNode* entry_;
  const unsigned k_;
};

}  // namespace ccds
