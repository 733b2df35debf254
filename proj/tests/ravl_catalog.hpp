#pragma once

#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "ccds/ravl.hpp"

// Exhaustive small-subtree catalog for the RAVL rebalancing steps, shared by
// the unit suite and the acceptance suite.

namespace ravlcatalog {
using namespace ccds;

// Value-model of a RAVL subtree for the step catalog.
struct Model {
  std::int32_t tag;
  std::int8_t rbf = 0;
  key_type key = 0;
  std::unique_ptr<Model> l, r;
  bool leaf() const { return !l; }
};

std::unique_ptr<Model> leaf_of(std::int32_t tag) {
  auto m = std::make_unique<Model>();
  m->tag = tag;
  return m;
}

std::unique_ptr<Model> clone(const Model& m) {
  auto c = std::make_unique<Model>();
  c->tag = m.tag;
  c->rbf = m.rbf;
  c->key = m.key;
  if (!m.leaf()) {
    c->l = clone(*m.l);
    c->r = clone(*m.r);
  }
  return c;
}

// RAVL subtrees with relaxed height rh and real height <= max_h, leaf tags
// 0..2, internal tags -1..1, every balance factor legal. A rebalancing step
// inspects one descent chain plus the relaxed heights of the fringe roots,
// never two interiors jointly, so the children are combined sparsely: one
// side ranges over everything while the other is a leaf standing in for an
// arbitrary subtree of that relaxed height. Leaves dominate the count, so
// this still covers every step-visible configuration of height <= 4.
std::vector<std::unique_ptr<Model>> gen(int rh, unsigned max_h) {
  std::vector<std::unique_ptr<Model>> out;
  if (rh >= 0 && rh <= 2) out.push_back(leaf_of(rh));
  if (max_h == 0) return out;
  for (std::int32_t tag = -1; tag <= 1; ++tag) {
    const int top = rh - 1 - tag;  // max of the children's relaxed heights
    if (top < 0) continue;
    for (int d = -1; d <= 1; ++d) {
      const int hl = d >= 0 ? top : top + d;
      const int hr = d >= 0 ? top - d : top;
      if (hl < 0 || hr < 0) continue;
      auto emit = [&](const Model& a, const Model& b) {
        auto m = std::make_unique<Model>();
        m->tag = tag;
        m->rbf = static_cast<std::int8_t>(d);
        m->l = clone(a);
        m->r = clone(b);
        out.push_back(std::move(m));
      };
      if (hr <= 2) {
        auto rep = leaf_of(hr);
        for (auto& a : gen(hl, max_h - 1)) emit(*a, *rep);
      }
      if (hl <= 2) {
        auto rep = leaf_of(hl);
        for (auto& b : gen(hr, max_h - 1)) {
          if (b->leaf() && hr <= 2) continue;  // already emitted leaf/leaf
          emit(*rep, *b);
        }
      }
    }
  }
  return out;
}

key_type assign_keys(Model& m, key_type next) {
  if (m.leaf()) {
    m.key = next;
    return next + 10;
  }
  next = assign_keys(*m.l, next);
  m.key = next;
  return assign_keys(*m.r, next);
}

struct Violation {
  std::vector<int> path;
};

// First violation along each path, matching the cleanup discipline (whose
// steps then see violation-free ancestors).
void find_violations(const Model& m, std::vector<int>& path, std::vector<Violation>& out) {
  const bool viol = m.leaf() ? m.tag > 0 : m.tag != 0;
  if (viol) {
    if (!path.empty()) out.push_back({path});
    return;
  }
  if (m.leaf()) return;
  path.push_back(0);
  find_violations(*m.l, path, out);
  path.back() = 1;
  find_violations(*m.r, path, out);
  path.pop_back();
}


}  // namespace ravlcatalog

// Test-only backdoor: plant hand-built subtrees and drive single steps.
struct ccds::RavlTree::TestAccess {
  static RavlNode* mk(RavlTree& t, key_type k, value_type v, std::int32_t tag, std::int8_t rbf,
                      RavlNode* l, RavlNode* r) {
    return t.mk(k, v, tag, rbf, l, r);
  }
  static void plant(RavlTree& t, RavlNode* root) {
    RavlNode* old = t.entry_->left();
    if (old->is_leaf()) delete old;
    auto* inf_leaf = t.mk(kKeyInf, 0, 0, 0, nullptr, nullptr);
    auto* second = t.mk(kKeyInf, 0, 0, 0, root, inf_leaf);
    t.entry_->mut[RavlNode::kLeft].store(reinterpret_cast<word_t>(second));
  }
  static RavlNode* entry(RavlTree& t) { return t.entry_; }
  static void rebalance_once(RavlTree& t, RavlNode* gp, RavlNode* u, RavlNode* v) {
    reclaim::Guard g;
    t.try_rebalance(gp, u, v);
  }
};

namespace ravlcatalog {
using TA = ccds::RavlTree::TestAccess;

RavlNode* build(RavlTree& t, const Model& m) {
  if (m.leaf()) return TA::mk(t, m.key, 1, m.tag, 0, nullptr, nullptr);
  return TA::mk(t, m.key, 0, m.tag, m.rbf, build(t, *m.l), build(t, *m.r));
}

void leaf_keys(const RavlNode* n, std::vector<key_type>& out) {
  if (n->is_leaf()) {
    out.push_back(n->key);
    return;
  }
  leaf_keys(n->left(), out);
  leaf_keys(n->right(), out);
}

bool two_children_ok(const RavlNode* n) {
  if (!n) return false;
  if ((n->left() == nullptr) != (n->right() == nullptr)) return false;
  if (n->is_leaf()) return true;
  return two_children_ok(n->left()) && two_children_ok(n->right());
}

void dump_model(const Model& m, int depth) {
  for (int i = 0; i < depth; ++i) std::fputc(' ', stderr);
  std::fprintf(stderr, "k=%lld tag=%d rbf=%d%s\n", (long long)m.key, m.tag, (int)m.rbf,
               m.leaf() ? " leaf" : "");
  if (!m.leaf()) {
    dump_model(*m.l, depth + 1);
    dump_model(*m.r, depth + 1);
  }
}

std::int64_t node_rh(const RavlNode* n) {
  if (n->is_leaf()) return n->tag;
  return std::max(node_rh(n->left()), node_rh(n->right())) + 1 + n->tag;
}

}  // namespace ravlcatalog


namespace ravlcatalog {

struct CatalogResult {
  std::uint64_t cases = 0;
  bool ok = true;
  std::string message;
};

// Attacks every violation inside every enumerated subtree once; the step
// must preserve the balance invariant and key order, keep the relaxed height
// of a non-root position (move it by at most one at the root), not increase
// the violation units, and commit exactly one scx.
inline CatalogResult run_catalog() {
  CatalogResult res;
  auto fail = [&](const char* why) {
    res.ok = false;
    res.message = std::string(why) + " at case " + std::to_string(res.cases);
  };
  for (int rh = 0; rh <= 3 && res.ok; ++rh) {
    for (auto& model : gen(rh, 4)) {
      if (!res.ok) break;
      if (model->tag != 0) continue;
      assign_keys(*model, 100);
      std::vector<Violation> viols;
      std::vector<int> path;
      find_violations(*model, path, viols);
      for (const auto& v : viols) {
        RavlTree t;
        auto m = clone(*model);
        TA::plant(t, build(t, *m));

        RavlNode* entry = TA::entry(t);
        std::vector<RavlNode*> chain{entry, entry->left(), entry->left()->left()};
        for (int dir : v.path) {
          RavlNode* cur = chain.back();
          chain.push_back(dir ? cur->right() : cur->left());
        }
        RavlNode* l = chain.back();
        RavlNode* u = chain[chain.size() - 2];
        RavlNode* gp = chain[chain.size() - 3];
        const bool root_step = u == entry->left()->left();

        std::vector<key_type> keys_before;
        leaf_keys(entry->left()->left(), keys_before);
        const std::int64_t rh_before = node_rh(entry->left()->left());
        const std::uint64_t units_before = t.count_violations();
        const std::uint64_t scx_before = t.domain().scx_successes();

        TA::rebalance_once(t, gp, u, l);
        ++res.cases;

        if (t.domain().scx_successes() != scx_before + 1) {
          fail("no scx committed");
          break;
        }
        if (!two_children_ok(TA::entry(t)->left()->left())) {
          fail("broken node structure");
          break;
        }
        if (!t.validate(1u << 20, false).ok()) {
          fail("balance or order invariant broken");
          break;
        }
        std::vector<key_type> keys_after;
        leaf_keys(TA::entry(t)->left()->left(), keys_after);
        if (keys_after != keys_before) {
          fail("key sequence changed");
          break;
        }
        if (t.count_violations() > units_before) {
          fail("violation units increased");
          break;
        }
        const std::int64_t rh_after = node_rh(TA::entry(t)->left()->left());
        if (root_step ? (rh_after - rh_before < -1 || rh_after - rh_before > 1)
                      : rh_after != rh_before) {
          fail("relaxed height not preserved");
          break;
        }
      }
    }
  }
  return res;
}

}  // namespace ravlcatalog
