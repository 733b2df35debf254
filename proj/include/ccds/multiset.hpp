#pragma once

#include <utility>
#include <vector>

#include "ccds/reclaim.hpp"
#include "ccds/template_update.hpp"

namespace ccds {

// Sorted singly-linked-list multiset of keys with counts. Keys live between
// the head (-inf) and tail (+inf) sentinels; a key's node stores how many
// occurrences it represents. Counts are bumped in place through scx on the
// count field; removals splice nodes out, replacing the successor with a
// fresh copy so the predecessor's next pointer never revisits an old value.
struct ListNode : Record<2> {
  static constexpr unsigned kCount = 0;
  static constexpr unsigned kNext = 1;

  const key_type key;

  ListNode(word_t info, key_type k, word_t count, ListNode* next)
      : Record<2>(info, 2), key(k) {
    mut[kCount].store(count);
    mut[kNext].store(reinterpret_cast<word_t>(next));
  }

  ListNode* next() const { return reinterpret_cast<ListNode*>(mut[kNext].load()); }
  word_t count() const { return mut[kCount].load(); }
};

class Multiset {
 public:
  using Domain = ScxDomain<ListNode>;
  using Snapshot = Domain::Snapshot;
  using LlxStatus = Domain::LlxStatus;

  static constexpr word_t kLinkMask = 1u << ListNode::kNext;

  Multiset() {
    tail_ = new ListNode(dom_.initial_info(), kKeyInf, 0, nullptr);
    head_ = new ListNode(dom_.initial_info(), kKeyNegInf, 0, tail_);
  }

  ~Multiset() {
    ListNode* n = head_;
    while (n) {
      ListNode* nx = n->next();
      delete n;
      n = nx;
    }
  }

  word_t get(key_type key) const {
    reclaim::Guard g;
    auto [r, p] = search(key);
    (void)p;
    return key == r->key ? r->count() : 0;
  }

  void insert(key_type key, word_t count) {
    assert(count > 0 && key > kKeyNegInf && key < kKeyInf);
    reclaim::Guard g;
    for (;;) {
      auto [r, p] = search(key);
      if (key == r->key) {
        Snapshot sr;
        if (dom_.llx(r, &sr) != LlxStatus::kSnapshot) continue;
        typename Domain::ScxOp op;
        op.add(r, &sr);
        op.set_field(0, ListNode::kCount, sr.vals[ListNode::kCount] + count);
#if defined(CCDS_VALIDATE_SCX)
        tmpl::UpdateContext<ListNode> sigma;
        sigma.nodes[0] = r;
        sigma.snaps[0] = sr;
        sigma.count = 1;
        const std::initializer_list<ListNode*> fresh{};
        CCDS_CHECK_SCX(ListNode, op, sigma, std::vector<ListNode*>{r}, fresh, kLinkMask);
#endif
        if (dom_.scx(op)) return;
      } else {
        Snapshot sp;
        if (dom_.llx(p, &sp) != LlxStatus::kSnapshot) continue;
        if (reinterpret_cast<ListNode*>(sp.vals[ListNode::kNext]) != r) continue;
        auto* fresh = new ListNode(dom_.initial_info(), key, count, r);
        typename Domain::ScxOp op;
        op.add(p, &sp);
        op.set_field(0, ListNode::kNext, reinterpret_cast<word_t>(fresh));
#if defined(CCDS_VALIDATE_SCX)
        tmpl::UpdateContext<ListNode> sigma;
        sigma.nodes[0] = p;
        sigma.snaps[0] = sp;
        sigma.count = 1;
        const std::initializer_list<ListNode*> fr{fresh};
        CCDS_CHECK_SCX(ListNode, op, sigma, std::vector<ListNode*>{p}, fr, kLinkMask);
#endif
        if (dom_.scx(op)) return;
        delete fresh;
      }
    }
  }

  // Removes count occurrences of key; false iff fewer were present.
  bool erase(key_type key, word_t count) {
    assert(count > 0);
    reclaim::Guard g;
    for (;;) {
      auto [r, p] = search(key);
      Snapshot sp, sr;
      if (dom_.llx(p, &sp) != LlxStatus::kSnapshot) continue;
      if (dom_.llx(r, &sr) != LlxStatus::kSnapshot) continue;
      if (reinterpret_cast<ListNode*>(sp.vals[ListNode::kNext]) != r) continue;
      const word_t present = sr.vals[ListNode::kCount];
      if (key != r->key || present < count) return false;
      if (present > count) {
        auto* fresh = new ListNode(dom_.initial_info(), r->key, present - count,
                                   reinterpret_cast<ListNode*>(sr.vals[ListNode::kNext]));
        typename Domain::ScxOp op;
        op.add(p, &sp);
        op.add(r, &sr, /*finalize=*/true);
        op.set_field(0, ListNode::kNext, reinterpret_cast<word_t>(fresh));
#if defined(CCDS_VALIDATE_SCX)
        tmpl::UpdateContext<ListNode> sigma;
        sigma.nodes[0] = p;
        sigma.snaps[0] = sp;
        sigma.nodes[1] = r;
        sigma.snaps[1] = sr;
        sigma.count = 2;
        const std::initializer_list<ListNode*> fr{fresh};
        CCDS_CHECK_SCX(ListNode, op, sigma, (std::vector<ListNode*>{p, r}), fr, kLinkMask);
#endif
        if (dom_.scx(op)) {
          retire_node(r);
          return true;
        }
        delete fresh;
      } else {
        // Exact count: remove r and replace its successor with a copy, so
        // p.next never returns to a previously held value.
        auto* rnext = reinterpret_cast<ListNode*>(sr.vals[ListNode::kNext]);
        Snapshot sn;
        if (dom_.llx(rnext, &sn) != LlxStatus::kSnapshot) continue;
        auto* fresh = new ListNode(dom_.initial_info(), rnext->key, sn.vals[ListNode::kCount],
                                   reinterpret_cast<ListNode*>(sn.vals[ListNode::kNext]));
        typename Domain::ScxOp op;
        op.add(p, &sp);
        op.add(r, &sr, /*finalize=*/true);
        op.add(rnext, &sn, /*finalize=*/true);
        op.set_field(0, ListNode::kNext, reinterpret_cast<word_t>(fresh));
#if defined(CCDS_VALIDATE_SCX)
        tmpl::UpdateContext<ListNode> sigma;
        sigma.nodes[0] = p;
        sigma.snaps[0] = sp;
        sigma.nodes[1] = r;
        sigma.snaps[1] = sr;
        sigma.nodes[2] = rnext;
        sigma.snaps[2] = sn;
        sigma.count = 3;
        const std::initializer_list<ListNode*> fr{fresh};
        CCDS_CHECK_SCX(ListNode, op, sigma, (std::vector<ListNode*>{p, r}), fr, kLinkMask);
#endif
        if (dom_.scx(op)) {
          retire_node(r);
          retire_node(rnext);
          return true;
        }
        delete fresh;
      }
    }
  }

  // --- inspection (quiescent unless noted) ---

  std::vector<std::pair<key_type, word_t>> contents() const {
    std::vector<std::pair<key_type, word_t>> out;
    for (ListNode* n = head_->next(); n->key != kKeyInf; n = n->next()) {
      out.emplace_back(n->key, n->count());
    }
    return out;
  }

  // Sum of key*count over the list, the checksum-law quantity.
  long long key_count_sum() const {
    long long s = 0;
    for (ListNode* n = head_->next(); n->key != kKeyInf; n = n->next()) {
      s += static_cast<long long>(n->key) * static_cast<long long>(n->count());
    }
    return s;
  }

  std::uint64_t size() const {
    std::uint64_t c = 0;
    for (ListNode* n = head_->next(); n->key != kKeyInf; n = n->next()) ++c;
    return c;
  }

  // Sorted-order and Constraint-3 checks; empty result means valid.
  std::vector<std::string> validate() const {
    std::vector<std::string> errs;
    key_type prev = kKeyNegInf;
    for (ListNode* n = head_->next(); ; n = n->next()) {
      if (n->key <= prev) errs.push_back("keys not strictly increasing");
      if (dom_.is_finalized(n)) errs.push_back("reachable node is finalized");
      if (n->key == kKeyInf) break;
      if (n->count() == 0) errs.push_back("zero count on a reachable key");
      prev = n->key;
    }
    return errs;
  }

  Domain& domain() { return dom_; }

 private:
  std::pair<ListNode*, ListNode*> search(key_type key) const {
    ListNode* p = head_;
    CCDS_STEP();
    ListNode* r = p->next();
    while (key > r->key) {
      p = r;
      CCDS_STEP();
      r = r->next();
    }
    return {r, p};
  }

  void retire_node(ListNode* n) {
    assert(dom_.is_finalized(n));
    reclaim::retire(n);
  }

  Domain dom_;
  ListNode* head_;
  ListNode* tail_;
};

}  // namespace ccds
