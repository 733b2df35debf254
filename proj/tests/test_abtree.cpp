#include <doctest.h>

#include <map>
#include <random>
#include <vector>

#include "ccds/abtree.hpp"

using namespace ccds;

struct AbTree::TestAccess {
  static AbNode* entry(AbTree& t) { return t.entry_; }
  static AbNode* root(AbTree& t) { return t.entry_->child(0); }
};

using TA = AbTree::TestAccess;

TEST_CASE("empty tree is a single empty leaf under the sentinel") {
  AbTree t(6, 16);
  AbNode* root = TA::root(t);
  CHECK(root->leaf);
  CHECK(root->degree == 0);
  CHECK(!t.get(5).has_value());
  CHECK(!t.erase(5).has_value());
  CHECK(t.validate().ok());
}

TEST_CASE("overflow splits a full leaf evenly, smaller half right") {
  AbTree t(6, 16);
  for (key_type k = 0; k < 17; ++k) CHECK(!t.insert(k, k + 1).has_value());
  REQUIRE(t.validate().ok());  // quiescent: untagged, so the root was untagged
  AbNode* root = TA::root(t);
  REQUIRE(!root->leaf);
  REQUIRE(root->degree == 2);
  CHECK(!root->tagged);
  CHECK(root->child(0)->degree == 9);
  CHECK(root->child(1)->degree == 8);
  CHECK(root->keys[0] == root->child(1)->keys[0]);
  CHECK(t.size() == 17);
}

TEST_CASE("replace and delete pairs") {
  AbTree t(6, 16);
  t.insert(5, 1);
  CHECK(t.insert(5, 2) == 1);  // ReplacePair
  CHECK(t.get(5) == 2);
  CHECK(t.size() == 1);
  CHECK(t.erase(5) == 2);
  CHECK(t.size() == 0);
  CHECK(t.validate().ok());
}

TEST_CASE("deletion violations are cleaned to a strict (a,b)-tree") {
  AbTree t(6, 16);
  for (key_type k = 0; k < 200; ++k) t.insert(k, k);
  REQUIRE(t.validate().ok());
  for (key_type k = 0; k < 200; k += 2) t.erase(k);
  REQUIRE(t.validate().ok());
  CHECK(t.size() == 100);
  for (key_type k = 1; k < 200; k += 2) CHECK(t.get(k) == k);
}

TEST_CASE("drain to empty exercises root absorb and untag") {
  AbTree t(6, 16);
  for (key_type k = 0; k < 300; ++k) t.insert(k, k);
  for (key_type k = 0; k < 300; ++k) {
    CHECK(t.erase(k) == k);
  }
  CHECK(t.size() == 0);
  CHECK(t.validate().ok());
  AbNode* root = TA::root(t);
  CHECK(root->leaf);
}

TEST_CASE("sequential oracle equivalence with periodic validation") {
  AbTree t(6, 16);
  std::map<key_type, value_type> oracle;
  std::mt19937_64 rng(321);
  for (int i = 0; i < 60000; ++i) {
    key_type k = rng() % 500;
    if (rng() % 2) {
      auto a = t.insert(k, k + 3);
      CHECK(a.has_value() == (oracle.find(k) != oracle.end()));
      oracle[k] = k + 3;
    } else {
      auto a = t.erase(k);
      CHECK(a.has_value() == (oracle.erase(k) > 0));
    }
    if (i % 10000 == 0) REQUIRE(t.validate().ok());
  }
  REQUIRE(t.validate().ok());
  CHECK(t.size() == oracle.size());
  for (auto& [k, v] : oracle) CHECK(t.get(k) == v);
}

TEST_CASE("other (a,b) parameters work") {
  AbTree t(2, 4);
  std::map<key_type, value_type> oracle;
  std::mt19937_64 rng(11);
  for (int i = 0; i < 20000; ++i) {
    key_type k = rng() % 200;
    if (rng() % 2) {
      t.insert(k, k);
      oracle[k] = k;
    } else {
      t.erase(k);
      oracle.erase(k);
    }
    if (i % 5000 == 0) REQUIRE(t.validate().ok());
  }
  REQUIRE(t.validate().ok());
  CHECK(t.size() == oracle.size());
}
