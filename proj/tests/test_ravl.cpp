#include <doctest.h>

#include <cstdio>
#include <map>
#include <memory>
#include <random>
#include <vector>

#include "ravl_catalog.hpp"

using namespace ccds;
using namespace ravlcatalog;

TEST_CASE("choose_step follows the published decision tree") {
  using S = RavlStep;
  // negative violation at v
  CHECK(RavlTree::choose_step(true, 0, 0, 0, 0, 0) == S::kR3);
  CHECK(RavlTree::choose_step(true, -1, 0, 0, 0, 0) == S::kR3);
  CHECK(RavlTree::choose_step(true, 1, 0, 0, 0, 0) == S::kR3_5);
  CHECK(RavlTree::choose_step(true, 1, 1, 0, 0, 0) == S::kR3_5);
  CHECK(RavlTree::choose_step(true, 1, -1, 2, 0, 0) == S::kR3_6);
  CHECK(RavlTree::choose_step(true, 1, -1, 0, 0, 0) == S::kR3_7);
  CHECK(RavlTree::choose_step(true, 1, -1, -1, 0, 0) == S::kR3_8);
  // positive violation at v
  CHECK(RavlTree::choose_step(false, 0, 0, 0, 0, 0) == S::kR4);
  CHECK(RavlTree::choose_step(false, 1, 0, 0, 0, 0) == S::kR4);
  CHECK(RavlTree::choose_step(false, -1, 0, 1, 0, 0) == S::kR4_9);
  CHECK(RavlTree::choose_step(false, -1, 0, -1, 0, 0) == S::kFixSiblingFirst);
  CHECK(RavlTree::choose_step(false, -1, 0, 0, 0, 0) == S::kR4_10);
  CHECK(RavlTree::choose_step(false, -1, 0, 0, -1, 0) == S::kR4_10);
  CHECK(RavlTree::choose_step(false, -1, 0, 0, 1, 2) == S::kR4_11);
  CHECK(RavlTree::choose_step(false, -1, 0, 0, 1, 0) == S::kR4_12);
  CHECK(RavlTree::choose_step(false, -1, 0, 0, 1, -1) == S::kR4_13);
}

TEST_CASE("insert and delete keep a quiescent AVL tree") {
  RavlTree t;
  t.insert(10, 1);
  t.insert(20, 2);
  t.insert(30, 3);
  CHECK(t.validate().ok());
  CHECK(t.get(20) == 2);
  CHECK(t.insert(20, 5) == 2);  // replace: no tag change
  CHECK(t.get(20) == 5);
  CHECK(t.validate().ok());
  CHECK(t.erase(10) == 1);
  CHECK(!t.erase(10).has_value());
  CHECK(t.validate().ok());
  CHECK(t.erase(20) == 5);
  CHECK(t.erase(30) == 3);
  CHECK(t.size() == 0);
  CHECK(t.validate().ok());
}

TEST_CASE("sequential oracle equivalence with periodic validation") {
  RavlTree t;
  std::map<key_type, value_type> oracle;
  std::mt19937_64 rng(123);
  for (int i = 0; i < 60000; ++i) {
    key_type k = rng() % 300;
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

TEST_CASE("step catalog: exhaustive small subtrees") {
  auto res = run_catalog();
  INFO(res.message);
  REQUIRE(res.ok);
  CHECK(res.cases > 100);
  MESSAGE("ravl step catalog cases: ", res.cases);
}

TEST_CASE("threshold variant defers rebalancing") {
  RavlTree t(6);
  for (int i = 0; i < 64; ++i) t.insert(i, i);
  CHECK(t.validate().ok());
  for (int i = 0; i < 32; ++i) t.erase(i * 2);
  CHECK(t.validate().ok());
}
