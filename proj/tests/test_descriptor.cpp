#include <doctest.h>

#include <thread>

#include "ccds/descriptor.hpp"

using namespace ccds;

namespace {
struct Imm {
  word_t a;
  word_t b;
};
constexpr MutField kState{0, 2};
}  // namespace

TEST_CASE("create_new returns even sequence numbers starting at two") {
  DescriptorPool<Imm, 2> pool;
  threads::Registration reg;
  auto h1 = pool.create_new({1, 2}, 0);
  CHECK(h1.seq() == 2);
  CHECK((h1.bits & 3) == 0);  // flag bits left for clients
  auto h2 = pool.create_new({3, 4}, 0);
  CHECK(h2.seq() == 4);
  CHECK(pool.slots_used() == 1);
}

TEST_CASE("reads through a stale handle return the default") {
  DescriptorPool<Imm, 2> pool;
  threads::Registration reg;
  auto h1 = pool.create_new({1, 2}, 1);
  CHECK(pool.read_field(h1, kState, 99) == 1);
  auto imm = pool.read_immutables(h1);
  REQUIRE(imm.has_value());
  CHECK(imm->a == 1);
  CHECK(imm->b == 2);

  auto h2 = pool.create_new({5, 6}, 2);
  // h1 is now invalid: default / no value, and it stays invalid.
  CHECK(pool.read_field(h1, kState, 99) == 99);
  CHECK(!pool.read_immutables(h1).has_value());
  CHECK(pool.read_field(h1, kState, 99) == 99);
  // h2 still valid.
  CHECK(pool.read_field(h2, kState, 99) == 2);
  CHECK(pool.read_immutables(h2)->a == 5);
}

TEST_CASE("write_field and cas_field on valid and stale handles") {
  DescriptorPool<Imm, 4> pool;
  threads::Registration reg;
  constexpr MutField kF{0, 2};
  constexpr MutField kG{2, 2};
  auto h = pool.create_new({0, 0}, 0);
  pool.write_field(h, kF, 3);
  CHECK(pool.read_field(h, kF, 9) == 3);
  CHECK(pool.read_field(h, kG, 9) == 0);

  auto prior = pool.cas_field(h, kG, 0, 2);
  REQUIRE(prior.has_value());
  CHECK(*prior == 0);
  CHECK(pool.read_field(h, kG, 9) == 2);
  // mismatched expected: unchanged, prior returned
  prior = pool.cas_field(h, kG, 1, 3);
  REQUIRE(prior.has_value());
  CHECK(*prior == 2);
  CHECK(pool.read_field(h, kG, 9) == 2);

  auto stale = h;
  pool.create_new({0, 0}, 0);
  pool.write_field(stale, kF, 1);                 // no effect
  CHECK(!pool.cas_field(stale, kF, 0, 1).has_value());  // invalid signal
  CHECK(pool.read_field(stale, kF, 77) == 77);
}

TEST_CASE("concurrent writers on distinct fields both land") {
  DescriptorPool<Imm, 4> pool;
  threads::Registration reg;
  constexpr MutField kF{0, 2};
  constexpr MutField kG{2, 2};
  auto h = pool.create_new({0, 0}, 0);
  std::thread a([&] {
    threads::Registration r2;
    for (int i = 0; i < 1000; ++i) pool.write_field(h, kF, i % 4);
    pool.write_field(h, kF, 3);
  });
  std::thread b([&] {
    threads::Registration r2;
    for (int i = 0; i < 1000; ++i) pool.write_field(h, kG, i % 4);
    pool.write_field(h, kG, 2);
  });
  a.join();
  b.join();
  CHECK(pool.read_field(h, kF, 9) == 3);
  CHECK(pool.read_field(h, kG, 9) == 2);
}

TEST_CASE("per-thread slots are independent") {
  DescriptorPool<Imm, 2> pool;
  threads::Registration reg;
  auto mine = pool.create_new({10, 0}, 1);
  DescriptorHandle theirs{};
  std::thread other([&] {
    threads::Registration r2;
    theirs = pool.create_new({20, 0}, 2);
  });
  other.join();
  CHECK(pool.read_immutables(mine)->a == 10);
  CHECK(pool.read_immutables(theirs)->a == 20);
  CHECK(pool.read_field(theirs, kState, 9) == 2);
  CHECK(pool.slots_used() == 2);
}
