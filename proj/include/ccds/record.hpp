#pragma once

#include <array>
#include <atomic>

#include "ccds/common.hpp"

namespace ccds {

// A data record: a fixed number of single-word mutable fields plus whatever
// immutable payload the derived node type carries. The info word holds either
// a pointer to the domain's pre-committed dummy descriptor (low bit clear) or
// a flagged descriptor handle naming the operation the record is frozen for.
template <unsigned MaxMut>
struct Record {
  static constexpr unsigned kMaxMut = MaxMut;

  std::atomic<word_t> info;
  std::atomic<bool> marked{false};
  const std::uint8_t mut_count;
  std::array<std::atomic<word_t>, MaxMut> mut{};

  Record(word_t initial_info, unsigned n)
      : info(initial_info), mut_count(static_cast<std::uint8_t>(n)) {
    assert(n <= MaxMut);
  }

  word_t read_mut(unsigned i) const { return mut[i].load(); }
};

}  // namespace ccds
