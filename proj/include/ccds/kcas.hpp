#pragma once

#include <algorithm>
#include <array>

#include "ccds/descriptor.hpp"

namespace ccds {

// DCSS and k-CAS over plain memory words, built on reusable weak descriptors.
// Values stored in managed words must leave the two low bits clear: bit 0
// flags a DCSS descriptor handle, bit 1 a k-CAS descriptor handle. Reads of
// managed words go through dcss_read / kcas_read, which help any operation
// they encounter and return an application value.
class KcasSpace {
 public:
  static constexpr unsigned kMaxK = 64;
  static constexpr word_t kDcssFlag = 1;
  static constexpr word_t kKcasFlag = 2;

  struct Entry {
    std::atomic<word_t>* addr;
    word_t expected;
    word_t desired;
  };

  // Atomically: if *a1 == e1 and *a2 == e2 then *a2 := n2 and return e2;
  // otherwise return the current value of *a2.
  word_t dcss(std::atomic<word_t>* a1, word_t e1, std::atomic<word_t>* a2, word_t e2,
              word_t n2) {
    assert(!(e1 & 3) && !(e2 & 3) && !(n2 & 3));
    return dcss_internal(reinterpret_cast<word_t>(a1), e1, a2, e2, n2);
  }

  word_t dcss_read(std::atomic<word_t>* addr) {
    for (;;) {
      CCDS_STEP();
      word_t r = addr->load();
      if (r & kDcssFlag) {
        dcss_help(r);
        continue;
      }
      return r;
    }
  }

  // Atomically installs every desired value iff every word holds its expected
  // value. Entries are sorted by address internally before the lock phase.
  bool kcas(const Entry* entries, unsigned k) {
    assert(k >= 1 && k <= kMaxK);
    KcasImm imm{};
    imm.k = k;
    std::array<unsigned, kMaxK> order;
    for (unsigned i = 0; i < k; ++i) order[i] = i;
    std::sort(order.begin(), order.begin() + k, [&](unsigned a, unsigned b) {
      return entries[a].addr < entries[b].addr;
    });
    for (unsigned i = 0; i < k; ++i) {
      const Entry& e = entries[order[i]];
      assert(!(e.expected & 3) && !(e.desired & 3));
      assert(i == 0 || imm.addr[i - 1] != e.addr);
      imm.addr[i] = e.addr;
      imm.exp[i] = e.expected;
      imm.nv[i] = e.desired;
    }
    const DescriptorHandle h = kcas_pool_.create_new(imm, kUndecided);
    return kcas_help(h.bits | kKcasFlag);
  }

  word_t kcas_read(std::atomic<word_t>* addr) {
    for (;;) {
      word_t r = dcss_read(addr);
      if (r & kKcasFlag) {
        kcas_help(r);
        continue;
      }
      return r;
    }
  }

  unsigned descriptor_slots_used() const {
    return dcss_pool_.slots_used() + kcas_pool_.slots_used();
  }

 private:
  enum : word_t { kUndecided = 0, kSucceeded = 1, kFailed = 2, kStateInvalid = 3 };
  static constexpr MutField kStateField{0, 2};

  struct DcssImm {
    word_t a1;  // plain address, or (kcas handle | kKcasFlag) naming its state
    word_t e1;
    std::atomic<word_t>* a2;
    word_t e2;
    word_t n2;
  };

  struct KcasImm {
    word_t k;
    std::atomic<word_t>* addr[kMaxK];
    word_t exp[kMaxK];
    word_t nv[kMaxK];
  };

  word_t dcss_internal(word_t a1, word_t e1, std::atomic<word_t>* a2, word_t e2, word_t n2) {
    const DescriptorHandle h = dcss_pool_.create_new({a1, e1, a2, e2, n2});
    const word_t fdes = h.bits | kDcssFlag;
    word_t r;
    for (;;) {
      r = e2;
      CCDS_STEP();
      if (a2->compare_exchange_strong(r, fdes)) {
        r = e2;
        break;
      }
      if (r & kDcssFlag) {
        dcss_help(r);
        continue;
      }
      break;
    }
    if (r == e2) dcss_help(fdes);
    return r;
  }

  void dcss_help(word_t fdes) {
    const DescriptorHandle h{fdes & ~kDcssFlag};
    const auto immo = dcss_pool_.read_immutables(h);
    if (!immo) return;  // the operation already terminated
    const DcssImm& d = *immo;
    word_t v1;
    if (d.a1 & kKcasFlag) {
      // Reads the state of a k-CAS descriptor; once that operation is over
      // the exact value no longer matters, only that it is not Undecided.
      v1 = kcas_pool_.read_field(DescriptorHandle{d.a1 & ~word_t{3}}, kStateField, kSucceeded);
    } else {
      CCDS_STEP();
      v1 = reinterpret_cast<std::atomic<word_t>*>(d.a1)->load();
    }
    word_t expect = fdes;
    CCDS_STEP();
    d.a2->compare_exchange_strong(expect, v1 == d.e1 ? d.n2 : d.e2);
  }

  bool kcas_help(word_t fdes) {
    const DescriptorHandle h{fdes & ~kKcasFlag};
    const auto immo = kcas_pool_.read_immutables(h);
    if (!immo) return false;  // stale helper; callers ignore the result
    const KcasImm& d = *immo;

    if (kcas_pool_.read_field(h, kStateField, kStateInvalid) == kUndecided) {
      // Lock phase: store fdes into each word via dcss, conditional on the
      // state still being Undecided.
      word_t state = kSucceeded;
      for (unsigned i = 0; i < d.k && state == kSucceeded; ++i) {
        for (;;) {
          word_t val = dcss_internal(h.bits | kKcasFlag, kUndecided, d.addr[i], d.exp[i], fdes);
          if (val & kKcasFlag) {
            if (val != fdes) {
              kcas_help(val);
              continue;
            }
            break;  // already locked for this operation
          }
          if (val != d.exp[i]) state = kFailed;
          break;
        }
      }
      kcas_pool_.cas_field(h, kStateField, kUndecided, state);
    }

    // Unlock phase: replace fdes with the new or expected values.
    const word_t st = kcas_pool_.read_field(h, kStateField, kStateInvalid);
    if (st == kStateInvalid) return false;
    for (unsigned i = 0; i < d.k; ++i) {
      word_t expect = fdes;
      CCDS_STEP();
      d.addr[i]->compare_exchange_strong(expect, st == kSucceeded ? d.nv[i] : d.exp[i]);
    }
    return st == kSucceeded;
  }

  DescriptorPool<DcssImm, 2> dcss_pool_;
  DescriptorPool<KcasImm, 2> kcas_pool_;
};

}  // namespace ccds
