// Stress/benchmark harness: prefill to steady state, timed measurement with a
// uniform key distribution, checksum validation against per-thread operation
// tallies, structure validation at quiescence, and JSON/CSV report emission.

#include <atomic>
#include <barrier>
#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <memory>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ccds/abtree.hpp"
#include "ccds/chromatic.hpp"
#include "ccds/kcas.hpp"
#include "ccds/multiset.hpp"
#include "ccds/ravl.hpp"
#include "ccds/reclaim.hpp"

using namespace ccds;
using Clock = std::chrono::steady_clock;

namespace {

struct Config {
  std::string ds = "chromatic";
  unsigned threads = 4;
  std::int64_t keyrange = 10000;
  unsigned u_ins = 50;
  unsigned u_del = 50;
  unsigned u_succ = 0;
  double seconds = 1.0;
  std::uint64_t ops = 0;  // when nonzero, run a fixed op count instead of timed
  std::uint64_t seed = 1;
  unsigned k_threshold = 6;
  unsigned ab_a = 6;
  unsigned ab_b = 16;
  unsigned kcas_k = 16;
  std::uint64_t array_size = 1u << 20;
  std::string format = "json";
  std::string validate = "on";
  double prefill_timeout = 30.0;
};

struct TrialReport {
  std::uint64_t ops_total = 0;
  double throughput_per_us = 0;
  bool checksum_ok = false;
  bool valid = false;
  TreeStats stats;
  double seconds = 0;
};

void emit(const Config& cfg, const TrialReport& r) {
  if (cfg.format == "csv") {
    std::printf(
        "ds,threads,keyrange,u_ins,u_del,ops_total,throughput_per_us,checksum_ok,valid,size,"
        "height,avg_leaf_depth,violations,seconds,seed\n");
    std::printf("%s,%u,%" PRId64 ",%u,%u,%" PRIu64 ",%.4f,%d,%d,%" PRIu64 ",%" PRIu64
                ",%.3f,%" PRIu64 ",%.3f,%" PRIu64 "\n",
                cfg.ds.c_str(), cfg.threads, cfg.keyrange, cfg.u_ins, cfg.u_del, r.ops_total,
                r.throughput_per_us, r.checksum_ok ? 1 : 0, r.valid ? 1 : 0, r.stats.size,
                r.stats.height, r.stats.avg_leaf_depth, r.stats.violations, r.seconds, cfg.seed);
  } else {
    nlohmann::json j{{"ds", cfg.ds},
                     {"threads", cfg.threads},
                     {"keyrange", cfg.keyrange},
                     {"u_ins", cfg.u_ins},
                     {"u_del", cfg.u_del},
                     {"ops_total", r.ops_total},
                     {"throughput_per_us", r.throughput_per_us},
                     {"checksum_ok", r.checksum_ok},
                     {"valid", r.valid},
                     {"size", r.stats.size},
                     {"height", r.stats.height},
                     {"avg_leaf_depth", r.stats.avg_leaf_depth},
                     {"violations", r.stats.violations},
                     {"seconds", r.seconds},
                     {"seed", cfg.seed}};
    std::printf("%s\n", j.dump().c_str());
  }
}

struct OpResult {
  bool changed = false;
  long long sum_delta = 0;  // contribution to the checksum-law sum
};

// A uniform face over the three trees and the multiset.
template <class Tree>
struct TreeAdapter {
  Tree t;
  template <class... A>
  explicit TreeAdapter(A&&... a) : t(std::forward<A>(a)...) {}

  OpResult insert(key_type k, std::mt19937_64&) {
    const bool added = !t.insert(k, static_cast<value_type>(k) + 7).has_value();
    return {added, added ? k : 0};
  }
  OpResult erase(key_type k, std::mt19937_64&) {
    const bool removed = t.erase(k).has_value();
    return {removed, removed ? -k : 0};
  }
  void get(key_type k) { (void)t.get(k); }
  long long key_sum() const { return t.key_sum(); }
  bool validate() const { return t.validate().ok(); }
  TreeStats stats() const { return t.stats(); }
};

struct MultisetAdapter {
  Multiset t;
  OpResult insert(key_type k, std::mt19937_64& rng) {
    const word_t c = 1 + (rng() % 3);
    t.insert(k, c);
    return {true, static_cast<long long>(k) * static_cast<long long>(c)};
  }
  OpResult erase(key_type k, std::mt19937_64& rng) {
    const word_t c = 1 + (rng() % 3);
    const bool removed = t.erase(k, c);
    return {removed, removed ? -static_cast<long long>(k) * static_cast<long long>(c) : 0};
  }
  void get(key_type k) { (void)t.get(k); }
  long long key_sum() const { return t.key_count_sum(); }
  bool validate() const { return t.validate().empty(); }
  TreeStats stats() const {
    TreeStats st;
    st.size = t.size();
    return st;
  }
};

struct WorkerTally {
  std::uint64_t ops = 0;
  long long sum_delta = 0;
};

template <class Adapter>
int run_dictionary(const Config& cfg, Adapter& dict) {
  std::atomic<bool> stop{false};
  std::atomic<bool> prefilling{true};
  std::atomic<std::int64_t> approx_size{0};
  std::vector<WorkerTally> tallies(cfg.threads);
  std::barrier sync(cfg.threads + 1);

  const unsigned mix_ins = cfg.u_ins + cfg.u_del == 0 ? 50 : cfg.u_ins;
  const unsigned mix_del = cfg.u_ins + cfg.u_del == 0 ? 50 : cfg.u_del;
  const double target = cfg.keyrange <= 0
                            ? 0.0
                            : static_cast<double>(cfg.keyrange) * mix_ins / (mix_ins + mix_del);

  std::vector<std::thread> workers;
  for (unsigned t = 0; t < cfg.threads; ++t) {
    workers.emplace_back([&, t] {
      threads::Registration reg;
      std::mt19937_64 rng(cfg.seed * 0x9e3779b97f4a7c15ull + t);
      std::uniform_int_distribution<key_type> keys(0, cfg.keyrange > 0 ? cfg.keyrange - 1 : 0);
      WorkerTally& tally = tallies[t];

      // Prefill: updates only, in the trial's insert:delete ratio.
      sync.arrive_and_wait();
      while (prefilling.load()) {
        const key_type k = keys(rng);
        OpResult r = rng() % (mix_ins + mix_del) < mix_ins ? dict.insert(k, rng)
                                                           : dict.erase(k, rng);
        tally.sum_delta += r.sum_delta;
        if (r.changed) approx_size.fetch_add(r.sum_delta >= 0 ? 1 : -1);
      }
      sync.arrive_and_wait();

      // Measurement.
      sync.arrive_and_wait();
      std::uint64_t done = 0;
      while (cfg.ops ? done < cfg.ops : !stop.load()) {
        const key_type k = keys(rng);
        const unsigned roll = rng() % 100;
        if (roll < cfg.u_ins) {
          tally.sum_delta += dict.insert(k, rng).sum_delta;
        } else if (roll < cfg.u_ins + cfg.u_del) {
          tally.sum_delta += dict.erase(k, rng).sum_delta;
        } else if (roll < cfg.u_ins + cfg.u_del + cfg.u_succ) {
          if constexpr (std::is_same_v<Adapter, TreeAdapter<ChromaticTree>>) {
            (void)dict.t.successor(k);
          } else {
            dict.get(k);
          }
        } else {
          dict.get(k);
        }
        ++done;
        ++tally.ops;
      }
      sync.arrive_and_wait();
    });
  }

  // Drive the prefill until the size settles near the expected steady state.
  sync.arrive_and_wait();
  const auto prefill_deadline =
      Clock::now() + std::chrono::duration_cast<Clock::duration>(
                         std::chrono::duration<double>(cfg.prefill_timeout));
  bool converged = cfg.keyrange <= 0;
  while (!converged && Clock::now() <= prefill_deadline) {
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
    const double sz = static_cast<double>(approx_size.load());
    if (std::fabs(sz - target) <= 0.05 * target) converged = true;
  }
  prefilling.store(false);
  sync.arrive_and_wait();

  // Measurement window.
  const auto t0 = Clock::now();
  sync.arrive_and_wait();
  if (!cfg.ops) {
    std::this_thread::sleep_for(std::chrono::duration<double>(cfg.seconds));
    stop.store(true);
  }
  sync.arrive_and_wait();
  const double elapsed = std::chrono::duration<double>(Clock::now() - t0).count();
  for (auto& w : workers) w.join();

  TrialReport rep;
  long long expected_sum = 0;
  for (const auto& tl : tallies) {
    rep.ops_total += tl.ops;
    expected_sum += tl.sum_delta;
  }
  rep.seconds = elapsed;
  rep.throughput_per_us = elapsed > 0 ? rep.ops_total / (elapsed * 1e6) : 0;
  rep.checksum_ok = dict.key_sum() == expected_sum;
  rep.valid = cfg.validate == "off" ? true : dict.validate();
  rep.stats = dict.stats();
  reclaim::flush_all();
  emit(cfg, rep);
  if (!converged) {
    std::fprintf(stderr, "prefill did not converge within the configured bound\n");
    return 2;
  }
  return rep.checksum_ok && rep.valid ? 0 : 1;
}

int run_kcas(const Config& cfg) {
  auto space = std::make_unique<KcasSpace>();
  std::vector<std::atomic<word_t>> arr(cfg.array_size);
  for (auto& a : arr) a.store(0);

  std::atomic<bool> stop{false};
  std::vector<std::uint64_t> successes(cfg.threads);
  std::vector<std::uint64_t> attempts(cfg.threads);
  std::barrier sync(cfg.threads + 1);
  std::vector<std::thread> workers;
  for (unsigned t = 0; t < cfg.threads; ++t) {
    workers.emplace_back([&, t] {
      threads::Registration reg;
      std::mt19937_64 rng(cfg.seed * 0x9e3779b97f4a7c15ull + t);
      std::uniform_int_distribution<std::uint64_t> idx(0, cfg.array_size - 1);
      std::vector<KcasSpace::Entry> es(cfg.kcas_k);
      std::vector<std::uint64_t> picked(cfg.kcas_k);
      sync.arrive_and_wait();
      std::uint64_t done = 0;
      while (cfg.ops ? done < cfg.ops : !stop.load()) {
        // k distinct uniform indices; values are stored shifted past the two
        // reserved flag bits.
        for (unsigned i = 0; i < cfg.kcas_k; ++i) {
        again:
          std::uint64_t x = idx(rng);
          for (unsigned j = 0; j < i; ++j) {
            if (picked[j] == x) goto again;
          }
          picked[i] = x;
          const word_t cur = space->kcas_read(&arr[x]);
          es[i] = {&arr[x], cur, cur + 4};
        }
        ++attempts[t];
        if (space->kcas(es.data(), cfg.kcas_k)) ++successes[t];
        ++done;
      }
    });
  }

  const auto t0 = Clock::now();
  sync.arrive_and_wait();
  if (!cfg.ops) {
    std::this_thread::sleep_for(std::chrono::duration<double>(cfg.seconds));
    stop.store(true);
  }
  for (auto& w : workers) w.join();
  const double elapsed = std::chrono::duration<double>(Clock::now() - t0).count();

  std::uint64_t total_succ = 0, total_ops = 0;
  for (unsigned t = 0; t < cfg.threads; ++t) {
    total_succ += successes[t];
    total_ops += attempts[t];
  }
  std::uint64_t array_sum = 0;
  for (auto& a : arr) array_sum += a.load() >> 2;

  TrialReport rep;
  rep.ops_total = total_ops;
  rep.seconds = elapsed;
  rep.throughput_per_us = elapsed > 0 ? total_ops / (elapsed * 1e6) : 0;
  rep.checksum_ok = array_sum == static_cast<std::uint64_t>(cfg.kcas_k) * total_succ;
  rep.valid = rep.checksum_ok && space->descriptor_slots_used() == 2 * cfg.threads;
  rep.stats.size = cfg.array_size;
  emit(cfg, rep);
  return rep.checksum_ok && rep.valid ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  Config cfg;
  CLI::App app{"Lock-free dictionary and k-CAS stress benchmark"};
  app.add_option("--ds", cfg.ds, "structure under test")
      ->check(CLI::IsMember(
          {"multiset", "chromatic", "chromatic-k", "ravl", "ravl-k", "abtree", "kcas"}));
  app.add_option("--threads", cfg.threads)->check(CLI::Range(1u, kMaxThreads - 1));
  app.add_option("--keyrange", cfg.keyrange);
  app.add_option("--insert", cfg.u_ins, "insert percentage");
  app.add_option("--delete", cfg.u_del, "delete percentage");
  app.add_option("--successor", cfg.u_succ, "successor percentage (chromatic only)");
  app.add_option("--seconds", cfg.seconds);
  app.add_option("--ops", cfg.ops, "fixed per-thread op count (overrides --seconds)");
  app.add_option("--seed", cfg.seed);
  app.add_option("--k-threshold", cfg.k_threshold, "violation threshold for the -k variants");
  app.add_option("--a", cfg.ab_a, "(a,b)-tree minimum degree");
  app.add_option("--b", cfg.ab_b, "(a,b)-tree maximum degree");
  app.add_option("--kcas-k", cfg.kcas_k)->check(CLI::Range(1u, KcasSpace::kMaxK));
  app.add_option("--array-size", cfg.array_size);
  app.add_option("--format", cfg.format)->check(CLI::IsMember({"json", "csv"}));
  app.add_option("--validate", cfg.validate)->check(CLI::IsMember({"on", "off"}));
  app.add_option("--prefill-timeout", cfg.prefill_timeout, "seconds");
  CLI11_PARSE(app, argc, argv);

  if (cfg.u_ins + cfg.u_del + cfg.u_succ > 100) {
    std::fprintf(stderr, "operation mix exceeds 100%%\n");
    return 2;
  }
  if (cfg.u_succ > 0 && cfg.ds != "chromatic") {
    std::fprintf(stderr, "--successor requires --ds chromatic\n");
    return 2;
  }

  if (cfg.ds == "multiset") {
    auto a = std::make_unique<MultisetAdapter>();
    return run_dictionary(cfg, *a);
  }
  if (cfg.ds == "chromatic") {
    auto a = std::make_unique<TreeAdapter<ChromaticTree>>(1u);
    return run_dictionary(cfg, *a);
  }
  if (cfg.ds == "chromatic-k") {
    auto a = std::make_unique<TreeAdapter<ChromaticTree>>(cfg.k_threshold);
    return run_dictionary(cfg, *a);
  }
  if (cfg.ds == "ravl") {
    auto a = std::make_unique<TreeAdapter<RavlTree>>(1u);
    return run_dictionary(cfg, *a);
  }
  if (cfg.ds == "ravl-k") {
    auto a = std::make_unique<TreeAdapter<RavlTree>>(cfg.k_threshold);
    return run_dictionary(cfg, *a);
  }
  if (cfg.ds == "abtree") {
    if (cfg.ab_a < 2 || cfg.ab_b < 2 * cfg.ab_a - 1 || cfg.ab_b > kAbMaxDegree) {
      std::fprintf(stderr, "need a >= 2, b >= 2a-1 and b <= %u\n", kAbMaxDegree);
      return 2;
    }
    auto a = std::make_unique<TreeAdapter<AbTree>>(cfg.ab_a, cfg.ab_b);
    return run_dictionary(cfg, *a);
  }
  return run_kcas(cfg);
}
