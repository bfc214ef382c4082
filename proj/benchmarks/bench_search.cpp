// Copyright 2026 The laiv Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "laiv/ivf.hpp"
#include "laiv/rng.hpp"
#include "laiv/sched.hpp"
#include "laiv/tiered.hpp"
#include "laiv/vectorstore.hpp"

namespace {

using namespace laiv;

EmbeddingMatrix make_db(size_t n, uint32_t dim, uint64_t seed) {
  Rng rng(seed);
  EmbeddingMatrix m(dim);
  m.reserve(n);
  std::vector<float> row(dim);
  for (size_t i = 0; i < n; ++i) {
    for (auto& x : row) x = float(rng.gaussian());
    m.append(i, row);
  }
  return m;
}

struct SearchFixture {
  EmbeddingMatrix db = make_db(16384, 64, 1);
  IvfIndex ix = build_index(db, 128, {.seed = 1});
  std::vector<float> q = [] {
    Rng rng(2);
    std::vector<float> v(64);
    for (auto& x : v) x = float(rng.gaussian());
    return v;
  }();
};

SearchFixture& fixture() {
  static SearchFixture f;
  return f;
}

void BM_ExactSearch(benchmark::State& state) {
  auto& f = fixture();
  for (auto _ : state) {
    benchmark::DoNotOptimize(exact_search(f.db, f.q, 10, Metric::L2));
  }
}
BENCHMARK(BM_ExactSearch);

void BM_IvfSearch(benchmark::State& state) {
  auto& f = fixture();
  const int L = int(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(ivf_search(f.ix, f.db, f.q, L, 10));
  }
}
BENCHMARK(BM_IvfSearch)->Arg(4)->Arg(16)->Arg(64)->Arg(128);

void BM_HybridSearch(benchmark::State& state) {
  auto& f = fixture();
  const int resident_pct = int(state.range(0));
  TieredStore store(1ull << 40);
  Rng rng(3);
  for (uint32_t c = 0; c < f.ix.num_clusters(); ++c) {
    if (rng.uniform() * 100 < resident_pct) {
      store.insert(c, f.ix.cluster_bytes(c), Residency::Prefetched);
    }
  }
  const CostModel cost;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        hybrid_search(f.ix, f.db, store, f.q, 32, 10, cost));
  }
}
BENCHMARK(BM_HybridSearch)->Arg(0)->Arg(50)->Arg(100);

void BM_PlanPrefetch(benchmark::State& state) {
  auto& f = fixture();
  TieredStore store(1ull << 40);
  const uint64_t budget = f.ix.total_payload_bytes() / 4;
  for (auto _ : state) {
    benchmark::DoNotOptimize(plan_prefetch(f.ix, f.q, budget, store));
  }
}
BENCHMARK(BM_PlanPrefetch);

void BM_BuildIndex(benchmark::State& state) {
  const auto db = make_db(4096, 16, 4);
  for (auto _ : state) {
    benchmark::DoNotOptimize(build_index(db, 64, {.seed = 1}));
  }
}
BENCHMARK(BM_BuildIndex)->Unit(benchmark::kMillisecond);

void BM_GroupMicrobatches(benchmark::State& state) {
  const auto queries = make_db(size_t(state.range(0)), 768, 5);
  for (auto _ : state) {
    benchmark::DoNotOptimize(group_microbatches(queries, 4));
  }
}
BENCHMARK(BM_GroupMicrobatches)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
