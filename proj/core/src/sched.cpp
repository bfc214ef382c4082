// Copyright 2026 The laiv Authors
// SPDX-License-Identifier: Apache-2.0

#include "laiv/sched.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace laiv {

namespace {

// Distinct clusters probed by any query of the batch.
std::unordered_set<uint32_t> batch_probe_union(const MicroBatch& batch,
                                               const IvfIndex& ix,
                                               const EmbeddingMatrix& queries,
                                               int L) {
  std::unordered_set<uint32_t> probed;
  for (size_t q : batch.queries) {
    for (uint32_t c : coarse_probe(ix, queries.row(q), L)) {
      probed.insert(c);
    }
  }
  return probed;
}

uint64_t overlap_score(const std::unordered_set<uint32_t>& probed,
                       const WorkerState& worker) {
  uint64_t score = 0;
  for (uint32_t c : probed) {
    score += worker.resident_clusters.count(c);
  }
  return score;
}

} // namespace

std::vector<MicroBatch> group_microbatches(const EmbeddingMatrix& queries,
                                           size_t m) {
  if (m < 1) {
    throw std::invalid_argument("micro-batch size must be >= 1");
  }
  const size_t n = queries.count();
  std::vector<MicroBatch> batches;
  std::vector<bool> assigned(n, false);
  std::vector<std::pair<double, size_t>> dists;
  dists.reserve(n);

  for (size_t seed = 0; seed < n; ++seed) {
    if (assigned[seed]) continue;
    MicroBatch batch;
    batch.queries.push_back(seed);
    assigned[seed] = true;

    dists.clear();
    for (size_t j = seed + 1; j < n; ++j) {
      if (assigned[j]) continue;
      dists.emplace_back(l2_sq_d(queries.row(seed), queries.row(j)), j);
    }
    const size_t take = std::min(m - 1, dists.size());
    std::partial_sort(dists.begin(), dists.begin() + take, dists.end());
    for (size_t t = 0; t < take; ++t) {
      batch.queries.push_back(dists[t].second);
      assigned[dists[t].second] = true;
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

std::vector<MicroBatch> chunk_microbatches(size_t n, size_t m) {
  if (m < 1) {
    throw std::invalid_argument("micro-batch size must be >= 1");
  }
  std::vector<MicroBatch> batches;
  for (size_t i = 0; i < n; i += m) {
    MicroBatch batch;
    for (size_t j = i; j < std::min(i + m, n); ++j) {
      batch.queries.push_back(j);
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

std::vector<uint32_t> assign_cache_aware(const std::vector<MicroBatch>& batches,
                                         const std::vector<WorkerState>& workers,
                                         const IvfIndex& ix,
                                         const EmbeddingMatrix& queries,
                                         int L) {
  if (workers.empty()) {
    throw std::invalid_argument("need at least one worker");
  }
  const size_t nb = batches.size();
  const size_t nw = workers.size();
  const size_t cap = (nb + nw - 1) / nw;

  std::vector<std::unordered_set<uint32_t>> probes(nb);
  for (size_t b = 0; b < nb; ++b) {
    probes[b] = batch_probe_union(batches[b], ix, queries, L);
  }
  std::vector<std::vector<uint64_t>> overlap(nb, std::vector<uint64_t>(nw));
  for (size_t b = 0; b < nb; ++b) {
    for (size_t w = 0; w < nw; ++w) {
      overlap[b][w] = overlap_score(probes[b], workers[w]);
    }
  }

  std::vector<uint32_t> assignment(nb, 0);
  std::vector<bool> placed(nb, false);
  std::vector<size_t> load(nw, 0);

  for (size_t step = 0; step < nb; ++step) {
    size_t best_b = nb, best_w = nw;
    uint64_t best_overlap = 0;
    bool found = false;
    for (size_t b = 0; b < nb; ++b) {
      if (placed[b]) continue;
      for (size_t w = 0; w < nw; ++w) {
        if (load[w] >= cap) continue;
        // Descending overlap; ties prefer the earlier batch, then the less
        // loaded worker (this is what makes zero-overlap degenerate to
        // round-robin), then the lower worker id.
        const bool better =
            !found || overlap[b][w] > best_overlap ||
            (overlap[b][w] == best_overlap &&
             (b < best_b ||
              (b == best_b && (load[w] < load[best_w] ||
                               (load[w] == load[best_w] && w < best_w)))));
        if (better) {
          found = true;
          best_b = b;
          best_w = w;
          best_overlap = overlap[b][w];
        }
      }
    }
    assignment[best_b] = static_cast<uint32_t>(best_w);
    placed[best_b] = true;
    load[best_w]++;
  }
  return assignment;
}

std::vector<uint32_t> assign_round_robin(size_t n_batches, size_t n_workers) {
  if (n_workers == 0) {
    throw std::invalid_argument("need at least one worker");
  }
  std::vector<uint32_t> assignment(n_batches);
  for (size_t b = 0; b < n_batches; ++b) {
    assignment[b] = static_cast<uint32_t>(b % n_workers);
  }
  return assignment;
}

uint64_t assignment_overlap(const std::vector<MicroBatch>& batches,
                            const std::vector<WorkerState>& workers,
                            const std::vector<uint32_t>& assignment,
                            const IvfIndex& ix, const EmbeddingMatrix& queries,
                            int L) {
  uint64_t total = 0;
  for (size_t b = 0; b < batches.size(); ++b) {
    total += overlap_score(batch_probe_union(batches[b], ix, queries, L),
                           workers[assignment[b]]);
  }
  return total;
}

std::vector<uint64_t> split_budget(uint64_t total_budget_bytes,
                                   const MicroBatch& batch) {
  const size_t n = batch.queries.size();
  if (n == 0) {
    throw std::invalid_argument("cannot split a budget over an empty batch");
  }
  const uint64_t base = total_budget_bytes / n;
  const uint64_t remainder = total_budget_bytes % n;

  // The remainder goes to the queries with the lowest indices, regardless of
  // their position in the batch.
  std::vector<size_t> by_id(n);
  for (size_t i = 0; i < n; ++i) by_id[i] = i;
  std::sort(by_id.begin(), by_id.end(), [&batch](size_t a, size_t b) {
    return batch.queries[a] < batch.queries[b];
  });

  std::vector<uint64_t> out(n, base);
  for (uint64_t r = 0; r < remainder; ++r) {
    out[by_id[r]] += 1;
  }
  return out;
}

} // namespace laiv
