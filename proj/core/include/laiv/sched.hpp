// Copyright 2026 The laiv Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <unordered_set>
#include <vector>

#include "laiv/ivf.hpp"
#include "laiv/vectorstore.hpp"

namespace laiv {

/// Group of query indices served together by one worker.
struct MicroBatch {
  std::vector<size_t> queries;
};

/// Scheduling-time snapshot of one worker's fast tier.
struct WorkerState {
  uint32_t worker_id = 0;
  std::unordered_set<uint32_t> resident_clusters;
  uint64_t capacity_bytes = 0;
};

/// Greedy similarity grouping: the lowest-index unassigned query seeds a
/// batch and pulls in its m-1 nearest unassigned neighbors by embedding L2
/// (ties by ascending index). The output is a partition of the input.
std::vector<MicroBatch> group_microbatches(const EmbeddingMatrix& queries,
                                           size_t m);

/// Identity grouping: consecutive chunks of m in input order. The baseline
/// the prefetching scheduler is compared against.
std::vector<MicroBatch> chunk_microbatches(size_t n, size_t m);

/// Cache-aware assignment. overlap(batch, worker) counts the distinct probed
/// clusters of the batch present in the worker's snapshot; pairs are taken
/// in descending overlap (ties: lower batch, then lower current load, then
/// lower worker id) under a per-worker cap of ceil(#batches / #workers).
/// Returns batch index -> worker index.
std::vector<uint32_t> assign_cache_aware(const std::vector<MicroBatch>& batches,
                                         const std::vector<WorkerState>& workers,
                                         const IvfIndex& ix,
                                         const EmbeddingMatrix& queries, int L);

/// Round-robin baseline: batch i -> worker i mod W.
std::vector<uint32_t> assign_round_robin(size_t n_batches, size_t n_workers);

/// Total overlap score of an assignment (for the scheduler comparisons).
uint64_t assignment_overlap(const std::vector<MicroBatch>& batches,
                            const std::vector<WorkerState>& workers,
                            const std::vector<uint32_t>& assignment,
                            const IvfIndex& ix, const EmbeddingMatrix& queries,
                            int L);

/// Equal split of a byte budget over the batch: floor division with the
/// remainder granted to the lowest query indices. Sums exactly to the total.
std::vector<uint64_t> split_budget(uint64_t total_budget_bytes,
                                   const MicroBatch& batch);

} // namespace laiv
