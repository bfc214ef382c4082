// Copyright 2026 The laiv Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "laiv/vectorstore.hpp"

namespace laiv {

struct IvfBuildOptions {
  uint64_t seed = 0;
  int max_iters = 25;
  // Normalize a working copy of the vectors before k-means. Assignment always
  // uses L2 regardless of the search metric.
  bool spherical = false;
};

/// Inverted-file index: k-means centroids plus per-cluster id lists.
/// Immutable after build; concurrent searches are safe.
class IvfIndex {
public:
  IvfIndex() = default;
  IvfIndex(EmbeddingMatrix centroids, std::vector<std::vector<uint64_t>> lists,
           Metric metric);

  uint32_t num_clusters() const {
    return static_cast<uint32_t>(lists_.size());
  }
  uint32_t dim() const { return centroids_.dim(); }
  Metric metric() const { return metric_; }
  const EmbeddingMatrix& centroids() const { return centroids_; }
  const std::vector<uint64_t>& list(uint32_t c) const { return lists_.at(c); }

  /// Serialized payload bytes of cluster c: |list| * (4*D + 8).
  uint64_t cluster_bytes(uint32_t c) const { return cluster_bytes_.at(c); }
  uint64_t total_payload_bytes() const;
  size_t total_vectors() const;

private:
  EmbeddingMatrix centroids_;
  std::vector<std::vector<uint64_t>> lists_;
  std::vector<uint64_t> cluster_bytes_;
  Metric metric_ = Metric::L2;
};

/// k-means++ seeding, deterministic from `seed`. Exposed so an independent
/// Lloyd implementation can be started from the same initialization.
EmbeddingMatrix kmeanspp_init(const EmbeddingMatrix& db, uint32_t k,
                              uint64_t seed, bool spherical = false);

/// Builds the index: k-means++ init, Lloyd iterations until assignment
/// fixpoint or max_iters, empty clusters re-seeded from the farthest point of
/// the largest cluster. Throws if n_clusters > N or N == 0.
IvfIndex build_index(const EmbeddingMatrix& db, uint32_t n_clusters,
                     const IvfBuildOptions& opts, Metric metric = Metric::L2);

/// Common probe-depth heuristic: 4 * sqrt(N_c), at least 1.
int default_nprobe(uint32_t n_clusters);

/// All clusters ranked best-first by centroid distance to q (metric
/// orientation, ties by ascending cluster id).
std::vector<uint32_t> rank_clusters(const IvfIndex& ix,
                                    std::span<const float> q);

/// Coarse probe: the min(L, N_c) best clusters.
std::vector<uint32_t> coarse_probe(const IvfIndex& ix,
                                   std::span<const float> q, int L);

/// Scores every member of `clusters` against q without ranking or
/// truncation: the raw per-candidate distance list the merge step sorts.
/// Throws on an unknown cluster id.
std::vector<ScoredId> score_clusters(const IvfIndex& ix,
                                     const EmbeddingMatrix& db,
                                     std::span<const float> q,
                                     std::span<const uint32_t> clusters);

/// Fine search restricted to `clusters`: the true best-k over the union of
/// their members. Throws on an unknown cluster id.
TopK search_clusters(const IvfIndex& ix, const EmbeddingMatrix& db,
                     std::span<const float> q,
                     std::span<const uint32_t> clusters, int k);

/// coarse_probe then search_clusters: the monolithic reference search.
TopK ivf_search(const IvfIndex& ix, const EmbeddingMatrix& db,
                std::span<const float> q, int L, int k);

// Index file: magic "LAIX", u32 version=1, u32 D, u32 N_c, u8 metric,
// centroid block, then per-cluster (u64 len, ids, vectors). Bit-exact
// round-trip: load_index followed by save_index reproduces the file.
void save_index(const std::string& path, const IvfIndex& ix,
                const EmbeddingMatrix& db);
std::pair<IvfIndex, EmbeddingMatrix> load_index(const std::string& path);

} // namespace laiv
