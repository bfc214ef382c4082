// Copyright 2026 The laiv Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "laiv/budget.hpp"
#include "laiv/ivf.hpp"
#include "laiv/vectorstore.hpp"

namespace laiv {

enum class Residency : uint8_t { Prefetched = 0, Cached = 1 };

/// Capacity-limited fast tier. Tracks which clusters are resident and how
/// they got there; byte accounting is maintained incrementally and can be
/// recomputed from scratch for the invariant checks.
class TieredStore {
public:
  explicit TieredStore(uint64_t capacity_bytes)
      : capacity_bytes_(capacity_bytes) {}

  uint64_t capacity_bytes() const { return capacity_bytes_; }
  uint64_t used_bytes() const { return used_bytes_; }
  uint64_t free_bytes() const { return capacity_bytes_ - used_bytes_; }

  bool contains(uint32_t cluster) const {
    return resident_.count(cluster) != 0;
  }
  size_t resident_count() const { return resident_.size(); }
  const std::map<uint32_t, std::pair<Residency, uint64_t>>& resident() const {
    return resident_;
  }

  /// Throws if the cluster is already resident or capacity would be exceeded.
  void insert(uint32_t cluster, uint64_t bytes, Residency tag);
  /// Removes a resident cluster; returns its byte size.
  uint64_t evict(uint32_t cluster);
  void retag_all(Residency tag);
  void clear();

  /// Bytes held by clusters with the given tag.
  uint64_t bytes_with_tag(Residency tag) const;

  /// Recomputed from the resident map; equals used_bytes() by invariant.
  uint64_t recompute_used_bytes() const;

private:
  uint64_t capacity_bytes_;
  uint64_t used_bytes_ = 0;
  std::map<uint32_t, std::pair<Residency, uint64_t>> resident_;
};

/// Ordered whole-cluster transfer plan under a byte budget.
struct PrefetchPlan {
  std::vector<uint32_t> clusters; // transfer order, by q_in proximity
  uint64_t planned_bytes = 0;
  std::vector<uint32_t> skipped; // candidates that did not fit
};

enum class ChannelMode : uint8_t { SimulatedClock = 0, Measured = 1 };

/// Bandwidth-modeled fast/slow transfer channel.
struct TransferChannel {
  double bandwidth_bytes_per_s = 32e9;
  ChannelMode mode = ChannelMode::SimulatedClock;

  double transfer_time_s(uint64_t bytes) const {
    return static_cast<double>(bytes) / bandwidth_bytes_per_s;
  }
};

struct TransferReport {
  double t_p = 0.0; // seconds; simulated or wall-clock depending on mode
  std::vector<uint32_t> transferred;
  uint64_t bytes = 0;
  double overshoot_s = 0.0; // time past the overlap window, >= 0
};

struct HybridTiming {
  double t_g = 0.0; // fast-tier search time
  double t_c = 0.0; // slow-tier search time
  double t_2 = 0.0; // max(t_c, t_g)
};

struct HybridResult {
  TopK topk;
  std::vector<uint32_t> fast_clusters; // probed ∩ resident
  std::vector<uint32_t> slow_clusters; // probed \ resident
  double hit_rate = 0.0;
};

/// Walks the full centroid ranking of q_in and fills the budget with whole
/// non-resident clusters; a cluster that does not fit is skipped and the walk
/// continues with later candidates.
PrefetchPlan plan_prefetch(const IvfIndex& ix, std::span<const float> q_in,
                           uint64_t budget_bytes, const TieredStore& resident);

/// Makes the planned clusters resident (tag Prefetched). SimulatedClock mode
/// derives t_p from the plan bytes; Measured mode copies the actual payload
/// through a rate-limited copier (1 MB quanta) and reports wall-clock time.
/// Throws if the plan does not fit the remaining capacity.
TransferReport execute_prefetch(TieredStore& store, const PrefetchPlan& plan,
                                const TransferChannel& chan,
                                double overlap_window_s, const IvfIndex& ix,
                                const EmbeddingMatrix& db);

/// plan_prefetch + execute_prefetch for rounds >= 2 of a pipeline run: only
/// non-resident clusters are considered and the resident set never shrinks.
TransferReport incremental_prefetch(TieredStore& store, const IvfIndex& ix,
                                    std::span<const float> q_round,
                                    uint64_t budget_bytes,
                                    const TransferChannel& chan,
                                    const EmbeddingMatrix& db,
                                    double overlap_window_s = 0.0);

/// Probes with q_out, searches resident clusters on the fast tier and the
/// rest on the slow tier, and merges the per-candidate distance lists with a
/// global sort. The merged top-k equals ivf_search(ix, db, q_out, L, k)
/// exactly, scores and tie order included.
std::pair<HybridResult, HybridTiming>
hybrid_search(const IvfIndex& ix, const EmbeddingMatrix& db,
              const TieredStore& store, std::span<const float> q_out, int L,
              int k, const CostModel& cost);

/// Fraction of q_out's probe set also present in q_in's probe set of equal
/// size; denominator is the actual probe size min(L, N_c).
double coverage(const IvfIndex& ix, std::span<const float> q_in,
                std::span<const float> q_out, int L);

} // namespace laiv
