// Copyright 2026 The laiv Authors
// SPDX-License-Identifier: Apache-2.0

#include "laiv/tiered.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <thread>
#include <unordered_set>

namespace laiv {

void TieredStore::insert(uint32_t cluster, uint64_t bytes, Residency tag) {
  if (resident_.count(cluster)) {
    throw std::logic_error("cluster " + std::to_string(cluster) +
                           " is already resident");
  }
  if (used_bytes_ + bytes > capacity_bytes_) {
    throw std::runtime_error("fast tier capacity exceeded inserting cluster " +
                             std::to_string(cluster));
  }
  resident_.emplace(cluster, std::make_pair(tag, bytes));
  used_bytes_ += bytes;
}

uint64_t TieredStore::evict(uint32_t cluster) {
  auto it = resident_.find(cluster);
  if (it == resident_.end()) {
    throw std::logic_error("evicting non-resident cluster " +
                           std::to_string(cluster));
  }
  const uint64_t bytes = it->second.second;
  used_bytes_ -= bytes;
  resident_.erase(it);
  return bytes;
}

void TieredStore::retag_all(Residency tag) {
  for (auto& [cluster, entry] : resident_) {
    entry.first = tag;
  }
}

void TieredStore::clear() {
  resident_.clear();
  used_bytes_ = 0;
}

uint64_t TieredStore::bytes_with_tag(Residency tag) const {
  uint64_t total = 0;
  for (const auto& [cluster, entry] : resident_) {
    if (entry.first == tag) total += entry.second;
  }
  return total;
}

uint64_t TieredStore::recompute_used_bytes() const {
  uint64_t total = 0;
  for (const auto& [cluster, entry] : resident_) {
    total += entry.second;
  }
  return total;
}

PrefetchPlan plan_prefetch(const IvfIndex& ix, std::span<const float> q_in,
                           uint64_t budget_bytes,
                           const TieredStore& resident) {
  PrefetchPlan plan;
  uint64_t remaining = budget_bytes;
  for (uint32_t c : rank_clusters(ix, q_in)) {
    if (resident.contains(c)) continue;
    const uint64_t bytes = ix.cluster_bytes(c);
    if (bytes <= remaining) {
      plan.clusters.push_back(c);
      plan.planned_bytes += bytes;
      remaining -= bytes;
    } else {
      plan.skipped.push_back(c);
    }
  }
  return plan;
}

TransferReport execute_prefetch(TieredStore& store, const PrefetchPlan& plan,
                                const TransferChannel& chan,
                                double overlap_window_s, const IvfIndex& ix,
                                const EmbeddingMatrix& db) {
  TransferReport report;
  if (chan.mode == ChannelMode::Measured) {
    // Rate-limited copy in 1 MB quanta so the wall-clock time tracks the
    // modeled bandwidth without OS-level DMA machinery.
    const auto start = std::chrono::steady_clock::now();
    constexpr uint64_t kQuantum = 1 << 20;
    std::vector<float> scratch;
    uint64_t copied = 0;
    for (uint32_t c : plan.clusters) {
      for (uint64_t id : ix.list(c)) {
        const auto row = db.row_of(id);
        if (row) {
          auto src = db.row(*row);
          scratch.assign(src.begin(), src.end());
          copied += src.size() * sizeof(float) + sizeof(uint64_t);
        }
        if (copied >= kQuantum) {
          const double target_s =
              static_cast<double>(report.bytes + copied) /
              chan.bandwidth_bytes_per_s;
          const auto target =
              start + std::chrono::duration_cast<
                          std::chrono::steady_clock::duration>(
                          std::chrono::duration<double>(target_s));
          std::this_thread::sleep_until(target);
          report.bytes += copied;
          copied = 0;
        }
      }
      store.insert(c, ix.cluster_bytes(c), Residency::Prefetched);
      report.transferred.push_back(c);
    }
    report.bytes += copied;
    report.t_p = std::chrono::duration<double>(
                     std::chrono::steady_clock::now() - start)
                     .count();
  } else {
    for (uint32_t c : plan.clusters) {
      store.insert(c, ix.cluster_bytes(c), Residency::Prefetched);
      report.transferred.push_back(c);
    }
    report.bytes = plan.planned_bytes;
    report.t_p = chan.transfer_time_s(plan.planned_bytes);
  }
  report.overshoot_s = std::max(0.0, report.t_p - overlap_window_s);
  return report;
}

TransferReport incremental_prefetch(TieredStore& store, const IvfIndex& ix,
                                    std::span<const float> q_round,
                                    uint64_t budget_bytes,
                                    const TransferChannel& chan,
                                    const EmbeddingMatrix& db,
                                    double overlap_window_s) {
  const PrefetchPlan plan = plan_prefetch(ix, q_round, budget_bytes, store);
  return execute_prefetch(store, plan, chan, overlap_window_s, ix, db);
}

std::pair<HybridResult, HybridTiming>
hybrid_search(const IvfIndex& ix, const EmbeddingMatrix& db,
              const TieredStore& store, std::span<const float> q_out, int L,
              int k, const CostModel& cost) {
  const auto probe = coarse_probe(ix, q_out, L);

  HybridResult result;
  for (uint32_t c : probe) {
    if (store.contains(c)) {
      result.fast_clusters.push_back(c);
    } else {
      result.slow_clusters.push_back(c);
    }
  }

  // Each side scores its clusters independently and contributes its full
  // per-candidate distance list; the merge is a global sort over the
  // combined lists, so the result matches the monolithic ranking no matter
  // how the probe is partitioned.
  std::vector<ScoredId> fast =
      score_clusters(ix, db, q_out, result.fast_clusters);
  std::vector<ScoredId> slow =
      score_clusters(ix, db, q_out, result.slow_clusters);

  result.topk.k = k;
  result.topk.entries.reserve(fast.size() + slow.size());
  result.topk.entries.insert(result.topk.entries.end(), fast.begin(),
                             fast.end());
  result.topk.entries.insert(result.topk.entries.end(), slow.begin(),
                             slow.end());
  const Metric m = ix.metric();
  std::sort(result.topk.entries.begin(), result.topk.entries.end(),
            [m](const ScoredId& a, const ScoredId& b) {
              return ranks_before(m, a, b);
            });
  if (result.topk.entries.size() > static_cast<size_t>(k)) {
    result.topk.entries.resize(k);
  }

  result.hit_rate =
      probe.empty() ? 0.0
                    : static_cast<double>(result.fast_clusters.size()) /
                          static_cast<double>(probe.size());

  HybridTiming timing;
  const auto miss = static_cast<double>(result.slow_clusters.size());
  timing.t_c = std::ceil(miss / cost.parallel_slots) * cost.t_cc;
  timing.t_g = static_cast<double>(result.fast_clusters.size()) * cost.t_gc;
  timing.t_2 = std::max(timing.t_c, timing.t_g);
  return {std::move(result), timing};
}

double coverage(const IvfIndex& ix, std::span<const float> q_in,
                std::span<const float> q_out, int L) {
  const auto in_probe = coarse_probe(ix, q_in, L);
  const auto out_probe = coarse_probe(ix, q_out, L);
  if (out_probe.empty()) return 0.0;
  const std::unordered_set<uint32_t> in_set(in_probe.begin(), in_probe.end());
  size_t overlap = 0;
  for (uint32_t c : out_probe) {
    overlap += in_set.count(c);
  }
  return static_cast<double>(overlap) / static_cast<double>(out_probe.size());
}

} // namespace laiv
