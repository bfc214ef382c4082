// Copyright 2026 The laiv Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <unordered_set>
#include <vector>

#include "laiv/tiered.hpp"

namespace laiv {

struct CacheParams {
  float h_init = 1.0f;
  float h_inc = 1.0f;
  float decay = 2.0f; // d > 1
  double cache_fraction = 0.5;

  void validate() const;
};

/// Decay-based hotness tracking for clusters retained in the fast tier.
/// Hotness is float32 end to end; the round transition is
///   h' = h / d            when unused,
///   h' = h / d + h_inc    when used.
class HotnessTable {
public:
  explicit HotnessTable(CacheParams params = {});

  const CacheParams& params() const { return params_; }

  /// Registers a newly resident cluster at h_init. A re-fetch after eviction
  /// resets the entry.
  void on_fetch(uint32_t cluster);

  /// Applies the decay transition to every tracked cluster. Entries are
  /// independent, so the update is order-free.
  void end_of_round(const std::unordered_set<uint32_t>& used);

  /// Retags the just-served batch's Prefetched clusters to Cached, then
  /// evicts in ascending hotness (ties by ascending id) until cached bytes
  /// fit cache_fraction * capacity. Returns the evicted ids in order.
  std::vector<uint32_t> evict_to_fraction(TieredStore& store);

  void forget(uint32_t cluster) { hotness_.erase(cluster); }
  void clear() { hotness_.clear(); }
  bool tracked(uint32_t cluster) const { return hotness_.count(cluster) != 0; }
  float hotness(uint32_t cluster) const { return hotness_.at(cluster); }
  const std::map<uint32_t, float>& snapshot() const { return hotness_; }

private:
  CacheParams params_;
  std::map<uint32_t, float> hotness_;
};

} // namespace laiv
