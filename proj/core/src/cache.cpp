// Copyright 2026 The laiv Authors
// SPDX-License-Identifier: Apache-2.0

#include "laiv/cache.hpp"

#include <algorithm>
#include <stdexcept>

namespace laiv {

void CacheParams::validate() const {
  if (h_init <= 0.0f || h_inc <= 0.0f) {
    throw std::invalid_argument("h_init and h_inc must be positive");
  }
  if (decay <= 1.0f) {
    throw std::invalid_argument("decay factor must exceed 1");
  }
  if (cache_fraction <= 0.0 || cache_fraction > 1.0) {
    throw std::invalid_argument("cache_fraction must be in (0, 1]");
  }
}

HotnessTable::HotnessTable(CacheParams params) : params_(params) {
  params_.validate();
}

void HotnessTable::on_fetch(uint32_t cluster) {
  hotness_[cluster] = params_.h_init;
}

void HotnessTable::end_of_round(const std::unordered_set<uint32_t>& used) {
  for (auto& [cluster, h] : hotness_) {
    h = h / params_.decay;
    if (used.count(cluster)) {
      h = h + params_.h_inc;
    }
  }
}

std::vector<uint32_t> HotnessTable::evict_to_fraction(TieredStore& store) {
  store.retag_all(Residency::Cached);

  const auto budget = static_cast<uint64_t>(
      params_.cache_fraction * static_cast<double>(store.capacity_bytes()));

  std::vector<uint32_t> order;
  order.reserve(store.resident().size());
  for (const auto& [cluster, entry] : store.resident()) {
    order.push_back(cluster);
  }
  std::sort(order.begin(), order.end(), [this](uint32_t a, uint32_t b) {
    const float ha = hotness_.count(a) ? hotness_.at(a) : 0.0f;
    const float hb = hotness_.count(b) ? hotness_.at(b) : 0.0f;
    if (ha != hb) return ha < hb;
    return a < b;
  });

  std::vector<uint32_t> evicted;
  for (uint32_t cluster : order) {
    if (store.used_bytes() <= budget) break;
    store.evict(cluster);
    hotness_.erase(cluster);
    evicted.push_back(cluster);
  }
  return evicted;
}

} // namespace laiv
