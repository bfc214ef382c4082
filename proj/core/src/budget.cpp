// Copyright 2026 The laiv Authors
// SPDX-License-Identifier: Apache-2.0

#include "laiv/budget.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "laiv/trace.hpp"

namespace laiv {

void CostModel::validate() const {
  if (bandwidth_bytes_per_s <= 0.0 || t_cc <= 0.0 || t_gc <= 0.0 ||
      parallel_slots < 1) {
    throw std::invalid_argument("cost model fields must be positive");
  }
}

MissProfile::MissProfile(std::vector<Sample> samples)
    : samples_(std::move(samples)) {
  if (samples_.empty()) {
    throw std::invalid_argument("miss profile needs at least one sample");
  }
  for (size_t i = 0; i < samples_.size(); ++i) {
    const auto& s = samples_[i];
    if (s.bytes < 0.0 || s.r_miss < 0.0 || s.r_miss > 1.0) {
      throw std::invalid_argument("miss profile sample out of range");
    }
    if (i > 0) {
      if (s.bytes <= samples_[i - 1].bytes) {
        throw std::invalid_argument("miss profile bytes must be increasing");
      }
      if (s.r_miss > samples_[i - 1].r_miss) {
        throw std::invalid_argument("miss profile must be non-increasing");
      }
    }
  }
}

double MissProfile::r_miss(double bytes) const {
  if (bytes <= samples_.front().bytes) return samples_.front().r_miss;
  if (bytes >= samples_.back().bytes) return samples_.back().r_miss;
  auto it = std::lower_bound(
      samples_.begin(), samples_.end(), bytes,
      [](const Sample& s, double b) { return s.bytes < b; });
  const Sample& hi = *it;
  const Sample& lo = *(it - 1);
  const double t = (bytes - lo.bytes) / (hi.bytes - lo.bytes);
  return lo.r_miss + t * (hi.r_miss - lo.r_miss);
}

double stage1_latency(double prefetch_bytes, double t_llm_s,
                      double bandwidth_bytes_per_s) {
  if (prefetch_bytes < 0.0 || t_llm_s < 0.0 || bandwidth_bytes_per_s <= 0.0) {
    throw std::invalid_argument("stage1_latency: invalid inputs");
  }
  if (prefetch_bytes <= bandwidth_bytes_per_s * t_llm_s) {
    return t_llm_s;
  }
  return prefetch_bytes / bandwidth_bytes_per_s;
}

double stage2_latency(int n_probe, double r_miss, const CostModel& cost) {
  if (n_probe < 1 || r_miss < 0.0 || r_miss > 1.0) {
    throw std::invalid_argument("stage2_latency: invalid inputs");
  }
  const double slow = r_miss * n_probe * cost.t_cc / cost.parallel_slots;
  const double fast = (1.0 - r_miss) * n_probe * cost.t_gc;
  return std::max(slow, fast);
}

double predicted_total_latency(const MissProfile& profile, double bytes,
                               double t_llm_s, int n_probe,
                               const CostModel& cost) {
  return stage1_latency(bytes, t_llm_s, cost.bandwidth_bytes_per_s) +
         stage2_latency(n_probe, profile.r_miss(bytes), cost);
}

BudgetDecision grid_sweep_budget(const MissProfile& profile, double t_llm_s,
                                 int n_probe, const CostModel& cost,
                                 int grid_points) {
  if (grid_points < 2) {
    throw std::invalid_argument("grid needs at least two points");
  }
  const double overlap_bound = cost.bandwidth_bytes_per_s * t_llm_s;
  const double hi = std::max(overlap_bound, profile.max_bytes());
  BudgetDecision best;
  best.predicted_total = std::numeric_limits<double>::infinity();
  for (int i = 0; i < grid_points; ++i) {
    const double b = hi * i / (grid_points - 1);
    const double total =
        predicted_total_latency(profile, b, t_llm_s, n_probe, cost);
    if (total < best.predicted_total) {
      best.predicted_total = total;
      best.b_star = b;
    }
  }
  best.predicted_t1 =
      stage1_latency(best.b_star, t_llm_s, cost.bandwidth_bytes_per_s);
  best.predicted_t2 = best.predicted_total - best.predicted_t1;
  best.kind = best.b_star > overlap_bound ? BudgetCase::InteriorMinimum
                                          : BudgetCase::OverlapBound;
  return best;
}

BudgetDecision optimal_budget(const MissProfile& profile, double t_llm_s,
                              int n_probe, const CostModel& cost,
                              const OptimalBudgetOptions& opts) {
  cost.validate();
  if (t_llm_s < 0.0) {
    throw std::invalid_argument("t_llm must be non-negative");
  }
  const double overlap_bound = cost.bandwidth_bytes_per_s * t_llm_s;

  // Candidate 1 is the overlap boundary: free prefetch is never harmful for
  // a non-increasing profile. Past the boundary the total is piecewise
  // linear in b (t1 linear, r_miss linear per segment), so any interior
  // minimum sits on a profile breakpoint; the stationarity condition picks
  // the breakpoints where the per-segment slope crosses -1/(B n t_cc).
  std::vector<double> candidates{overlap_bound};
  for (const auto& s : profile.samples()) {
    if (s.bytes > overlap_bound) {
      candidates.push_back(s.bytes);
    }
  }

  BudgetDecision best;
  best.predicted_total = std::numeric_limits<double>::infinity();
  for (double b : candidates) {
    const double total =
        predicted_total_latency(profile, b, t_llm_s, n_probe, cost);
    if (total < best.predicted_total) {
      best.predicted_total = total;
      best.b_star = b;
    }
  }
  best.predicted_t1 =
      stage1_latency(best.b_star, t_llm_s, cost.bandwidth_bytes_per_s);
  best.predicted_t2 = best.predicted_total - best.predicted_t1;
  best.kind = best.b_star > overlap_bound ? BudgetCase::InteriorMinimum
                                          : BudgetCase::OverlapBound;

  if (opts.verify_with_grid) {
    const BudgetDecision swept =
        grid_sweep_budget(profile, t_llm_s, n_probe, cost, opts.grid_points);
    const double hi = std::max(overlap_bound, profile.max_bytes());
    const double step = hi / (opts.grid_points - 1);
    if (swept.predicted_total < best.predicted_total &&
        std::abs(swept.b_star - best.b_star) > step) {
      throw std::logic_error("optimal_budget disagrees with the grid sweep");
    }
  }
  return best;
}

double calibrate_budget(const std::vector<QueryTrace>& traces,
                        std::optional<PipelineKind> pipeline,
                        double bandwidth_bytes_per_s) {
  if (bandwidth_bytes_per_s <= 0.0) {
    throw std::invalid_argument("bandwidth must be positive");
  }
  double sum = 0.0;
  size_t count = 0;
  for (const auto& trace : traces) {
    if (pipeline && trace.pipeline != *pipeline) continue;
    for (size_t i = 1; i < trace.stages.size(); ++i) {
      if (trace.stages[i].kind == StageKind::Retrieve &&
          trace.stages[i - 1].kind != StageKind::Retrieve) {
        sum += trace.stages[i - 1].duration_s;
        ++count;
      }
    }
  }
  if (count == 0) {
    throw std::runtime_error(
        "no pre-retrieval stage found in the calibration traces");
  }
  return (sum / static_cast<double>(count)) * bandwidth_bytes_per_s;
}

} // namespace laiv
