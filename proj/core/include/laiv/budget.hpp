// Copyright 2026 The laiv Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <vector>

namespace laiv {

/// Latency cost model for the simulated clock.
struct CostModel {
  double bandwidth_bytes_per_s = 32e9; // fast/slow channel bandwidth B
  double t_cc = 1e-3;                  // slow-tier seconds per cluster
  double t_gc = 1e-5;                  // fast-tier seconds per cluster
  int parallel_slots = 1;             // P; slow-tier clusters served per slot

  /// Throws std::invalid_argument on non-positive fields.
  void validate() const;
  /// True when the fast tier is configured slower than the slow tier; the
  /// CLI warns on this but it is not an error.
  bool fast_tier_slower() const { return t_gc > t_cc; }
};

/// Empirical non-increasing map from prefetch bytes to miss rate, evaluated
/// by piecewise-linear interpolation and clamped beyond the sampled range.
class MissProfile {
public:
  struct Sample {
    double bytes;
    double r_miss;
  };

  /// Samples must be sorted by strictly increasing bytes, have r_miss in
  /// [0, 1], and be non-increasing. Throws otherwise, or when empty.
  explicit MissProfile(std::vector<Sample> samples);

  double r_miss(double bytes) const;
  const std::vector<Sample>& samples() const { return samples_; }
  double max_bytes() const { return samples_.back().bytes; }

private:
  std::vector<Sample> samples_;
};

enum class BudgetCase : uint8_t { OverlapBound = 0, InteriorMinimum = 1 };

struct BudgetDecision {
  double b_star = 0.0; // bytes
  BudgetCase kind = BudgetCase::OverlapBound;
  double predicted_t1 = 0.0;
  double predicted_t2 = 0.0;
  double predicted_total = 0.0;
};

/// Stage-1 latency: generation overlapped with a transfer of b_p bytes.
/// Piecewise: t_llm while the transfer fits the generation window, b_p/B
/// beyond it.
double stage1_latency(double prefetch_bytes, double t_llm_s,
                      double bandwidth_bytes_per_s);

/// Stage-2 latency: max of the slow-tier and fast-tier sides for an expected
/// miss rate. Slow side r_miss * n_probe * t_cc / P, fast side
/// (1 - r_miss) * n_probe * t_gc.
double stage2_latency(int n_probe, double r_miss, const CostModel& cost);

/// Total predicted latency at a given prefetch size.
double predicted_total_latency(const MissProfile& profile, double bytes,
                               double t_llm_s, int n_probe,
                               const CostModel& cost);

struct OptimalBudgetOptions {
  // Cross-check the closed-form candidates against a dense grid sweep and
  // throw if they disagree by more than one grid step.
  bool verify_with_grid = false;
  int grid_points = 10000;
};

/// Optimal prefetch size: evaluates the overlap boundary b = B * t_llm and
/// the interior candidates (profile breakpoints past the boundary, where the
/// piecewise-linear total can turn) and returns the argmin.
BudgetDecision optimal_budget(const MissProfile& profile, double t_llm_s,
                              int n_probe, const CostModel& cost,
                              const OptimalBudgetOptions& opts = {});

/// Brute-force argmin of the predicted total over a uniform grid on
/// [0, max(B*t_llm, profile.max_bytes())]. Test oracle and debug aid.
BudgetDecision grid_sweep_budget(const MissProfile& profile, double t_llm_s,
                                 int n_probe, const CostModel& cost,
                                 int grid_points = 10000);

struct QueryTrace;
enum class PipelineKind : uint8_t;

/// Profile-guided budget: mean duration of the pre-retrieval stages (the
/// stage immediately preceding each Retrieve) over the calibration traces,
/// times the bandwidth. `pipeline` filters the traces; nullopt keeps all.
/// Throws when no matching stage exists.
double calibrate_budget(const std::vector<QueryTrace>& traces,
                        std::optional<PipelineKind> pipeline,
                        double bandwidth_bytes_per_s);

} // namespace laiv
