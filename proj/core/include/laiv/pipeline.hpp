// Copyright 2026 The laiv Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "laiv/budget.hpp"
#include "laiv/cache.hpp"
#include "laiv/sched.hpp"
#include "laiv/tiered.hpp"
#include "laiv/trace.hpp"

namespace laiv {

struct RunFlags {
  bool lookahead_on = true;
  bool prefetch_sched_on = false;
  bool cache_sched_on = false;
  bool cache_on = false;
};

struct RunConfig {
  int n_probe = 16;
  int top_k = 3;
  uint64_t prefetch_budget_bytes = 0;
  uint64_t capacity_bytes = 0;
  double cache_fraction = 0.5;
  CostModel cost;
  uint32_t workers = 1;
  size_t micro_batch = 1;
  ChannelMode mode = ChannelMode::SimulatedClock;
  RunFlags flags;
  float h_init = 1.0f;
  float h_inc = 1.0f;
  float decay = 2.0f;
  size_t warmup_traces = 0;
  // Re-run every hybrid retrieval through the monolithic search and fail the
  // run record if they ever differ.
  bool validate_exactness = true;
  uint64_t seed = 0;

  CacheParams cache_params() const {
    return {h_init, h_inc, decay, cache_fraction};
  }

  /// Throws on invalid fields. Clamps the prefetch budget to the capacity
  /// share left over for prefetching and returns a warning string when it
  /// had to; empty string otherwise.
  std::string validate_and_clamp();
};

// Key-value config file (one `key = value` per line, # comments). Any key can
// be overridden through the environment as LAIV_<UPPERCASED_KEY>.
RunConfig load_config(const std::string& path);
void save_config(const std::string& path, const RunConfig& cfg);

/// One retrieval query's outcome.
struct RetrievalRow {
  uint32_t round = 0;
  double t2 = 0.0;  // phase-level retrieval time charged to this query's phase
  double t_c = 0.0; // this query's slow-tier time
  double t_g = 0.0; // this query's fast-tier time
  double hit_rate = 0.0;
  double coverage = 0.0;
  uint32_t probed = 0;
  uint32_t fast = 0;
  uint32_t slow = 0;
  std::vector<uint64_t> result_ids;
};

struct TransferRow {
  uint32_t round = 0;
  uint64_t bytes = 0;
  double t_p = 0.0;
  uint32_t clusters = 0;
};

/// Per-trace timeline. total_s always equals gen_plain_s + overlap_s +
/// retrieve_s + tail_s (clock conservation).
struct TraceRow {
  uint64_t trace_id = 0;
  PipelineKind pipeline = PipelineKind::Custom;
  uint32_t worker = 0;
  uint32_t batch = 0;
  double total_s = 0.0;
  double gen_plain_s = 0.0; // stage time outside overlap windows, incl. tail
  double overlap_s = 0.0;   // sum of t1 = max(window, t_p) segments
  double retrieve_s = 0.0;  // sum of t2 segments
  double tail_s = 0.0;
  double transfer_s = 0.0;  // sum of t_p (overlapped; informational)
  uint64_t transfer_bytes = 0;
  std::vector<RetrievalRow> retrievals;
  std::vector<TransferRow> transfers;
};

struct BatchDecision {
  uint32_t batch = 0;
  uint32_t worker = 0;
  uint64_t overlap = 0;
};

/// End-of-run hotness snapshot of one worker's cache (debugging aid).
struct HotnessSnapshot {
  uint32_t worker = 0;
  std::map<uint32_t, float> hotness;
};

struct RunRecord {
  std::vector<TraceRow> rows;
  std::vector<BatchDecision> decisions;
  std::vector<HotnessSnapshot> hotness;
  double makespan_s = 0.0;
  uint32_t workers = 1;
  bool assertions_ok = true;
  std::vector<std::string> assertion_failures;
};

struct Aggregates {
  size_t traces = 0;
  size_t retrievals = 0;
  double mean_latency_s = 0.0;
  double mean_hit_rate = 0.0;
  double mean_coverage = 0.0;
  double mean_gen_s = 0.0;      // plain + overlap + tail
  double mean_retrieve_s = 0.0;
  double mean_transfer_s = 0.0;
  double total_transfer_bytes = 0.0;
  double throughput_qps = 0.0; // traces / makespan, 0 for per-pipeline slices
};

Aggregates aggregate(const std::vector<TraceRow>& rows, double makespan_s);
std::map<std::string, Aggregates>
aggregate_by_pipeline(const std::vector<TraceRow>& rows);

/// Stage decomposition used by the replay loop: each Retrieve turns into a
/// phase with the stage time before its overlap window, the window itself
/// (the duration of the stage immediately before the Retrieve), the
/// prediction hint available when the window starts, and the consumed
/// queries. Stage time after the last Retrieve is the tail.
struct TracePhase {
  double plain_before_s = 0.0;
  double window_s = 0.0;
  int64_t predictor_ref = -1;
  std::vector<int64_t> query_refs;
};

struct TraceWalk {
  std::vector<TracePhase> phases;
  double tail_s = 0.0;
};

TraceWalk decompose_trace(const QueryTrace& trace);

/// Replays one trace against a store (and optional cache) and advances them.
/// Equivalent to run_batch with one worker and micro-batch 1.
TraceRow run_single(const QueryTrace& trace, const IvfIndex& ix,
                    const EmbeddingMatrix& db, const EmbeddingMatrix& sidecar,
                    TieredStore& store, HotnessTable* hotness,
                    const RunConfig& cfg,
                    std::vector<std::string>* failures = nullptr);

/// Full replay: optional similarity grouping, optional cache-aware
/// assignment, independent per-worker clocks, cache update and eviction
/// after every micro-batch. Warm-up traces are served first and excluded
/// from the record.
RunRecord run_batch(const std::vector<QueryTrace>& traces,
                    const EmbeddingMatrix& sidecar, const IvfIndex& ix,
                    const EmbeddingMatrix& db, const RunConfig& cfg);

enum class ReportFormat : uint8_t { Table = 0, Csv = 1 };

/// Per-pipeline aggregate table plus an overall row. Deterministic ordering.
std::string render_report(const RunRecord& record, ReportFormat format);

// Records file: line-oriented JSON (a meta line, then one line per trace row
// and per scheduling decision).
void save_records(const std::string& path, const RunRecord& record);
RunRecord load_records(const std::string& path);

} // namespace laiv
