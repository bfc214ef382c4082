// Copyright 2026 The laiv Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "laiv/ivf.hpp"
#include "laiv/vectorstore.hpp"

namespace laiv {

enum class StageKind : uint8_t { Generate = 0, Retrieve = 1, Judge = 2 };

std::string stage_kind_name(StageKind k);
StageKind stage_kind_from_name(const std::string& name);

enum class PipelineKind : uint8_t {
  HyDE = 0,
  SubQ = 1,
  Iter = 2,
  IRG = 3,
  FLARE = 4,
  SRag = 5,
  Custom = 6,
};

std::string pipeline_name(PipelineKind p);
PipelineKind pipeline_from_name(const std::string& name);
std::vector<PipelineKind> all_pipelines();

/// One recorded pipeline step.
///
/// embedding_ref indexes the sidecar embedding file; -1 means the stage
/// carries no embedding. For Generate stages the reference is the emitted
/// query (available when the stage completes); for Retrieve stages it is the
/// first of `fanout` consecutive consumed queries; for Judge stages it is the
/// examined input (available when the stage starts).
struct Stage {
  StageKind kind = StageKind::Generate;
  int64_t embedding_ref = -1;
  double duration_s = 0.0;
  uint32_t fanout = 1;

  bool operator==(const Stage&) const = default;
};

/// A recorded pipeline walk. Traces open with a zero-duration Generate stage
/// that carries the embedding of the user's initial query, so every later
/// retrieval has a prediction hint.
struct QueryTrace {
  uint64_t trace_id = 0;
  PipelineKind pipeline = PipelineKind::Custom;
  std::vector<Stage> stages;

  bool operator==(const QueryTrace&) const = default;
};

/// Traces plus their embedding sidecar.
struct TraceSet {
  std::vector<QueryTrace> traces;
  EmbeddingMatrix sidecar;
};

// Trace file: one JSON record per line with fields
// {schema_version, trace_id, pipeline, stages:[{kind, embedding_ref,
// duration_s, fanout}]}. Malformed records are rejected with line numbers.
void save_traces(const std::string& path,
                 const std::vector<QueryTrace>& traces);
std::vector<QueryTrace> load_traces(const std::string& path);

/// Structural validation against a sidecar of `sidecar_count` embeddings:
/// every referenced range [ref, ref+fanout) must be in bounds, every
/// Retrieve must carry a query, and every Retrieve must be preceded by a
/// stage that supplies one. Throws with the trace id on violation.
void validate_traces(const std::vector<QueryTrace>& traces,
                     size_t sidecar_count);

struct SynthOptions {
  double noise_sigma = 0.1;       // q_out = normalize(q_in + sigma * gauss)
  double duration_mean_s = 0.5;   // mean generation-stage duration
  double duration_sigma = 0.25;   // lognormal shape; 0 gives fixed durations
  uint32_t subq_fanout = 3;
  uint32_t rounds = 3;            // retrieval rounds for multi-round shapes
};

/// Seeded synthetic traces: q_in is drawn from the datastore vicinity and
/// normalized, q_out perturbs it by Gaussian noise of width sigma. Durations
/// come from a per-pipeline lognormal. Deterministic given the seed.
TraceSet synthesize_traces(const EmbeddingMatrix& db, const IvfIndex& ix,
                           size_t n, PipelineKind pipeline, uint64_t seed,
                           const SynthOptions& opts = {});

} // namespace laiv
