// Copyright 2026 The laiv Authors
// SPDX-License-Identifier: Apache-2.0

#include "laiv/trace.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

#include "laiv/rng.hpp"

namespace laiv {

namespace {

using nlohmann::json;

constexpr int kTraceSchemaVersion = 1;

json stage_to_json(const Stage& s) {
  return json{{"kind", stage_kind_name(s.kind)},
              {"embedding_ref", s.embedding_ref},
              {"duration_s", s.duration_s},
              {"fanout", s.fanout}};
}

Stage stage_from_json(const json& j) {
  Stage s;
  s.kind = stage_kind_from_name(j.at("kind").get<std::string>());
  s.embedding_ref = j.at("embedding_ref").get<int64_t>();
  s.duration_s = j.at("duration_s").get<double>();
  s.fanout = j.at("fanout").get<uint32_t>();
  if (s.duration_s < 0.0) {
    throw std::invalid_argument("negative stage duration");
  }
  if (s.fanout < 1) {
    throw std::invalid_argument("fanout must be >= 1");
  }
  return s;
}

// Normalize to unit L2 norm; zero vectors pass through unchanged.
void normalize(std::vector<float>& v) {
  double norm_sq = 0.0;
  for (float x : v) norm_sq += static_cast<double>(x) * x;
  const double norm = std::sqrt(norm_sq);
  if (norm == 0.0) return;
  for (float& x : v) x = static_cast<float>(x / norm);
}

} // namespace

std::string stage_kind_name(StageKind k) {
  switch (k) {
    case StageKind::Generate: return "Generate";
    case StageKind::Retrieve: return "Retrieve";
    case StageKind::Judge: return "Judge";
  }
  throw std::logic_error("bad stage kind");
}

StageKind stage_kind_from_name(const std::string& name) {
  if (name == "Generate") return StageKind::Generate;
  if (name == "Retrieve") return StageKind::Retrieve;
  if (name == "Judge") return StageKind::Judge;
  throw std::invalid_argument("unknown stage kind: " + name);
}

std::string pipeline_name(PipelineKind p) {
  switch (p) {
    case PipelineKind::HyDE: return "HyDE";
    case PipelineKind::SubQ: return "SubQ";
    case PipelineKind::Iter: return "Iter";
    case PipelineKind::IRG: return "IRG";
    case PipelineKind::FLARE: return "FLARE";
    case PipelineKind::SRag: return "S-RAG";
    case PipelineKind::Custom: return "custom";
  }
  throw std::logic_error("bad pipeline kind");
}

PipelineKind pipeline_from_name(const std::string& name) {
  for (PipelineKind p : all_pipelines()) {
    if (pipeline_name(p) == name) return p;
  }
  throw std::invalid_argument("unknown pipeline: " + name);
}

std::vector<PipelineKind> all_pipelines() {
  return {PipelineKind::HyDE, PipelineKind::SubQ,  PipelineKind::Iter,
          PipelineKind::IRG,  PipelineKind::FLARE, PipelineKind::SRag,
          PipelineKind::Custom};
}

void save_traces(const std::string& path,
                 const std::vector<QueryTrace>& traces) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot open for writing: " + path);
  }
  for (const auto& trace : traces) {
    json stages = json::array();
    for (const auto& s : trace.stages) {
      stages.push_back(stage_to_json(s));
    }
    const json record{{"schema_version", kTraceSchemaVersion},
                      {"trace_id", trace.trace_id},
                      {"pipeline", pipeline_name(trace.pipeline)},
                      {"stages", stages}};
    out << record.dump() << "\n";
  }
  if (!out) {
    throw std::runtime_error("write failed: " + path);
  }
}

std::vector<QueryTrace> load_traces(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open: " + path);
  }
  std::vector<QueryTrace> traces;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json record;
    try {
      record = json::parse(line);
      const int version = record.at("schema_version").get<int>();
      if (version != kTraceSchemaVersion) {
        throw std::invalid_argument("schema_version " +
                                    std::to_string(version) +
                                    " does not match expected " +
                                    std::to_string(kTraceSchemaVersion));
      }
      QueryTrace trace;
      trace.trace_id = record.at("trace_id").get<uint64_t>();
      trace.pipeline =
          pipeline_from_name(record.at("pipeline").get<std::string>());
      for (const auto& js : record.at("stages")) {
        trace.stages.push_back(stage_from_json(js));
      }
      traces.push_back(std::move(trace));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " +
                               e.what());
    }
  }
  return traces;
}

void validate_traces(const std::vector<QueryTrace>& traces,
                     size_t sidecar_count) {
  for (const auto& trace : traces) {
    const std::string where = "trace " + std::to_string(trace.trace_id);
    bool have_ref = false;
    for (const auto& s : trace.stages) {
      if (s.embedding_ref >= 0) {
        const uint64_t end =
            static_cast<uint64_t>(s.embedding_ref) + s.fanout;
        if (end > sidecar_count) {
          throw std::runtime_error(
              where + ": embedding_ref " + std::to_string(s.embedding_ref) +
              " (+fanout " + std::to_string(s.fanout) +
              ") dangles past sidecar of " + std::to_string(sidecar_count));
        }
      }
      if (s.kind == StageKind::Retrieve) {
        if (s.embedding_ref < 0) {
          throw std::runtime_error(where + ": Retrieve stage has no query");
        }
        if (!have_ref) {
          throw std::runtime_error(
              where + ": Retrieve has no preceding stage with an embedding");
        }
      }
      if (s.embedding_ref >= 0) have_ref = true;
    }
  }
}

TraceSet synthesize_traces(const EmbeddingMatrix& db, const IvfIndex& ix,
                           size_t n, PipelineKind pipeline, uint64_t seed,
                           const SynthOptions& opts) {
  if (opts.noise_sigma < 0.0) {
    throw std::invalid_argument("noise sigma must be non-negative");
  }
  if (db.empty()) {
    throw std::invalid_argument("cannot synthesize from an empty datastore");
  }
  const uint32_t d = db.dim();
  Rng rng(derive_seed(seed, "synth:" + pipeline_name(pipeline)));

  TraceSet out;
  out.sidecar = EmbeddingMatrix(d);

  // q_in sits near a datastore row; q_out perturbs q_in. Both normalized so
  // sigma=0 collapses them to the same vector under either metric.
  auto draw_q_in = [&]() {
    const size_t row = rng.index(db.count());
    std::vector<float> q(db.row(row).begin(), db.row(row).end());
    for (float& x : q) {
      x += static_cast<float>(0.01 * rng.gaussian());
    }
    normalize(q);
    return q;
  };
  auto perturb = [&](const std::vector<float>& q_in) {
    if (opts.noise_sigma == 0.0) return q_in; // bit-identical, coverage 1
    std::vector<float> q(q_in);
    for (float& x : q) {
      x += static_cast<float>(opts.noise_sigma * rng.gaussian());
    }
    normalize(q);
    return q;
  };
  auto push_embedding = [&](const std::vector<float>& v) {
    const int64_t ref = static_cast<int64_t>(out.sidecar.count());
    out.sidecar.append(static_cast<uint64_t>(ref), v);
    return ref;
  };
  auto gen_duration = [&]() {
    if (opts.duration_sigma == 0.0) return opts.duration_mean_s;
    // Lognormal with the configured mean: mu = ln(mean) - sigma^2/2.
    const double mu = std::log(opts.duration_mean_s) -
                      0.5 * opts.duration_sigma * opts.duration_sigma;
    return rng.lognormal(mu, opts.duration_sigma);
  };

  for (size_t t = 0; t < n; ++t) {
    QueryTrace trace;
    trace.trace_id = t;
    trace.pipeline = pipeline;

    const std::vector<float> q0 = draw_q_in();
    const int64_t q0_ref = push_embedding(q0);
    // Query arrival: the embedding step, zero generation time.
    trace.stages.push_back({StageKind::Generate, q0_ref, 0.0, 1});

    switch (pipeline) {
      case PipelineKind::HyDE: {
        const int64_t qh = push_embedding(perturb(q0));
        trace.stages.push_back({StageKind::Generate, qh, gen_duration(), 1});
        trace.stages.push_back({StageKind::Retrieve, qh, 0.0, 1});
        trace.stages.push_back({StageKind::Generate, -1, gen_duration(), 1});
        break;
      }
      case PipelineKind::SubQ: {
        const uint32_t fanout = std::max(2u, opts.subq_fanout);
        int64_t first = -1;
        for (uint32_t f = 0; f < fanout; ++f) {
          const int64_t ref = push_embedding(perturb(q0));
          if (f == 0) first = ref;
        }
        trace.stages.push_back(
            {StageKind::Generate, first, gen_duration(), fanout});
        trace.stages.push_back({StageKind::Retrieve, first, 0.0, fanout});
        trace.stages.push_back({StageKind::Generate, -1, gen_duration(), 1});
        break;
      }
      case PipelineKind::Iter: {
        std::vector<float> prev = q0;
        for (uint32_t r = 0; r < std::max(2u, opts.rounds); ++r) {
          prev = perturb(prev);
          const int64_t qr = push_embedding(prev);
          trace.stages.push_back({StageKind::Generate, qr, gen_duration(), 1});
          trace.stages.push_back({StageKind::Retrieve, qr, 0.0, 1});
          trace.stages.push_back(
              {StageKind::Judge, -1, 0.1 * gen_duration(), 1});
        }
        break;
      }
      case PipelineKind::IRG: {
        std::vector<float> prev = q0;
        for (uint32_t r = 0; r < 3; ++r) {
          prev = perturb(prev);
          const int64_t qr = push_embedding(prev);
          trace.stages.push_back({StageKind::Generate, qr, gen_duration(), 1});
          trace.stages.push_back({StageKind::Retrieve, qr, 0.0, 1});
        }
        trace.stages.push_back({StageKind::Generate, -1, gen_duration(), 1});
        break;
      }
      case PipelineKind::FLARE: {
        const uint32_t rounds =
            std::max(2u, 2u + static_cast<uint32_t>(rng.index(3)));
        std::vector<float> prev = q0;
        for (uint32_t r = 0; r < rounds; ++r) {
          prev = perturb(prev);
          const int64_t qr = push_embedding(prev);
          trace.stages.push_back({StageKind::Generate, qr, gen_duration(), 1});
          trace.stages.push_back({StageKind::Retrieve, qr, 0.0, 1});
        }
        trace.stages.push_back({StageKind::Generate, -1, gen_duration(), 1});
        break;
      }
      case PipelineKind::SRag: {
        // No query transform: every round retrieves with the original query,
        // and the answer generations emit no query embedding.
        for (uint32_t r = 0; r < std::max(2u, opts.rounds); ++r) {
          trace.stages.push_back(
              {StageKind::Judge, -1, 0.2 * gen_duration(), 1});
          trace.stages.push_back({StageKind::Retrieve, q0_ref, 0.0, 1});
          trace.stages.push_back(
              {StageKind::Generate, -1, gen_duration(), 1});
          trace.stages.push_back(
              {StageKind::Judge, -1, 0.1 * gen_duration(), 1});
        }
        break;
      }
      case PipelineKind::Custom: {
        const int64_t q1 = push_embedding(perturb(q0));
        trace.stages.push_back({StageKind::Generate, q1, gen_duration(), 1});
        trace.stages.push_back({StageKind::Retrieve, q1, 0.0, 1});
        break;
      }
    }
    out.traces.push_back(std::move(trace));
  }
  validate_traces(out.traces, out.sidecar.count());
  return out;
}

} // namespace laiv
