// Copyright 2026 The laiv Authors
// SPDX-License-Identifier: Apache-2.0

#include "laiv/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iterator>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "json.hpp"

namespace laiv {

namespace {

using nlohmann::json;

constexpr int kRecordSchemaVersion = 1;

std::string fmt_full(double v) {
  std::ostringstream ss;
  ss << std::setprecision(17) << v;
  return ss.str();
}

// ---------------------------------------------------------------------------
// Config file

struct ConfigField {
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw std::invalid_argument("expected a boolean, got '" + v + "'");
}

uint64_t parse_u64(const std::string& v) {
  const double d = std::stod(v);
  if (d < 0.0 || d != std::floor(d) || d > 9.007199254740992e15) {
    throw std::invalid_argument("expected a non-negative integer, got '" + v +
                                "'");
  }
  return static_cast<uint64_t>(d);
}

const std::vector<ConfigField>& config_fields() {
  static const std::vector<ConfigField> fields = {
      {"n_probe", [](RunConfig& c, const std::string& v) { c.n_probe = std::stoi(v); },
       [](const RunConfig& c) { return std::to_string(c.n_probe); }},
      {"top_k", [](RunConfig& c, const std::string& v) { c.top_k = std::stoi(v); },
       [](const RunConfig& c) { return std::to_string(c.top_k); }},
      {"prefetch_budget_bytes",
       [](RunConfig& c, const std::string& v) { c.prefetch_budget_bytes = parse_u64(v); },
       [](const RunConfig& c) { return std::to_string(c.prefetch_budget_bytes); }},
      {"capacity_bytes",
       [](RunConfig& c, const std::string& v) { c.capacity_bytes = parse_u64(v); },
       [](const RunConfig& c) { return std::to_string(c.capacity_bytes); }},
      {"cache_fraction",
       [](RunConfig& c, const std::string& v) { c.cache_fraction = std::stod(v); },
       [](const RunConfig& c) { return fmt_full(c.cache_fraction); }},
      {"bandwidth_bytes_per_s",
       [](RunConfig& c, const std::string& v) { c.cost.bandwidth_bytes_per_s = std::stod(v); },
       [](const RunConfig& c) { return fmt_full(c.cost.bandwidth_bytes_per_s); }},
      {"t_cc", [](RunConfig& c, const std::string& v) { c.cost.t_cc = std::stod(v); },
       [](const RunConfig& c) { return fmt_full(c.cost.t_cc); }},
      {"t_gc", [](RunConfig& c, const std::string& v) { c.cost.t_gc = std::stod(v); },
       [](const RunConfig& c) { return fmt_full(c.cost.t_gc); }},
      {"parallel_slots",
       [](RunConfig& c, const std::string& v) { c.cost.parallel_slots = std::stoi(v); },
       [](const RunConfig& c) { return std::to_string(c.cost.parallel_slots); }},
      {"workers",
       [](RunConfig& c, const std::string& v) { c.workers = static_cast<uint32_t>(std::stoul(v)); },
       [](const RunConfig& c) { return std::to_string(c.workers); }},
      {"micro_batch",
       [](RunConfig& c, const std::string& v) { c.micro_batch = std::stoul(v); },
       [](const RunConfig& c) { return std::to_string(c.micro_batch); }},
      {"mode",
       [](RunConfig& c, const std::string& v) {
         if (v == "simulated") c.mode = ChannelMode::SimulatedClock;
         else if (v == "measured") c.mode = ChannelMode::Measured;
         else throw std::invalid_argument("mode must be simulated or measured");
       },
       [](const RunConfig& c) {
         return std::string(c.mode == ChannelMode::SimulatedClock ? "simulated"
                                                                  : "measured");
       }},
      {"lookahead_on",
       [](RunConfig& c, const std::string& v) { c.flags.lookahead_on = parse_bool(v); },
       [](const RunConfig& c) { return std::string(c.flags.lookahead_on ? "true" : "false"); }},
      {"prefetch_sched_on",
       [](RunConfig& c, const std::string& v) { c.flags.prefetch_sched_on = parse_bool(v); },
       [](const RunConfig& c) { return std::string(c.flags.prefetch_sched_on ? "true" : "false"); }},
      {"cache_sched_on",
       [](RunConfig& c, const std::string& v) { c.flags.cache_sched_on = parse_bool(v); },
       [](const RunConfig& c) { return std::string(c.flags.cache_sched_on ? "true" : "false"); }},
      {"cache_on",
       [](RunConfig& c, const std::string& v) { c.flags.cache_on = parse_bool(v); },
       [](const RunConfig& c) { return std::string(c.flags.cache_on ? "true" : "false"); }},
      {"h_init", [](RunConfig& c, const std::string& v) { c.h_init = std::stof(v); },
       [](const RunConfig& c) { return fmt_full(c.h_init); }},
      {"h_inc", [](RunConfig& c, const std::string& v) { c.h_inc = std::stof(v); },
       [](const RunConfig& c) { return fmt_full(c.h_inc); }},
      {"decay", [](RunConfig& c, const std::string& v) { c.decay = std::stof(v); },
       [](const RunConfig& c) { return fmt_full(c.decay); }},
      {"warmup_traces",
       [](RunConfig& c, const std::string& v) { c.warmup_traces = std::stoul(v); },
       [](const RunConfig& c) { return std::to_string(c.warmup_traces); }},
      {"validate_exactness",
       [](RunConfig& c, const std::string& v) { c.validate_exactness = parse_bool(v); },
       [](const RunConfig& c) { return std::string(c.validate_exactness ? "true" : "false"); }},
      {"seed", [](RunConfig& c, const std::string& v) { c.seed = parse_u64(v); },
       [](const RunConfig& c) { return std::to_string(c.seed); }},
  };
  return fields;
}

std::string env_key(const std::string& key) {
  std::string out = "LAIV_";
  for (char c : key) {
    out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  }
  return out;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

} // namespace

std::string RunConfig::validate_and_clamp() {
  cost.validate();
  if (n_probe < 1 || top_k < 1) {
    throw std::invalid_argument("n_probe and top_k must be >= 1");
  }
  if (workers < 1 || micro_batch < 1) {
    throw std::invalid_argument("workers and micro_batch must be >= 1");
  }
  if (flags.cache_on) {
    cache_params().validate();
  }
  std::string warning;
  const double reserved = flags.cache_on ? cache_fraction : 0.0;
  const auto budget_cap = static_cast<uint64_t>(
      static_cast<double>(capacity_bytes) * (1.0 - reserved));
  if (flags.lookahead_on && prefetch_budget_bytes > budget_cap) {
    warning = "prefetch_budget_bytes " + std::to_string(prefetch_budget_bytes) +
              " exceeds the usable capacity " + std::to_string(budget_cap) +
              ", clamping";
    prefetch_budget_bytes = budget_cap;
  }
  return warning;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open config: " + path);
  }
  RunConfig cfg;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const size_t eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected key = value");
    }
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    bool known = false;
    for (const auto& field : config_fields()) {
      if (field.key == key) {
        try {
          field.set(cfg, value);
        } catch (const std::exception& e) {
          throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " +
                                   key + ": " + e.what());
        }
        known = true;
        break;
      }
    }
    if (!known) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": unknown config key '" + key + "'");
    }
  }
  for (const auto& field : config_fields()) {
    if (const char* env = std::getenv(env_key(field.key).c_str())) {
      field.set(cfg, env);
    }
  }
  return cfg;
}

void save_config(const std::string& path, const RunConfig& cfg) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot open for writing: " + path);
  }
  for (const auto& field : config_fields()) {
    out << field.key << " = " << field.get(cfg) << "\n";
  }
  if (!out) {
    throw std::runtime_error("write failed: " + path);
  }
}

// ---------------------------------------------------------------------------
// Trace decomposition

TraceWalk decompose_trace(const QueryTrace& trace) {
  TraceWalk walk;
  const auto& stages = trace.stages;

  // Which stages open an overlap window (the stage right before a Retrieve).
  std::vector<bool> is_window(stages.size(), false);
  for (size_t i = 0; i < stages.size(); ++i) {
    if (stages[i].kind == StageKind::Retrieve && i > 0 &&
        stages[i - 1].kind != StageKind::Retrieve) {
      is_window[i - 1] = true;
    }
  }

  double plain = 0.0;
  for (size_t i = 0; i < stages.size(); ++i) {
    const Stage& s = stages[i];
    if (s.kind != StageKind::Retrieve) {
      if (!is_window[i]) plain += s.duration_s;
      continue;
    }
    if (s.embedding_ref < 0) {
      throw std::runtime_error("trace " + std::to_string(trace.trace_id) +
                               ": Retrieve stage without a query");
    }
    TracePhase phase;
    phase.plain_before_s = plain;
    plain = 0.0;
    const bool has_window = i > 0 && is_window[i - 1];
    phase.window_s = has_window ? stages[i - 1].duration_s : 0.0;

    // Prediction hint: the latest embedding available when the window
    // starts. A Generate's ref is its output and does not count for its own
    // window; a Judge's ref is its input and does.
    int64_t predictor = -1;
    if (has_window && stages[i - 1].kind == StageKind::Judge &&
        stages[i - 1].embedding_ref >= 0) {
      predictor = stages[i - 1].embedding_ref;
    }
    if (predictor < 0) {
      const size_t upper = has_window ? i - 1 : i;
      for (size_t j = upper; j-- > 0;) {
        if (stages[j].embedding_ref >= 0) {
          predictor = stages[j].embedding_ref;
          break;
        }
      }
    }
    if (predictor < 0) predictor = s.embedding_ref;
    phase.predictor_ref = predictor;

    for (uint32_t f = 0; f < s.fanout; ++f) {
      phase.query_refs.push_back(s.embedding_ref + f);
    }
    walk.phases.push_back(std::move(phase));
  }
  walk.tail_s = plain;
  return walk;
}

// ---------------------------------------------------------------------------
// Serving

namespace {

struct WorkerCtx {
  TieredStore store;
  HotnessTable hotness;
  double clock = 0.0;

  WorkerCtx(uint64_t capacity, CacheParams params)
      : store(capacity), hotness(params) {}
};

struct BatchOutcome {
  double batch_time = 0.0;
  std::vector<TraceRow> rows;
};

void check_exactness(const TopK& got, const IvfIndex& ix,
                     const EmbeddingMatrix& db, std::span<const float> q_out,
                     int L, int k, uint64_t trace_id,
                     std::vector<std::string>* failures) {
  const TopK want = ivf_search(ix, db, q_out, L, k);
  if (got.entries != want.entries && failures) {
    failures->push_back("trace " + std::to_string(trace_id) +
                        ": hybrid top-k differs from the monolithic search");
  }
}

BatchOutcome serve_microbatch(const std::vector<const QueryTrace*>& traces,
                              const std::vector<uint64_t>& budgets,
                              const EmbeddingMatrix& sidecar,
                              const IvfIndex& ix, const EmbeddingMatrix& db,
                              const RunConfig& cfg, WorkerCtx& worker,
                              std::vector<std::string>* failures) {
  BatchOutcome out;
  const size_t nt = traces.size();
  std::vector<TraceWalk> walks;
  walks.reserve(nt);
  size_t max_phases = 0;
  for (const QueryTrace* t : traces) {
    walks.push_back(decompose_trace(*t));
    max_phases = std::max(max_phases, walks.back().phases.size());
  }
  out.rows.resize(nt);
  for (size_t i = 0; i < nt; ++i) {
    out.rows[i].trace_id = traces[i]->trace_id;
    out.rows[i].pipeline = traces[i]->pipeline;
  }

  const TransferChannel chan{cfg.cost.bandwidth_bytes_per_s, cfg.mode};
  std::unordered_set<uint32_t> used_clusters;

  for (size_t r = 0; r < max_phases; ++r) {
    double plain_r = 0.0;
    double window_r = 0.0;
    for (size_t i = 0; i < nt; ++i) {
      if (r >= walks[i].phases.size()) continue;
      plain_r = std::max(plain_r, walks[i].phases[r].plain_before_s);
      window_r = std::max(window_r, walks[i].phases[r].window_s);
    }

    // Predict & prefetch, overlapping the generation window. Transfers of a
    // micro-batch share the channel, so their times add; planning each
    // trace against the store already holding earlier plans fetches
    // duplicate clusters once.
    double t_p_total = 0.0;
    if (cfg.flags.lookahead_on) {
      for (size_t i = 0; i < nt; ++i) {
        if (r >= walks[i].phases.size()) continue;
        const TracePhase& phase = walks[i].phases[r];
        const uint64_t budget = std::min(budgets[i], worker.store.free_bytes());
        const PrefetchPlan plan = plan_prefetch(
            ix, sidecar.row(static_cast<size_t>(phase.predictor_ref)), budget,
            worker.store);
        const TransferReport rep = execute_prefetch(
            worker.store, plan, chan, window_r, ix, db);
        t_p_total += rep.t_p;
        if (cfg.flags.cache_on) {
          for (uint32_t c : rep.transferred) worker.hotness.on_fetch(c);
        }
        if (rep.bytes > 0 || !rep.transferred.empty()) {
          out.rows[i].transfers.push_back(
              {static_cast<uint32_t>(r), rep.bytes, rep.t_p,
               static_cast<uint32_t>(rep.transferred.size())});
        }
        out.rows[i].transfer_s += rep.t_p;
        out.rows[i].transfer_bytes += rep.bytes;
      }
    }
    const double t1_r = std::max(window_r, t_p_total);

    // Retrieval: fast and slow tiers of the whole micro-batch run as one
    // phase; the slow side is a parallel-slot pool, the fast side is linear.
    uint64_t total_fast = 0, total_slow = 0, total_probed = 0;
    for (size_t i = 0; i < nt; ++i) {
      if (r >= walks[i].phases.size()) continue;
      const TracePhase& phase = walks[i].phases[r];
      const auto pred_row =
          sidecar.row(static_cast<size_t>(phase.predictor_ref));
      for (int64_t ref : phase.query_refs) {
        const auto q_out = sidecar.row(static_cast<size_t>(ref));
        RetrievalRow rr;
        rr.round = static_cast<uint32_t>(r);
        rr.coverage = coverage(ix, pred_row, q_out, cfg.n_probe);
        if (cfg.flags.lookahead_on) {
          auto [res, timing] = hybrid_search(ix, db, worker.store, q_out,
                                             cfg.n_probe, cfg.top_k, cfg.cost);
          rr.t_c = timing.t_c;
          rr.t_g = timing.t_g;
          rr.hit_rate = res.hit_rate;
          rr.probed = static_cast<uint32_t>(res.fast_clusters.size() +
                                            res.slow_clusters.size());
          rr.fast = static_cast<uint32_t>(res.fast_clusters.size());
          rr.slow = static_cast<uint32_t>(res.slow_clusters.size());
          for (const auto& e : res.topk.entries) rr.result_ids.push_back(e.id);
          for (uint32_t c : res.fast_clusters) used_clusters.insert(c);
          for (uint32_t c : res.slow_clusters) used_clusters.insert(c);
          if (cfg.validate_exactness) {
            check_exactness(res.topk, ix, db, q_out, cfg.n_probe, cfg.top_k,
                            traces[i]->trace_id, failures);
          }
        } else {
          const auto probe = coarse_probe(ix, q_out, cfg.n_probe);
          const TopK topk = ivf_search(ix, db, q_out, cfg.n_probe, cfg.top_k);
          rr.probed = static_cast<uint32_t>(probe.size());
          rr.slow = rr.probed;
          rr.t_c = std::ceil(static_cast<double>(rr.slow) /
                             cfg.cost.parallel_slots) *
                   cfg.cost.t_cc;
          for (const auto& e : topk.entries) rr.result_ids.push_back(e.id);
          for (uint32_t c : probe) used_clusters.insert(c);
        }
        total_fast += rr.fast;
        total_slow += rr.slow;
        total_probed += rr.probed;
        out.rows[i].retrievals.push_back(std::move(rr));
      }
    }
    double t2_r;
    if (cfg.flags.lookahead_on) {
      const double t_c = std::ceil(static_cast<double>(total_slow) /
                                   cfg.cost.parallel_slots) *
                         cfg.cost.t_cc;
      const double t_g = static_cast<double>(total_fast) * cfg.cost.t_gc;
      t2_r = std::max(t_c, t_g);
    } else {
      t2_r = std::ceil(static_cast<double>(total_probed) /
                       cfg.cost.parallel_slots) *
             cfg.cost.t_cc;
    }
    for (size_t i = 0; i < nt; ++i) {
      if (r >= walks[i].phases.size()) continue;
      out.rows[i].gen_plain_s += plain_r;
      out.rows[i].overlap_s += t1_r;
      out.rows[i].retrieve_s += t2_r;
      for (auto& rr : out.rows[i].retrievals) {
        if (rr.round == r) rr.t2 = t2_r;
      }
    }
    out.batch_time += plain_r + t1_r + t2_r;
  }

  double tail_r = 0.0;
  for (size_t i = 0; i < nt; ++i) {
    out.rows[i].tail_s = walks[i].tail_s;
    out.rows[i].total_s = out.rows[i].gen_plain_s + out.rows[i].overlap_s +
                          out.rows[i].retrieve_s + out.rows[i].tail_s;
    tail_r = std::max(tail_r, walks[i].tail_s);
  }
  out.batch_time += tail_r;

  // Cache maintenance runs between batches: hotness transition for the
  // round, promotion of this batch's prefetches, eviction back to the cache
  // fraction. Without a cache the fast tier is discarded wholesale.
  if (cfg.flags.cache_on) {
    worker.hotness.end_of_round(used_clusters);
    worker.hotness.evict_to_fraction(worker.store);
  } else {
    worker.store.clear();
    worker.hotness.clear();
  }
  return out;
}

} // namespace

TraceRow run_single(const QueryTrace& trace, const IvfIndex& ix,
                    const EmbeddingMatrix& db, const EmbeddingMatrix& sidecar,
                    TieredStore& store, HotnessTable* hotness,
                    const RunConfig& cfg, std::vector<std::string>* failures) {
  RunConfig local = cfg;
  local.capacity_bytes = store.capacity_bytes();
  local.validate_and_clamp();
  WorkerCtx worker(store.capacity_bytes(), local.cache_params());
  // Operate on the caller's store state, then hand it back.
  worker.store = store;
  if (hotness) worker.hotness = *hotness;
  const std::vector<const QueryTrace*> one{&trace};
  const std::vector<uint64_t> budgets{local.prefetch_budget_bytes};
  BatchOutcome out = serve_microbatch(one, budgets, sidecar, ix, db, local,
                                      worker, failures);
  store = worker.store;
  if (hotness) *hotness = worker.hotness;
  return std::move(out.rows.front());
}

RunRecord run_batch(const std::vector<QueryTrace>& traces,
                    const EmbeddingMatrix& sidecar, const IvfIndex& ix,
                    const EmbeddingMatrix& db, const RunConfig& cfg) {
  if (traces.empty()) {
    throw std::invalid_argument("run_batch needs at least one trace");
  }
  RunConfig local = cfg;
  local.validate_and_clamp();
  validate_traces(traces, sidecar.count());

  RunRecord record;
  record.workers = local.workers;

  std::vector<WorkerCtx> workers;
  workers.reserve(local.workers);
  for (uint32_t w = 0; w < local.workers; ++w) {
    workers.emplace_back(local.capacity_bytes, local.cache_params());
  }

  const size_t warm =
      local.flags.cache_on ? std::min(local.warmup_traces, traces.size() - 1)
                           : 0;

  auto scheduling_ref = [&](const QueryTrace& t) -> int64_t {
    for (const auto& s : t.stages) {
      if (s.embedding_ref >= 0) return s.embedding_ref;
    }
    throw std::runtime_error("trace " + std::to_string(t.trace_id) +
                             " carries no embedding");
  };

  auto serve_split = [&](size_t begin, size_t end, bool measured) {
    const size_t n = end - begin;
    if (n == 0) return;

    // Scheduling embeddings: the first embedding of each trace (q_in).
    EmbeddingMatrix queries(sidecar.dim());
    queries.reserve(n);
    for (size_t i = begin; i < end; ++i) {
      const auto ref = scheduling_ref(traces[i]);
      queries.append(i - begin, sidecar.row(static_cast<size_t>(ref)));
    }

    const std::vector<MicroBatch> batches =
        local.flags.prefetch_sched_on
            ? group_microbatches(queries, local.micro_batch)
            : chunk_microbatches(n, local.micro_batch);

    std::vector<WorkerState> snapshots;
    snapshots.reserve(workers.size());
    for (uint32_t w = 0; w < workers.size(); ++w) {
      WorkerState ws;
      ws.worker_id = w;
      ws.capacity_bytes = local.capacity_bytes;
      for (const auto& [cluster, entry] : workers[w].store.resident()) {
        ws.resident_clusters.insert(cluster);
      }
      snapshots.push_back(std::move(ws));
    }
    const std::vector<uint32_t> assignment =
        local.flags.cache_sched_on
            ? assign_cache_aware(batches, snapshots, ix, queries,
                                 local.n_probe)
            : assign_round_robin(batches.size(), workers.size());

    if (measured) {
      for (size_t b = 0; b < batches.size(); ++b) {
        const std::vector<uint32_t> one_assignment{assignment[b]};
        const std::vector<MicroBatch> one_batch{batches[b]};
        record.decisions.push_back(
            {static_cast<uint32_t>(b), assignment[b],
             assignment_overlap(one_batch, snapshots, one_assignment, ix,
                                queries, local.n_probe)});
      }
    }

    for (uint32_t w = 0; w < workers.size(); ++w) {
      for (size_t b = 0; b < batches.size(); ++b) {
        if (assignment[b] != w) continue;
        std::vector<const QueryTrace*> batch_traces;
        for (size_t q : batches[b].queries) {
          batch_traces.push_back(&traces[begin + q]);
        }
        const std::vector<uint64_t> budgets =
            split_budget(local.prefetch_budget_bytes, batches[b]);
        BatchOutcome out = serve_microbatch(
            batch_traces, budgets, sidecar, ix, db, local, workers[w],
            measured ? &record.assertion_failures : nullptr);
        workers[w].clock += out.batch_time;
        if (measured) {
          for (auto& row : out.rows) {
            row.worker = w;
            row.batch = static_cast<uint32_t>(b);
            record.rows.push_back(std::move(row));
          }
        }
      }
    }
  };

  if (warm > 0) {
    serve_split(0, warm, /*measured=*/false);
    for (auto& w : workers) w.clock = 0.0;
  }
  serve_split(warm, traces.size(), /*measured=*/true);

  for (uint32_t w = 0; w < workers.size(); ++w) {
    record.makespan_s = std::max(record.makespan_s, workers[w].clock);
    if (workers[w].store.recompute_used_bytes() !=
        workers[w].store.used_bytes()) {
      record.assertion_failures.push_back(
          "fast-tier byte accounting drifted from the resident set");
    }
    if (local.flags.cache_on) {
      record.hotness.push_back({w, workers[w].hotness.snapshot()});
    }
  }
  record.assertions_ok = record.assertion_failures.empty();
  return record;
}

// ---------------------------------------------------------------------------
// Aggregation and reporting

Aggregates aggregate(const std::vector<TraceRow>& rows, double makespan_s) {
  Aggregates agg;
  agg.traces = rows.size();
  if (rows.empty()) return agg;
  double hit_sum = 0.0, cov_sum = 0.0;
  for (const auto& row : rows) {
    agg.mean_latency_s += row.total_s;
    agg.mean_gen_s += row.gen_plain_s + row.overlap_s + row.tail_s;
    agg.mean_retrieve_s += row.retrieve_s;
    agg.mean_transfer_s += row.transfer_s;
    agg.total_transfer_bytes += static_cast<double>(row.transfer_bytes);
    for (const auto& rr : row.retrievals) {
      hit_sum += rr.hit_rate;
      cov_sum += rr.coverage;
      agg.retrievals++;
    }
  }
  const auto n = static_cast<double>(rows.size());
  agg.mean_latency_s /= n;
  agg.mean_gen_s /= n;
  agg.mean_retrieve_s /= n;
  agg.mean_transfer_s /= n;
  if (agg.retrievals > 0) {
    agg.mean_hit_rate = hit_sum / static_cast<double>(agg.retrievals);
    agg.mean_coverage = cov_sum / static_cast<double>(agg.retrievals);
  }
  if (makespan_s > 0.0) {
    agg.throughput_qps = n / makespan_s;
  }
  return agg;
}

std::map<std::string, Aggregates>
aggregate_by_pipeline(const std::vector<TraceRow>& rows) {
  std::map<std::string, std::vector<TraceRow>> grouped;
  for (const auto& row : rows) {
    grouped[pipeline_name(row.pipeline)].push_back(row);
  }
  std::map<std::string, Aggregates> out;
  for (const auto& [name, subset] : grouped) {
    out[name] = aggregate(subset, 0.0);
  }
  return out;
}

std::string render_report(const RunRecord& record, ReportFormat format) {
  const auto per_pipeline = aggregate_by_pipeline(record.rows);
  const Aggregates overall = aggregate(record.rows, record.makespan_s);

  std::ostringstream out;
  const char* columns[] = {"pipeline",       "traces",
                           "retrievals",     "mean_latency_s",
                           "mean_gen_s",     "mean_retrieve_s",
                           "mean_transfer_s", "mean_hit_rate",
                           "mean_coverage",  "throughput_qps"};
  // CSV keeps full precision so stored aggregates re-parse exactly; the
  // table trims for reading.
  auto fmt = [format](double v) {
    if (format == ReportFormat::Csv) return fmt_full(v);
    std::ostringstream ss;
    ss << std::setprecision(6) << v;
    return ss.str();
  };
  auto emit = [&](const std::string& name, const Aggregates& a, bool csv) {
    std::vector<std::string> cells{
        name,
        std::to_string(a.traces),
        std::to_string(a.retrievals),
        fmt(a.mean_latency_s),
        fmt(a.mean_gen_s),
        fmt(a.mean_retrieve_s),
        fmt(a.mean_transfer_s),
        fmt(a.mean_hit_rate),
        fmt(a.mean_coverage),
        fmt(a.throughput_qps)};
    if (csv) {
      for (size_t i = 0; i < cells.size(); ++i) {
        out << (i ? "," : "") << cells[i];
      }
      out << "\n";
    } else {
      for (size_t i = 0; i < cells.size(); ++i) {
        out << (i ? "  " : "") << std::setw(i ? 16 : 10) << cells[i];
      }
      out << "\n";
    }
  };

  const bool csv = format == ReportFormat::Csv;
  if (csv) {
    for (size_t i = 0; i < std::size(columns); ++i) {
      out << (i ? "," : "") << columns[i];
    }
    out << "\n";
  } else {
    for (size_t i = 0; i < std::size(columns); ++i) {
      out << (i ? "  " : "") << std::setw(i ? 16 : 10) << columns[i];
    }
    out << "\n";
  }
  for (const auto& [name, agg] : per_pipeline) {
    emit(name, agg, csv);
  }
  emit("OVERALL", overall, csv);
  if (!csv) {
    out << "makespan_s: " << fmt_full(record.makespan_s)
        << "  workers: " << record.workers
        << "  assertions: " << (record.assertions_ok ? "ok" : "FAILED")
        << "\n";
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Records IO

namespace {

json retrieval_to_json(const RetrievalRow& r) {
  return json{{"round", r.round},       {"t2", r.t2},
              {"t_c", r.t_c},           {"t_g", r.t_g},
              {"hit_rate", r.hit_rate}, {"coverage", r.coverage},
              {"probed", r.probed},     {"fast", r.fast},
              {"slow", r.slow},         {"result_ids", r.result_ids}};
}

RetrievalRow retrieval_from_json(const json& j) {
  RetrievalRow r;
  r.round = j.at("round").get<uint32_t>();
  r.t2 = j.at("t2").get<double>();
  r.t_c = j.at("t_c").get<double>();
  r.t_g = j.at("t_g").get<double>();
  r.hit_rate = j.at("hit_rate").get<double>();
  r.coverage = j.at("coverage").get<double>();
  r.probed = j.at("probed").get<uint32_t>();
  r.fast = j.at("fast").get<uint32_t>();
  r.slow = j.at("slow").get<uint32_t>();
  r.result_ids = j.at("result_ids").get<std::vector<uint64_t>>();
  return r;
}

} // namespace

void save_records(const std::string& path, const RunRecord& record) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot open for writing: " + path);
  }
  const json meta{{"type", "meta"},
                  {"schema_version", kRecordSchemaVersion},
                  {"makespan_s", record.makespan_s},
                  {"workers", record.workers},
                  {"assertions_ok", record.assertions_ok},
                  {"assertion_failures", record.assertion_failures}};
  out << meta.dump() << "\n";
  for (const auto& row : record.rows) {
    json retrievals = json::array();
    for (const auto& r : row.retrievals) retrievals.push_back(retrieval_to_json(r));
    json transfers = json::array();
    for (const auto& t : row.transfers) {
      transfers.push_back(json{{"round", t.round},
                               {"bytes", t.bytes},
                               {"t_p", t.t_p},
                               {"clusters", t.clusters}});
    }
    const json j{{"type", "trace"},
                 {"trace_id", row.trace_id},
                 {"pipeline", pipeline_name(row.pipeline)},
                 {"worker", row.worker},
                 {"batch", row.batch},
                 {"total_s", row.total_s},
                 {"gen_plain_s", row.gen_plain_s},
                 {"overlap_s", row.overlap_s},
                 {"retrieve_s", row.retrieve_s},
                 {"tail_s", row.tail_s},
                 {"transfer_s", row.transfer_s},
                 {"transfer_bytes", row.transfer_bytes},
                 {"retrievals", retrievals},
                 {"transfers", transfers}};
    out << j.dump() << "\n";
  }
  for (const auto& d : record.decisions) {
    const json j{{"type", "decision"},
                 {"batch", d.batch},
                 {"worker", d.worker},
                 {"overlap", d.overlap}};
    out << j.dump() << "\n";
  }
  for (const auto& h : record.hotness) {
    json entries = json::array();
    for (const auto& [cluster, value] : h.hotness) {
      entries.push_back(json::array({cluster, value}));
    }
    const json j{{"type", "hotness"}, {"worker", h.worker},
                 {"entries", entries}};
    out << j.dump() << "\n";
  }
  if (!out) {
    throw std::runtime_error("write failed: " + path);
  }
}

RunRecord load_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open: " + path);
  }
  RunRecord record;
  bool have_meta = false;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
      const std::string type = j.at("type").get<std::string>();
      if (type == "meta") {
        const int version = j.at("schema_version").get<int>();
        if (version != kRecordSchemaVersion) {
          throw std::invalid_argument("unsupported record schema version " +
                                      std::to_string(version));
        }
        record.makespan_s = j.at("makespan_s").get<double>();
        record.workers = j.at("workers").get<uint32_t>();
        record.assertions_ok = j.at("assertions_ok").get<bool>();
        record.assertion_failures =
            j.at("assertion_failures").get<std::vector<std::string>>();
        have_meta = true;
      } else if (type == "trace") {
        TraceRow row;
        row.trace_id = j.at("trace_id").get<uint64_t>();
        row.pipeline = pipeline_from_name(j.at("pipeline").get<std::string>());
        row.worker = j.at("worker").get<uint32_t>();
        row.batch = j.at("batch").get<uint32_t>();
        row.total_s = j.at("total_s").get<double>();
        row.gen_plain_s = j.at("gen_plain_s").get<double>();
        row.overlap_s = j.at("overlap_s").get<double>();
        row.retrieve_s = j.at("retrieve_s").get<double>();
        row.tail_s = j.at("tail_s").get<double>();
        row.transfer_s = j.at("transfer_s").get<double>();
        row.transfer_bytes = j.at("transfer_bytes").get<uint64_t>();
        for (const auto& rj : j.at("retrievals")) {
          row.retrievals.push_back(retrieval_from_json(rj));
        }
        for (const auto& tj : j.at("transfers")) {
          TransferRow t;
          t.round = tj.at("round").get<uint32_t>();
          t.bytes = tj.at("bytes").get<uint64_t>();
          t.t_p = tj.at("t_p").get<double>();
          t.clusters = tj.at("clusters").get<uint32_t>();
          row.transfers.push_back(t);
        }
        record.rows.push_back(std::move(row));
      } else if (type == "decision") {
        record.decisions.push_back({j.at("batch").get<uint32_t>(),
                                    j.at("worker").get<uint32_t>(),
                                    j.at("overlap").get<uint64_t>()});
      } else if (type == "hotness") {
        HotnessSnapshot snap;
        snap.worker = j.at("worker").get<uint32_t>();
        for (const auto& entry : j.at("entries")) {
          snap.hotness[entry.at(0).get<uint32_t>()] =
              entry.at(1).get<float>();
        }
        record.hotness.push_back(std::move(snap));
      } else {
        throw std::invalid_argument("unknown record type '" + type + "'");
      }
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " +
                               e.what());
    }
  }
  if (!have_meta) {
    throw std::runtime_error(path + ": missing meta record");
  }
  return record;
}

} // namespace laiv
