// Copyright 2026 The laiv Authors
// SPDX-License-Identifier: Apache-2.0
//
// laiv: tiered IVF retrieval engine and trace-driven pipeline simulator.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "laiv/budget.hpp"
#include "laiv/ivf.hpp"
#include "laiv/pipeline.hpp"
#include "laiv/rng.hpp"
#include "laiv/trace.hpp"
#include "laiv/vectorstore.hpp"

namespace {

using namespace laiv;

bool is_binary_embedding_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  char magic[4] = {0, 0, 0, 0};
  in.read(magic, 4);
  return in && magic[0] == 'L' && magic[1] == 'A' && magic[2] == 'I' &&
         magic[3] == 'V';
}

EmbeddingMatrix load_vectors_any(const std::string& path) {
  return is_binary_embedding_file(path) ? load_embeddings(path)
                                        : load_embeddings_text(path);
}

struct WorkloadArgs {
  std::string index_path;
  std::string traces_path;
  std::string sidecar_path;
};

void add_workload_options(CLI::App* cmd, WorkloadArgs& args) {
  cmd->add_option("--index", args.index_path, "LAIX index file")->required();
  cmd->add_option("--traces", args.traces_path, "trace file (JSON lines)")
      ->required();
  cmd->add_option("--sidecar", args.sidecar_path,
                  "embedding sidecar (LAIV file)")
      ->required();
}

int cmd_build_index(const std::string& vectors_path, uint32_t clusters,
                    const std::string& metric, uint64_t seed, int max_iters,
                    bool spherical, const std::string& out_path) {
  const EmbeddingMatrix db = load_vectors_any(vectors_path);
  IvfBuildOptions opts;
  opts.seed = seed;
  opts.max_iters = max_iters;
  opts.spherical = spherical;
  const IvfIndex ix =
      build_index(db, clusters, opts, metric_from_name(metric));
  save_index(out_path, ix, db);
  std::cout << "built index: " << ix.num_clusters() << " clusters, "
            << ix.total_vectors() << " vectors, dim " << ix.dim()
            << ", payload " << ix.total_payload_bytes() << " bytes -> "
            << out_path << "\n";
  return 0;
}

int cmd_synth_traces(const std::string& vectors_path,
                     const std::string& index_path, size_t count, double sigma,
                     const std::string& pipeline, uint64_t seed,
                     const std::string& out_path, std::string sidecar_path,
                     double duration_mean, double duration_sigma) {
  const EmbeddingMatrix db = load_vectors_any(vectors_path);
  auto [ix, ixdb] = load_index(index_path);
  SynthOptions opts;
  opts.noise_sigma = sigma;
  opts.duration_mean_s = duration_mean;
  opts.duration_sigma = duration_sigma;
  const TraceSet set = synthesize_traces(
      db, ix, count, pipeline_from_name(pipeline), seed, opts);
  if (sidecar_path.empty()) sidecar_path = out_path + ".laiv";
  save_traces(out_path, set.traces);
  save_embeddings(sidecar_path, set.sidecar);
  std::cout << "wrote " << set.traces.size() << " traces -> " << out_path
            << " (sidecar " << set.sidecar.count() << " embeddings -> "
            << sidecar_path << ")\n";
  return 0;
}

int cmd_calibrate(const std::string& traces_path, const std::string& pipeline,
                  double bandwidth, std::optional<double> capacity,
                  double cache_fraction, const std::string& base_config,
                  const std::string& out_path) {
  const auto traces = load_traces(traces_path);
  std::optional<PipelineKind> filter;
  if (pipeline != "all") filter = pipeline_from_name(pipeline);
  double budget = calibrate_budget(traces, filter, bandwidth);

  RunConfig cfg;
  if (!base_config.empty()) cfg = load_config(base_config);
  cfg.cost.bandwidth_bytes_per_s = bandwidth;
  if (capacity) {
    cfg.capacity_bytes = static_cast<uint64_t>(*capacity);
    cfg.cache_fraction = cache_fraction;
    const double cap = *capacity * (1.0 - cache_fraction);
    if (budget > cap) {
      std::cerr << "warning: calibrated budget " << budget
                << " bytes exceeds usable capacity " << cap
                << " bytes, clamping\n";
      budget = cap;
    }
  }
  cfg.prefetch_budget_bytes = static_cast<uint64_t>(budget);
  save_config(out_path, cfg);
  std::cout << "prefetch_budget_bytes = " << cfg.prefetch_budget_bytes
            << " -> " << out_path << "\n";
  return 0;
}

int cmd_run(const std::string& config_path, const WorkloadArgs& wl,
            const std::string& out_path, const std::string& format) {
  RunConfig cfg = load_config(config_path);
  const std::string warning = cfg.validate_and_clamp();
  if (!warning.empty()) {
    std::cerr << "warning: " << warning << "\n";
  }
  if (cfg.cost.fast_tier_slower()) {
    std::cerr << "warning: t_gc > t_cc, the fast tier is configured slower "
                 "than the slow tier\n";
  }
  auto [ix, db] = load_index(wl.index_path);
  const auto traces = load_traces(wl.traces_path);
  const EmbeddingMatrix sidecar = load_embeddings(wl.sidecar_path);

  const RunRecord record = run_batch(traces, sidecar, ix, db, cfg);
  if (!out_path.empty()) {
    save_records(out_path, record);
  }
  std::cout << render_report(record, format == "csv" ? ReportFormat::Csv
                                                     : ReportFormat::Table);
  if (!record.assertions_ok) {
    for (const auto& failure : record.assertion_failures) {
      std::cerr << "assertion failed: " << failure << "\n";
    }
    return 1;
  }
  return 0;
}

int cmd_bench(const std::string& config_path, const WorkloadArgs& wl,
              const std::vector<uint32_t>& workers_list,
              const std::vector<size_t>& micro_batch_list,
              const std::vector<int>& nprobe_list,
              const std::vector<std::string>& lookahead_list,
              const std::vector<std::string>& sched_list,
              const std::string& format, const std::string& out_path) {
  const RunConfig base = load_config(config_path);
  auto [ix, db] = load_index(wl.index_path);
  const auto traces = load_traces(wl.traces_path);
  const EmbeddingMatrix sidecar = load_embeddings(wl.sidecar_path);

  const bool csv = format == "csv";
  std::ostringstream out;
  const char* cols[] = {"workers",      "micro_batch",   "n_probe",
                        "lookahead",    "schedulers",    "cache",
                        "budget_bytes", "traces",        "mean_latency_s",
                        "throughput_qps", "mean_hit_rate", "mean_coverage",
                        "makespan_s"};
  for (size_t i = 0; i < std::size(cols); ++i) {
    out << (i ? (csv ? "," : "  ") : "") << cols[i];
  }
  out << "\n";

  bool all_ok = true;
  for (uint32_t w : workers_list) {
    for (size_t m : micro_batch_list) {
      for (int L : nprobe_list) {
        for (const std::string& look : lookahead_list) {
          for (const std::string& sched : sched_list) {
            RunConfig cfg = base;
            cfg.workers = w;
            cfg.micro_batch = m;
            cfg.n_probe = L;
            cfg.flags.lookahead_on = look == "on";
            cfg.flags.prefetch_sched_on = sched == "on";
            cfg.flags.cache_sched_on = sched == "on";
            cfg.validate_and_clamp();
            const RunRecord record = run_batch(traces, sidecar, ix, db, cfg);
            all_ok = all_ok && record.assertions_ok;
            const Aggregates agg = aggregate(record.rows, record.makespan_s);
            const std::string sep = csv ? "," : "  ";
            out << w << sep << m << sep << L << sep << look << sep << sched
                << sep << (cfg.flags.cache_on ? "on" : "off") << sep
                << cfg.prefetch_budget_bytes << sep << agg.traces << sep
                << agg.mean_latency_s << sep << agg.throughput_qps << sep
                << agg.mean_hit_rate << sep << agg.mean_coverage << sep
                << record.makespan_s << "\n";
          }
        }
      }
    }
  }
  if (!out_path.empty()) {
    std::ofstream file(out_path, std::ios::trunc);
    if (!file) {
      throw std::runtime_error("cannot open for writing: " + out_path);
    }
    file << out.str();
  } else {
    std::cout << out.str();
  }
  return all_ok ? 0 : 1;
}

int cmd_report(const std::string& records_path, const std::string& format) {
  const RunRecord record = load_records(records_path);
  if (record.rows.empty()) {
    std::cerr << "no data\n";
    return 1;
  }
  std::cout << render_report(record, format == "csv" ? ReportFormat::Csv
                                                     : ReportFormat::Table);
  return 0;
}

} // namespace

int run_main(int argc, char** argv) {
  CLI::App app{"tiered IVF retrieval engine and pipeline simulator"};
  app.require_subcommand(1);

  // build-index
  auto* build = app.add_subcommand("build-index", "cluster vectors into an index");
  std::string vectors_path, metric = "ip", out_path;
  uint32_t clusters = 16;
  uint64_t seed = 0;
  int max_iters = 25;
  bool spherical = false;
  build->add_option("--vectors", vectors_path, "LAIV binary or text vectors")
      ->required();
  build->add_option("--clusters", clusters, "number of clusters")->required();
  build->add_option("--metric", metric, "ip or l2");
  build->add_option("--seed", seed, "clustering seed");
  build->add_option("--max-iters", max_iters, "max Lloyd iterations");
  build->add_flag("--spherical", spherical, "normalize before clustering");
  build->add_option("--out", out_path, "output index path")->required();

  // synth-traces
  auto* synth = app.add_subcommand("synth-traces", "generate synthetic traces");
  std::string synth_vectors, synth_index, synth_out, synth_sidecar,
      synth_pipeline = "HyDE";
  size_t synth_count = 100;
  double synth_sigma = 0.1, synth_dur_mean = 0.5, synth_dur_sigma = 0.25;
  uint64_t synth_seed = 0;
  synth->add_option("--vectors", synth_vectors, "datastore vectors")->required();
  synth->add_option("--index", synth_index, "LAIX index file")->required();
  synth->add_option("--count", synth_count, "number of traces");
  synth->add_option("--sigma", synth_sigma, "query transform noise");
  synth->add_option("--pipeline", synth_pipeline,
                    "HyDE|SubQ|Iter|IRG|FLARE|S-RAG|custom");
  synth->add_option("--seed", synth_seed, "generation seed");
  synth->add_option("--duration-mean", synth_dur_mean,
                    "mean generation duration (s)");
  synth->add_option("--duration-sigma", synth_dur_sigma,
                    "lognormal duration spread (0 = fixed)");
  synth->add_option("--out", synth_out, "output trace file")->required();
  synth->add_option("--sidecar", synth_sidecar,
                    "output sidecar path (default <out>.laiv)");

  // calibrate
  auto* calib = app.add_subcommand("calibrate", "profile-guided prefetch budget");
  std::string calib_traces, calib_pipeline = "all", calib_base, calib_out;
  double calib_bandwidth = 32e9, calib_cache_fraction = 0.5;
  std::optional<double> calib_capacity;
  calib->add_option("--traces", calib_traces, "calibration traces")->required();
  calib->add_option("--pipeline", calib_pipeline, "pipeline filter or 'all'");
  calib->add_option("--bandwidth", calib_bandwidth, "channel bytes/s");
  calib->add_option("--capacity", calib_capacity,
                    "fast-tier capacity bytes (enables clamping)");
  calib->add_option("--cache-fraction", calib_cache_fraction,
                    "capacity share reserved for the cache");
  calib->add_option("--base-config", calib_base, "config to extend");
  calib->add_option("--out", calib_out, "output config path")->required();

  // run
  auto* run = app.add_subcommand("run", "replay traces through the simulator");
  std::string run_config, run_out, run_format = "table";
  WorkloadArgs run_wl;
  run->add_option("--config", run_config, "run config file")->required();
  add_workload_options(run, run_wl);
  run->add_option("--out", run_out, "output records file");
  run->add_option("--format", run_format, "table or csv")
      ->check(CLI::IsMember({"table", "csv"}));

  // bench
  auto* bench = app.add_subcommand("bench", "sweep a config grid");
  std::string bench_config, bench_out, bench_format = "table";
  WorkloadArgs bench_wl;
  std::vector<uint32_t> bench_workers{1};
  std::vector<size_t> bench_micro{1};
  std::vector<int> bench_nprobe;
  std::vector<std::string> bench_lookahead{"on"};
  std::vector<std::string> bench_sched{"off"};
  bench->add_option("--config", bench_config, "base config file")->required();
  add_workload_options(bench, bench_wl);
  bench->add_option("--workers", bench_workers, "worker counts")
      ->delimiter(',');
  bench->add_option("--micro-batch", bench_micro, "micro-batch sizes")
      ->delimiter(',');
  bench->add_option("--nprobe", bench_nprobe, "probe depths")->delimiter(',');
  bench->add_option("--lookahead", bench_lookahead, "on,off variants")
      ->delimiter(',')
      ->check(CLI::IsMember({"on", "off"}));
  bench->add_option("--schedulers", bench_sched, "on,off variants")
      ->delimiter(',')
      ->check(CLI::IsMember({"on", "off"}));
  bench->add_option("--format", bench_format, "table or csv")
      ->check(CLI::IsMember({"table", "csv"}));
  bench->add_option("--out", bench_out, "write the table here");

  // report
  auto* report = app.add_subcommand("report", "render stored run records");
  std::string report_records, report_format = "table";
  report->add_option("--records", report_records, "records file")->required();
  report->add_option("--format", report_format, "table or csv")
      ->check(CLI::IsMember({"table", "csv"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (build->parsed()) {
      return cmd_build_index(vectors_path, clusters, metric, seed, max_iters,
                             spherical, out_path);
    }
    if (synth->parsed()) {
      return cmd_synth_traces(synth_vectors, synth_index, synth_count,
                              synth_sigma, synth_pipeline, synth_seed,
                              synth_out, synth_sidecar, synth_dur_mean,
                              synth_dur_sigma);
    }
    if (calib->parsed()) {
      return cmd_calibrate(calib_traces, calib_pipeline, calib_bandwidth,
                           calib_capacity, calib_cache_fraction, calib_base,
                           calib_out);
    }
    if (run->parsed()) {
      return cmd_run(run_config, run_wl, run_out, run_format);
    }
    if (bench->parsed()) {
      if (bench_nprobe.empty()) {
        bench_nprobe.push_back(load_config(bench_config).n_probe);
      }
      return cmd_bench(bench_config, bench_wl, bench_workers, bench_micro,
                       bench_nprobe, bench_lookahead, bench_sched,
                       bench_format, bench_out);
    }
    if (report->parsed()) {
      return cmd_report(report_records, report_format);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

int main(int argc, char** argv) {
  try {
    return run_main(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
