#include "deer/experiment.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <set>
#include <thread>

#include "json.hpp"

#include "deer/synth.hpp"
#include "deer/tomlmini.hpp"
#include "deer/trace_io.hpp"

namespace deer {

HBAnalysis analyze_trace(const Trace& trace, const HBConfig& config) {
  CFG cfg = build_cfg(trace);
  return analyze_hyperblocks(trace, cfg, config);
}

MetadataBuild build_metadata(const Trace& trace, const HBAnalysis& analysis,
                             const SSRAConfig& config, HashConfig hash) {
  config.validate();
  auto chains = build_all_chains(analysis, config);
  MetadataBuild out{MetadataTable{}, {}, 0, 0, 0};
  if (config.containment_pruning) {
    PruneResult pruned = prune_contained(chains, analysis);
    out.pruned_chains = pruned.pruned.size();
    out.chains = std::move(pruned.chains);
  } else {
    out.chains = std::move(chains);
  }
  std::map<Addr, MetadataEntry> entries;
  for (const auto& [trigger, chain] : out.chains) {
    if (trigger == 0) continue;
    std::vector<Addr> selected = select_cachelines(chain, config);
    EncodedWithDrops enc = encode_dropping_earliest(trigger, std::move(selected));
    out.dropped_lines += enc.dropped;
    entries.emplace(trigger, enc.entry);
  }
  out.table = MetadataTable::build(entries, hash);

  std::set<Addr> pcs;
  for (const auto& r : trace.records) pcs.insert(r.pc);
  out.exercised_code_bytes = pcs.size() * trace.meta.instruction_size;
  return out;
}

namespace {

void attach_accuracy(SimReport& report, const Trace& test, PathPredictor& predictor) {
  AccuracyAndDepth ad = iou_accuracy(test, predictor);
  report.accuracy = ad.accuracy.summarize();
  report.depth = ad.depth.summarize();
}

}  // namespace

SimReport run_configured(const Trace& trace, const RunSpec& spec,
                         const HBAnalysis* shared_analysis) {
  Trace train_local, test_local;
  const Trace* train = &trace;
  const Trace* test = &trace;
  if (spec.holdout) {
    u64 half = trace.records.size() / 2;
    train_local = slice_trace(trace, 0, half);
    test_local = slice_trace(trace, half, trace.records.size() - half);
    train = &train_local;
    test = &test_local;
  }

  SimOptions opts;
  opts.label = spec.label.empty() ? to_string(spec.mode) : spec.label;

  if (spec.mode == SimMode::off) {
    DRUConfig dru = spec.dru;
    dru.mode = SimMode::off;
    return simulate(*test, nullptr, spec.cache, dru, opts);
  }
  if (spec.mode == SimMode::oracle) {
    return run_oracle(*test, spec.cache, spec.dru.oracle_distance, opts);
  }

  HBAnalysis local_analysis;
  const HBAnalysis* analysis = shared_analysis;
  if (!analysis || spec.holdout) {
    local_analysis = analyze_trace(*train, spec.hb);
    analysis = &local_analysis;
  }

  SimReport report;
  switch (spec.mode) {
    case SimMode::ssra: {
      MetadataBuild meta = build_metadata(*train, *analysis, spec.ssra);
      DRUConfig dru = spec.dru;
      dru.mode = SimMode::ssra;
      report = simulate(*test, &meta.table, spec.cache, dru, opts);
      if (spec.with_accuracy) {
        SsraPredictor predictor(meta.chains);
        attach_accuracy(report, *test, predictor);
        report.divergence_rate = divergence_rate(*test, *analysis, meta.chains);
      }
      break;
    }
    case SimMode::dynamic: {
      DRUConfig dru = spec.dru;
      dru.mode = SimMode::dynamic;
      report = simulate_dynamic(*test, *analysis, spec.cache, dru, opts);
      if (spec.with_accuracy) {
        DynamicWalkPredictor predictor(*analysis, dru.runahead_depth,
                                       test->meta.instruction_size);
        attach_accuracy(report, *test, predictor);
      }
      break;
    }
    case SimMode::rnr50:
    case SimMode::rnr_unique50: {
      RnRConfig rnr = spec.rnr;
      rnr.variant =
          spec.mode == SimMode::rnr50 ? RnRVariant::last50_hb : RnRVariant::unique50_hb;
      report = rnr_simulate(*test, *analysis, rnr, spec.cache, spec.dru, opts);
      if (spec.with_accuracy) {
        RnRConfig scheme = rnr;
        scheme.replay_lastn = 0;  // scheme accuracy is measured uncapped
        RnrPredictor predictor(*analysis, scheme);
        attach_accuracy(report, *test, predictor);
      }
      break;
    }
    default:
      throw Error(ErrorKind::usage, "unsupported mode");
  }
  return report;
}

void ExperimentSpec::validate() const {
  if (trace_file.empty() == workload_spec_file.empty())
    throw Error(ErrorKind::usage,
                "experiment needs exactly one of trace.file / trace.generate");
  if (modes.empty()) throw Error(ErrorKind::usage, "experiment needs at least one mode");
  cache.validate();
  dru.validate();
  hb.validate();
  ssra.validate();
}

ExperimentSpec ExperimentSpec::from_toml_text(const std::string& text) {
  auto doc = toml::Document::parse(text);
  ExperimentSpec s;
  s.name = doc.get_string("name", s.name);
  s.trace_file = doc.get_string("trace.file", "");
  s.workload_spec_file = doc.get_string("trace.generate", "");
  s.hb.probability_threshold = doc.get_double("analysis.threshold", s.hb.probability_threshold);
  s.hb.mls_exec_floor =
      static_cast<u64>(doc.get_int("analysis.mls_exec_floor", static_cast<i64>(s.hb.mls_exec_floor)));
  s.ssra.max_depth_hbs = static_cast<u32>(doc.get_int("ssra.depth", s.ssra.max_depth_hbs));
  s.ssra.max_cachelines_per_entry =
      static_cast<u32>(doc.get_int("ssra.lastn", s.ssra.max_cachelines_per_entry));
  s.ssra.containment_pruning = doc.get_bool("ssra.pruning", s.ssra.containment_pruning);
  s.cache.l1i_bytes = static_cast<u64>(doc.get_int("cache.l1i_kb", 256)) * 1024;
  s.cache.l1i_assoc = static_cast<u32>(doc.get_int("cache.l1i_assoc", s.cache.l1i_assoc));
  s.cache.l2_bytes = static_cast<u64>(doc.get_int("cache.l2_kb", 2048)) * 1024;
  s.cache.l2_assoc = static_cast<u32>(doc.get_int("cache.l2_assoc", s.cache.l2_assoc));
  s.cache.line_size = static_cast<u32>(doc.get_int("cache.line", s.cache.line_size));
  s.cache.lat_l1 = static_cast<u32>(doc.get_int("cache.lat_l1", s.cache.lat_l1));
  s.cache.lat_l2 = static_cast<u32>(doc.get_int("cache.lat_l2", s.cache.lat_l2));
  s.cache.lat_dram = static_cast<u32>(doc.get_int("cache.lat_dram", s.cache.lat_dram));
  s.dru.metadata_load_latency =
      static_cast<u32>(doc.get_int("dru.md_latency", s.dru.metadata_load_latency));
  s.dru.prefetch_buffer_size = static_cast<u32>(doc.get_int("dru.pfb", s.dru.prefetch_buffer_size));
  s.dru.ras_size = static_cast<u32>(doc.get_int("dru.ras", s.dru.ras_size));
  s.dru.ras_top_prefetch = doc.get_bool("dru.ras_top", s.dru.ras_top_prefetch);
  s.dru.issue_bandwidth = static_cast<u32>(doc.get_int("dru.issue_bw", s.dru.issue_bandwidth));
  s.dru.metadata_cache_entries =
      static_cast<u32>(doc.get_int("dru.metadata_cache", s.dru.metadata_cache_entries));
  s.dru.runahead_depth = static_cast<u32>(doc.get_int("dru.runahead_depth", s.dru.runahead_depth));
  s.dru.oracle_distance = static_cast<u64>(doc.get_int("dru.oracle_n", static_cast<i64>(s.dru.oracle_distance)));
  s.rnr.replay_lastn = static_cast<u32>(doc.get_int("rnr.replay_lastn", s.rnr.replay_lastn));
  auto mode_names = doc.get_string_array("run.modes");
  if (!mode_names.empty()) {
    s.modes.clear();
    for (const auto& m : mode_names) {
      auto mode = sim_mode_from_string(m);
      if (!mode) throw Error(ErrorKind::usage, "unknown mode in run.modes: " + m);
      s.modes.push_back(*mode);
    }
  }
  s.with_accuracy = doc.get_bool("run.accuracy", s.with_accuracy);
  s.holdout = doc.get_bool("run.holdout", s.holdout);
  auto as_u32s = [&](const char* key) {
    std::vector<u32> out;
    for (f64 v : doc.get_number_array(key)) out.push_back(static_cast<u32>(v));
    return out;
  };
  s.sweep_md_latency = as_u32s("sweep.md_latency");
  s.sweep_lastn = as_u32s("sweep.lastn");
  s.sweep_pfb = as_u32s("sweep.pfb");
  s.sweep_ras = as_u32s("sweep.ras");
  s.sweep_depth = as_u32s("sweep.depth");
  s.validate();
  return s;
}

ExperimentSpec ExperimentSpec::from_toml_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorKind::io, "cannot open recipe: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  auto spec = from_toml_text(ss.str());
  // Relative paths inside the recipe resolve against the recipe directory.
  auto resolve = [&](std::string& p) {
    if (p.empty() || std::filesystem::path(p).is_absolute()) return;
    p = (std::filesystem::path(path).parent_path() / p).string();
  };
  resolve(spec.trace_file);
  resolve(spec.workload_spec_file);
  return spec;
}

ExperimentResult run_experiment(const ExperimentSpec& spec, const std::string& out_dir,
                                u32 threads) {
  spec.validate();
  Trace trace = spec.trace_file.empty()
                    ? generate_synthetic(SynthWorkloadSpec::from_toml_file(spec.workload_spec_file))
                          .trace
                    : read_trace(spec.trace_file);

  HBAnalysis analysis = analyze_trace(trace, spec.hb);

  struct Point {
    RunSpec run;
    bool is_sweep = false;
  };
  std::vector<Point> points;
  auto base_run = [&](SimMode mode) {
    RunSpec r;
    r.mode = mode;
    r.cache = spec.cache;
    r.dru = spec.dru;
    r.hb = spec.hb;
    r.ssra = spec.ssra;
    r.rnr = spec.rnr;
    r.holdout = spec.holdout;
    r.with_accuracy = spec.with_accuracy;
    return r;
  };
  for (SimMode mode : spec.modes) {
    Point p{base_run(mode), false};
    p.run.label = to_string(mode);
    points.push_back(p);
  }
  for (u32 v : spec.sweep_md_latency) {
    Point p{base_run(SimMode::ssra), true};
    p.run.dru.metadata_load_latency = v;
    p.run.label = "ssra-mdlat" + std::to_string(v);
    points.push_back(p);
  }
  for (u32 v : spec.sweep_lastn) {
    Point p{base_run(SimMode::ssra), true};
    p.run.ssra.max_cachelines_per_entry = v;
    p.run.label = "ssra-lastn" + std::to_string(v);
    points.push_back(p);
  }
  for (u32 v : spec.sweep_pfb) {
    Point p{base_run(SimMode::ssra), true};
    p.run.dru.prefetch_buffer_size = v;
    p.run.label = "ssra-pfb" + std::to_string(v);
    points.push_back(p);
  }
  for (u32 v : spec.sweep_ras) {
    Point p{base_run(SimMode::ssra), true};
    p.run.dru.ras_size = v;
    p.run.label = "ssra-ras" + std::to_string(v);
    points.push_back(p);
  }
  for (u32 v : spec.sweep_depth) {
    Point p{base_run(SimMode::dynamic), true};
    p.run.dru.runahead_depth = v;
    p.run.dru.ideal_metadata = true;
    p.run.label = "dynamic-ideal-depth" + std::to_string(v);
    points.push_back(p);
  }

  std::vector<SimReport> reports(points.size());
  std::vector<std::string> errors(points.size());
  std::atomic<size_t> next{0};
  auto worker = [&]() {
    while (true) {
      size_t i = next.fetch_add(1);
      if (i >= points.size()) return;
      try {
        reports[i] = run_configured(trace, points[i].run,
                                    points[i].run.holdout ? nullptr : &analysis);
      } catch (const std::exception& e) {
        errors[i] = std::string("point '") + points[i].run.label + "': " + e.what();
      }
    }
  };
  u32 pool = std::max<u32>(1, threads);
  std::vector<std::thread> workers;
  for (u32 t = 1; t < pool; ++t) workers.emplace_back(worker);
  worker();
  for (auto& t : workers) t.join();
  for (const auto& e : errors)
    if (!e.empty()) throw Error(ErrorKind::data, "experiment failed at " + e);

  ExperimentResult result;
  for (size_t i = 0; i < points.size(); ++i)
    (points[i].is_sweep ? result.sweep_reports : result.mode_reports).push_back(reports[i]);

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    for (const auto& r : reports)
      save_report(r, (std::filesystem::path(out_dir) / (r.label + ".json")).string());
  }

  if (result.mode_reports.size() >= 2) {
    ComparisonTable table = compare_report(result.mode_reports);
    result.comparison_csv = table.to_csv();
    result.comparison_json = table.to_json();
    if (!out_dir.empty()) {
      std::ofstream csv(std::filesystem::path(out_dir) / "comparison.csv");
      csv << result.comparison_csv;
      std::ofstream js(std::filesystem::path(out_dir) / "comparison.json");
      js << result.comparison_json;
      table.write_svg((std::filesystem::path(out_dir) / "comparison.svg").string());
    }
  }

  nlohmann::json summary;
  summary["name"] = spec.name;
  summary["trace"] = {{"name", trace.meta.name}, {"instructions", trace.records.size()}};
  summary["points"] = nlohmann::json::array();
  for (const auto& r : reports)
    summary["points"].push_back({{"label", r.label},
                                 {"mode", to_string(r.mode)},
                                 {"l2_demand_misses", r.counters.l2_demand_misses},
                                 {"prefetches_issued", r.counters.prefetches_issued}});
  result.summary_json = summary.dump(2);
  if (!out_dir.empty()) {
    std::ofstream sj(std::filesystem::path(out_dir) / "summary.json");
    sj << result.summary_json << "\n";
  }
  return result;
}

}  // namespace deer
