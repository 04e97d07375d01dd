#include "deer.h"

#include <cstring>
#include <memory>
#include <string>

#include "deer/experiment.hpp"
#include "deer/metrics.hpp"
#include "deer/synth.hpp"
#include "deer/trace_io.hpp"

using namespace deer;

struct deer_trace {
  Trace trace;
};
struct deer_analysis {
  CFG cfg;
  HBAnalysis analysis;
};
struct deer_metadata {
  MetadataTable table;
};
struct deer_report {
  SimReport report;
};

namespace {

thread_local std::string g_last_error;

deer_status status_of(ErrorKind k) {
  switch (k) {
    case ErrorKind::usage: return DEER_ERR_USAGE;
    case ErrorKind::data: return DEER_ERR_DATA;
    case ErrorKind::io: return DEER_ERR_IO;
  }
  return DEER_ERR_INTERNAL;
}

template <typename Fn>
deer_status guarded(Fn&& fn) {
  try {
    fn();
    return DEER_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return DEER_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return DEER_ERR_INTERNAL;
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

deer_status require(bool ok, const char* what) {
  if (ok) return DEER_OK;
  g_last_error = std::string("null argument: ") + what;
  return DEER_ERR_USAGE;
}

SimMode to_mode(deer_mode m) {
  switch (m) {
    case DEER_MODE_OFF: return SimMode::off;
    case DEER_MODE_SSRA: return SimMode::ssra;
    case DEER_MODE_DYNAMIC: return SimMode::dynamic;
    case DEER_MODE_ORACLE: return SimMode::oracle;
    case DEER_MODE_RNR50: return SimMode::rnr50;
    case DEER_MODE_RNR_UNIQUE50: return SimMode::rnr_unique50;
  }
  throw Error(ErrorKind::usage, "bad mode value");
}

}  // namespace

extern "C" {

uint32_t deer_abi_version(void) { return 1; }

const char* deer_last_error(void) { return g_last_error.c_str(); }

void deer_string_free(char* s) { std::free(s); }

deer_status deer_trace_read(const char* path, deer_trace** out) {
  if (auto s = require(path && out, "path/out")) return s;
  return guarded([&] { *out = new deer_trace{read_trace(path)}; });
}

deer_status deer_trace_write(const deer_trace* t, const char* path) {
  if (auto s = require(t && path, "trace/path")) return s;
  return guarded([&] { write_trace(t->trace, path); });
}

deer_status deer_trace_generate(const char* spec_toml, const uint64_t* seed_override,
                                deer_trace** out, char** truth_json_out) {
  if (auto s = require(spec_toml && out, "spec/out")) return s;
  return guarded([&] {
    SynthWorkloadSpec spec = SynthWorkloadSpec::from_toml_text(spec_toml);
    if (seed_override) spec.rng_seed = *seed_override;
    SynthResult result = generate_synthetic(spec);
    if (truth_json_out) *truth_json_out = dup_string(result.truth.to_json());
    *out = new deer_trace{std::move(result.trace)};
  });
}

deer_status deer_trace_info_json(const deer_trace* t, char** json_out) {
  if (auto s = require(t && json_out, "trace/out")) return s;
  return guarded([&] { *json_out = dup_string(trace_info_json(t->trace)); });
}

deer_status deer_trace_slice(const deer_trace* t, uint64_t first, uint64_t count,
                             deer_trace** out) {
  if (auto s = require(t && out, "trace/out")) return s;
  return guarded([&] { *out = new deer_trace{slice_trace(t->trace, first, count)}; });
}

uint64_t deer_trace_length(const deer_trace* t) { return t ? t->trace.records.size() : 0; }

void deer_trace_free(deer_trace* t) { delete t; }

void deer_analyze_params_init(deer_analyze_params* p) {
  if (!p) return;
  p->probability_threshold = 0.8;
  p->mls_exec_floor = 2;
}

deer_status deer_analyze(const deer_trace* t, const deer_analyze_params* p, deer_analysis** out) {
  if (auto s = require(t && out, "trace/out")) return s;
  return guarded([&] {
    HBConfig config;
    if (p) {
      config.probability_threshold = p->probability_threshold;
      config.mls_exec_floor = p->mls_exec_floor;
    }
    auto handle = std::make_unique<deer_analysis>();
    handle->cfg = build_cfg(t->trace);
    handle->analysis = analyze_hyperblocks(t->trace, handle->cfg, config);
    *out = handle.release();
  });
}

deer_status deer_analysis_cfg_json(const deer_analysis* a, char** json_out) {
  if (auto s = require(a && json_out, "analysis/out")) return s;
  return guarded([&] { *json_out = dup_string(cfg_to_json(a->cfg)); });
}

deer_status deer_analysis_hb_json(const deer_analysis* a, char** json_out) {
  if (auto s = require(a && json_out, "analysis/out")) return s;
  return guarded([&] { *json_out = dup_string(hbs_to_json(a->analysis)); });
}

void deer_analysis_free(deer_analysis* a) { delete a; }

void deer_meta_params_init(deer_meta_params* p) {
  if (!p) return;
  p->max_depth_hbs = 50;
  p->max_cachelines_per_entry = 16;
  p->containment_pruning = 1;
  p->hash_seed = HashConfig{}.seed;
}

deer_status deer_metadata_build(const deer_trace* t, const deer_analysis* a,
                                const deer_meta_params* p, deer_metadata** out) {
  if (auto s = require(t && a && out, "trace/analysis/out")) return s;
  return guarded([&] {
    SSRAConfig config;
    HashConfig hash;
    if (p) {
      config.max_depth_hbs = p->max_depth_hbs;
      config.max_cachelines_per_entry = p->max_cachelines_per_entry;
      config.containment_pruning = p->containment_pruning != 0;
      hash.seed = p->hash_seed;
    }
    MetadataBuild built = build_metadata(t->trace, a->analysis, config, hash);
    *out = new deer_metadata{std::move(built.table)};
  });
}

deer_status deer_metadata_save(const deer_metadata* m, const char* path) {
  if (auto s = require(m && path, "metadata/path")) return s;
  return guarded([&] { m->table.save(path); });
}

deer_status deer_metadata_load(const char* path, deer_metadata** out) {
  if (auto s = require(path && out, "path/out")) return s;
  return guarded([&] { *out = new deer_metadata{MetadataTable::load(path)}; });
}

deer_status deer_metadata_stats_json(const deer_metadata* m, char** json_out) {
  if (auto s = require(m && json_out, "metadata/out")) return s;
  return guarded([&] { *json_out = dup_string(m->table.stats_json()); });
}

void deer_metadata_free(deer_metadata* m) { delete m; }

void deer_sim_params_init(deer_sim_params* p) {
  if (!p) return;
  CacheConfig cache;
  DRUConfig dru;
  p->mode = DEER_MODE_SSRA;
  p->l1i_bytes = cache.l1i_bytes;
  p->l1i_assoc = cache.l1i_assoc;
  p->l2_bytes = cache.l2_bytes;
  p->l2_assoc = cache.l2_assoc;
  p->line_size = cache.line_size;
  p->lat_l1 = cache.lat_l1;
  p->lat_l2 = cache.lat_l2;
  p->lat_dram = cache.lat_dram;
  p->ras_size = dru.ras_size;
  p->prefetch_buffer_size = dru.prefetch_buffer_size;
  p->metadata_load_latency = dru.metadata_load_latency;
  p->ras_top_prefetch = dru.ras_top_prefetch ? 1 : 0;
  p->issue_bandwidth = dru.issue_bandwidth;
  p->metadata_cache_entries = dru.metadata_cache_entries;
  p->runahead_depth = dru.runahead_depth;
  p->oracle_distance = dru.oracle_distance;
  p->rnr_uncapped = 0;
  p->with_accuracy = 1;
  p->ssra_depth = 50;
  p->ssra_lastn = 16;
  p->label = nullptr;
}

deer_status deer_simulate(const deer_trace* t, const deer_analysis* a, const deer_metadata* m,
                          const deer_sim_params* p, deer_report** out) {
  if (auto s = require(t && p && out, "trace/params/out")) return s;
  return guarded([&] {
    SimMode mode = to_mode(p->mode);
    CacheConfig cache;
    cache.l1i_bytes = p->l1i_bytes;
    cache.l1i_assoc = p->l1i_assoc;
    cache.l2_bytes = p->l2_bytes;
    cache.l2_assoc = p->l2_assoc;
    cache.line_size = p->line_size;
    cache.lat_l1 = p->lat_l1;
    cache.lat_l2 = p->lat_l2;
    cache.lat_dram = p->lat_dram;
    DRUConfig dru;
    dru.mode = mode;
    dru.ras_size = p->ras_size;
    dru.prefetch_buffer_size = p->prefetch_buffer_size;
    dru.metadata_load_latency = p->metadata_load_latency;
    dru.ras_top_prefetch = p->ras_top_prefetch != 0;
    dru.issue_bandwidth = p->issue_bandwidth;
    dru.metadata_cache_entries = p->metadata_cache_entries;
    dru.runahead_depth = p->runahead_depth;
    dru.oracle_distance = p->oracle_distance;
    cache.validate();
    dru.validate();
    SimOptions opts;
    if (p->label) opts.label = p->label;

    SSRAConfig ssra;
    ssra.max_depth_hbs = p->ssra_depth;
    ssra.max_cachelines_per_entry = p->ssra_lastn;

    SimReport report;
    switch (mode) {
      case SimMode::off:
        report = simulate(t->trace, nullptr, cache, dru, opts);
        break;
      case SimMode::oracle:
        report = run_oracle(t->trace, cache, dru.oracle_distance, opts);
        break;
      case SimMode::ssra: {
        if (!m) throw Error(ErrorKind::usage, "ssra mode needs a metadata handle");
        report = simulate(t->trace, &m->table, cache, dru, opts);
        if (p->with_accuracy) {
          if (!a) throw Error(ErrorKind::usage, "accuracy needs an analysis handle");
          auto chains = build_all_chains(a->analysis, ssra);
          SsraPredictor predictor(chains);
          AccuracyAndDepth ad = iou_accuracy(t->trace, predictor);
          report.accuracy = ad.accuracy.summarize();
          report.depth = ad.depth.summarize();
          report.divergence_rate = divergence_rate(t->trace, a->analysis, chains);
        }
        break;
      }
      case SimMode::dynamic: {
        if (!a) throw Error(ErrorKind::usage, "dynamic mode needs an analysis handle");
        report = simulate_dynamic(t->trace, a->analysis, cache, dru, opts);
        if (p->with_accuracy) {
          DynamicWalkPredictor predictor(a->analysis, dru.runahead_depth,
                                         t->trace.meta.instruction_size);
          AccuracyAndDepth ad = iou_accuracy(t->trace, predictor);
          report.accuracy = ad.accuracy.summarize();
          report.depth = ad.depth.summarize();
        }
        break;
      }
      case SimMode::rnr50:
      case SimMode::rnr_unique50: {
        if (!a) throw Error(ErrorKind::usage, "rnr modes need an analysis handle");
        RnRConfig rnr;
        rnr.variant = mode == SimMode::rnr50 ? RnRVariant::last50_hb : RnRVariant::unique50_hb;
        rnr.replay_lastn = p->rnr_uncapped ? 0 : p->ssra_lastn;
        report = rnr_simulate(t->trace, a->analysis, rnr, cache, dru, opts);
        if (p->with_accuracy) {
          RnRConfig scheme = rnr;
          scheme.replay_lastn = 0;
          RnrPredictor predictor(a->analysis, scheme);
          AccuracyAndDepth ad = iou_accuracy(t->trace, predictor);
          report.accuracy = ad.accuracy.summarize();
          report.depth = ad.depth.summarize();
        }
        break;
      }
    }
    *out = new deer_report{std::move(report)};
  });
}

deer_status deer_report_json(const deer_report* r, char** json_out) {
  if (auto s = require(r && json_out, "report/out")) return s;
  return guarded([&] { *json_out = dup_string(report_to_json(r->report)); });
}

deer_status deer_report_save(const deer_report* r, const char* path) {
  if (auto s = require(r && path, "report/path")) return s;
  return guarded([&] { save_report(r->report, path); });
}

deer_status deer_report_load(const char* path, deer_report** out) {
  if (auto s = require(path && out, "path/out")) return s;
  return guarded([&] { *out = new deer_report{load_report(path)}; });
}

void deer_report_free(deer_report* r) { delete r; }

namespace {
deer_status compare_guard(const deer_report* const* reports, size_t count,
                          std::vector<SimReport>& out) {
  if (!reports || count < 2) {
    g_last_error = "comparison needs at least two report handles";
    return DEER_ERR_USAGE;
  }
  for (size_t i = 0; i < count; ++i) {
    if (!reports[i]) {
      g_last_error = "null report handle";
      return DEER_ERR_USAGE;
    }
    out.push_back(reports[i]->report);
  }
  return DEER_OK;
}
}  // namespace

deer_status deer_compare_csv(const deer_report* const* reports, size_t count, char** csv_out) {
  if (auto s = require(csv_out != nullptr, "out")) return s;
  std::vector<SimReport> rs;
  if (auto s = compare_guard(reports, count, rs)) return s;
  return guarded([&] { *csv_out = dup_string(compare_report(rs).to_csv()); });
}

deer_status deer_compare_json(const deer_report* const* reports, size_t count, char** json_out) {
  if (auto s = require(json_out != nullptr, "out")) return s;
  std::vector<SimReport> rs;
  if (auto s = compare_guard(reports, count, rs)) return s;
  return guarded([&] { *json_out = dup_string(compare_report(rs).to_json()); });
}

deer_status deer_compare_svg(const deer_report* const* reports, size_t count, const char* path) {
  if (auto s = require(path != nullptr, "path")) return s;
  std::vector<SimReport> rs;
  if (auto s = compare_guard(reports, count, rs)) return s;
  return guarded([&] { compare_report(rs).write_svg(path); });
}

deer_status deer_run_experiment(const char* recipe_path, const char* out_dir, uint32_t threads,
                                char** summary_json_out) {
  if (auto s = require(recipe_path != nullptr, "recipe")) return s;
  return guarded([&] {
    ExperimentSpec spec = ExperimentSpec::from_toml_file(recipe_path);
    ExperimentResult result = run_experiment(spec, out_dir ? out_dir : "", threads);
    if (summary_json_out) *summary_json_out = dup_string(result.summary_json);
  });
}

}  // extern "C"
