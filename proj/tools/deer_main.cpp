// deer - trace analysis, metadata generation, and cache simulation driver.
// A thin client of the libdeer C API.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "deer.h"

namespace {

bool g_json_errors = false;

[[noreturn]] void fail(deer_status status, const std::string& message) {
  int exit_code = status == DEER_ERR_USAGE ? 1 : 2;
  if (g_json_errors) {
    std::string kind = status == DEER_ERR_USAGE  ? "usage"
                       : status == DEER_ERR_DATA ? "data"
                       : status == DEER_ERR_IO   ? "io"
                                                 : "internal";
    fprintf(stderr, "{\"error\": \"%s\", \"kind\": \"%s\", \"exit\": %d}\n", message.c_str(),
            kind.c_str(), exit_code);
  } else {
    fprintf(stderr, "deer: error: %s\n", message.c_str());
  }
  std::exit(exit_code);
}

void check(deer_status status) {
  if (status != DEER_OK) fail(status, deer_last_error());
}

std::string take_string(char* s) {
  std::string out = s ? s : "";
  deer_string_free(s);
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail(DEER_ERR_IO, "cannot open file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) fail(DEER_ERR_IO, "cannot open for writing: " + path);
  f << text;
}

// "256k", "2m", "64", "1g" -> bytes
uint64_t parse_size(const std::string& s) {
  if (s.empty()) fail(DEER_ERR_USAGE, "empty size");
  char suffix = static_cast<char>(std::tolower(s.back()));
  uint64_t mult = 1;
  std::string digits = s;
  if (suffix == 'k' || suffix == 'm' || suffix == 'g') {
    mult = suffix == 'k' ? 1024ull : suffix == 'm' ? 1024ull * 1024 : 1024ull * 1024 * 1024;
    digits = s.substr(0, s.size() - 1);
  }
  try {
    return std::stoull(digits) * mult;
  } catch (...) {
    fail(DEER_ERR_USAGE, "bad size value: " + s);
  }
}

struct TraceHandle {
  deer_trace* p = nullptr;
  ~TraceHandle() { deer_trace_free(p); }
};
struct AnalysisHandle {
  deer_analysis* p = nullptr;
  ~AnalysisHandle() { deer_analysis_free(p); }
};
struct MetadataHandle {
  deer_metadata* p = nullptr;
  ~MetadataHandle() { deer_metadata_free(p); }
};
struct ReportHandle {
  deer_report* p = nullptr;
  ~ReportHandle() { deer_report_free(p); }
};

struct SimulateArgs {
  std::string trace_path;
  std::string meta_path;
  std::string mode = "ssra";
  std::string l1i = "256k";
  std::string l2 = "2m";
  uint32_t l1i_assoc = 8, l2_assoc = 8, line = 64;
  uint32_t lat_l1 = 4, lat_l2 = 40, lat_dram = 200;
  uint32_t md_latency = 400, pfb = 32, ras = 16, issue_bw = 1;
  uint32_t md_cache = 256, runahead_depth = 50;
  uint64_t oracle_n = 1000;
  bool no_ras_top = false;
  bool holdout = false;
  bool no_accuracy = false;
  bool rnr_uncapped = false;
  double threshold = 0.8;
  uint32_t depth = 50, lastn = 16;
  std::string out;
  std::string label;
};

deer_mode mode_from(const std::string& s) {
  if (s == "off") return DEER_MODE_OFF;
  if (s == "ssra") return DEER_MODE_SSRA;
  if (s == "dynamic") return DEER_MODE_DYNAMIC;
  if (s == "oracle") return DEER_MODE_ORACLE;
  if (s == "rnr50") return DEER_MODE_RNR50;
  if (s == "rnr-unique50") return DEER_MODE_RNR_UNIQUE50;
  fail(DEER_ERR_USAGE, "unknown mode: " + s);
}

int cmd_simulate(const SimulateArgs& args) {
  TraceHandle full;
  check(deer_trace_read(args.trace_path.c_str(), &full.p));

  // Default protocol: profile and simulate the same trace. With --holdout the
  // first half trains the metadata and the second half is simulated.
  TraceHandle train, test;
  uint64_t n = deer_trace_length(full.p);
  if (args.holdout) {
    check(deer_trace_slice(full.p, 0, n / 2, &train.p));
    check(deer_trace_slice(full.p, n / 2, n - n / 2, &test.p));
  }
  deer_trace* train_t = args.holdout ? train.p : full.p;
  deer_trace* test_t = args.holdout ? test.p : full.p;

  deer_mode mode = mode_from(args.mode);
  bool needs_analysis =
      mode == DEER_MODE_DYNAMIC || mode == DEER_MODE_RNR50 || mode == DEER_MODE_RNR_UNIQUE50 ||
      (!args.no_accuracy && mode != DEER_MODE_OFF && mode != DEER_MODE_ORACLE);
  bool needs_metadata = mode == DEER_MODE_SSRA;

  AnalysisHandle analysis;
  if (needs_analysis) {
    deer_analyze_params ap;
    deer_analyze_params_init(&ap);
    ap.probability_threshold = args.threshold;
    check(deer_analyze(train_t, &ap, &analysis.p));
  }

  MetadataHandle metadata;
  if (needs_metadata) {
    if (!args.meta_path.empty() && !args.holdout) {
      check(deer_metadata_load(args.meta_path.c_str(), &metadata.p));
    } else {
      if (!analysis.p) {
        deer_analyze_params ap;
        deer_analyze_params_init(&ap);
        ap.probability_threshold = args.threshold;
        check(deer_analyze(train_t, &ap, &analysis.p));
      }
      deer_meta_params mp;
      deer_meta_params_init(&mp);
      mp.max_depth_hbs = args.depth;
      mp.max_cachelines_per_entry = args.lastn;
      check(deer_metadata_build(train_t, analysis.p, &mp, &metadata.p));
    }
  }

  deer_sim_params sp;
  deer_sim_params_init(&sp);
  sp.mode = mode;
  sp.l1i_bytes = parse_size(args.l1i);
  sp.l1i_assoc = args.l1i_assoc;
  sp.l2_bytes = parse_size(args.l2);
  sp.l2_assoc = args.l2_assoc;
  sp.line_size = args.line;
  sp.lat_l1 = args.lat_l1;
  sp.lat_l2 = args.lat_l2;
  sp.lat_dram = args.lat_dram;
  sp.ras_size = args.ras;
  sp.prefetch_buffer_size = args.pfb;
  sp.metadata_load_latency = args.md_latency;
  sp.ras_top_prefetch = args.no_ras_top ? 0 : 1;
  sp.issue_bandwidth = args.issue_bw;
  sp.metadata_cache_entries = args.md_cache;
  sp.runahead_depth = args.runahead_depth;
  sp.oracle_distance = args.oracle_n;
  sp.rnr_uncapped = args.rnr_uncapped ? 1 : 0;
  sp.with_accuracy = args.no_accuracy ? 0 : 1;
  sp.ssra_depth = args.depth;
  sp.ssra_lastn = args.lastn;
  std::string label = args.label.empty() ? args.mode : args.label;
  sp.label = label.c_str();

  ReportHandle report;
  check(deer_simulate(test_t, analysis.p, metadata.p, &sp, &report.p));

  char* json = nullptr;
  check(deer_report_json(report.p, &json));
  std::string text = take_string(json);
  if (args.out.empty())
    printf("%s\n", text.c_str());
  else
    check(deer_report_save(report.p, args.out.c_str()));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deer - deep-runahead instruction prefetch toolkit"};
  app.require_subcommand(1);
  uint64_t seed = 0;
  bool seed_set = false;
  uint32_t threads = 1;
  app.add_flag("--json-errors", g_json_errors, "machine-readable errors on stderr");
  app.add_option("--seed", seed, "override workload rng seed")->each([&](const std::string&) {
    seed_set = true;
  });
  app.add_option("--threads", threads, "worker threads for experiments");

  // trace gen / trace info
  auto* trace_cmd = app.add_subcommand("trace", "trace utilities");
  trace_cmd->require_subcommand(1);
  auto* gen = trace_cmd->add_subcommand("gen", "generate a synthetic workload trace");
  std::string gen_spec, gen_out, gen_truth;
  gen->add_option("--spec", gen_spec, "workload spec (TOML)")->required();
  gen->add_option("-o,--out", gen_out, "output trace path")->required();
  gen->add_option("--truth", gen_truth, "ground-truth JSON path (default <out>.truth.json)");
  auto* info = trace_cmd->add_subcommand("info", "print trace header and class counts");
  std::string info_path;
  info->add_option("trace", info_path, "trace file")->required();

  // analyze cfg / analyze hb
  auto* analyze_cmd = app.add_subcommand("analyze", "trace analysis dumps");
  analyze_cmd->require_subcommand(1);
  std::string an_trace, an_out;
  double an_threshold = 0.8;
  auto* cfg_cmd = analyze_cmd->add_subcommand("cfg", "dump the reconstructed CFG as JSON");
  cfg_cmd->add_option("trace", an_trace)->required();
  cfg_cmd->add_option("-o,--out", an_out, "output JSON (default stdout)");
  auto* hb_cmd = analyze_cmd->add_subcommand("hb", "dump hyperblocks as JSON");
  hb_cmd->add_option("trace", an_trace)->required();
  hb_cmd->add_option("-o,--out", an_out, "output JSON (default stdout)");
  hb_cmd->add_option("--threshold", an_threshold, "HB probability threshold");

  // genmeta
  auto* genmeta = app.add_subcommand("genmeta", "build the binary metadata table");
  std::string gm_trace, gm_out;
  uint32_t gm_depth = 50, gm_lastn = 16;
  double gm_threshold = 0.8;
  bool gm_noprune = false;
  genmeta->add_option("trace", gm_trace)->required();
  genmeta->add_option("-o,--out", gm_out)->required();
  genmeta->add_option("--depth", gm_depth, "max runahead depth in HBs");
  genmeta->add_option("--lastn", gm_lastn, "cachelines kept per entry");
  genmeta->add_option("--threshold", gm_threshold, "HB probability threshold");
  genmeta->add_flag("--no-prune", gm_noprune, "disable containment pruning");

  // simulate
  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "run the cache + prefetcher simulation");
  simulate->add_option("trace", sim.trace_path)->required();
  simulate->add_option("--meta", sim.meta_path, "metadata table (ssra mode)");
  simulate->add_option("--mode", sim.mode, "off|ssra|dynamic|oracle|rnr50|rnr-unique50");
  simulate->add_option("--l1i", sim.l1i, "L1I size (e.g. 256k)");
  simulate->add_option("--l2", sim.l2, "L2 size (e.g. 2m)");
  simulate->add_option("--l1i-assoc", sim.l1i_assoc);
  simulate->add_option("--l2-assoc", sim.l2_assoc);
  simulate->add_option("--line", sim.line, "cacheline size");
  simulate->add_option("--lat-l1", sim.lat_l1);
  simulate->add_option("--lat-l2", sim.lat_l2);
  simulate->add_option("--lat-dram", sim.lat_dram);
  simulate->add_option("--md-latency", sim.md_latency, "metadata load latency (cycles)");
  simulate->add_option("--pfb", sim.pfb, "prefetch buffer entries");
  simulate->add_option("--ras", sim.ras, "runahead RAS entries");
  simulate->add_option("--issue-bw", sim.issue_bw, "prefetches issued per cycle");
  simulate->add_option("--md-cache", sim.md_cache, "dynamic metadata cache entries");
  simulate->add_option("--runahead-depth", sim.runahead_depth, "dynamic walk depth");
  simulate->add_option("--oracle-n", sim.oracle_n, "oracle lookahead (instructions)");
  simulate->add_flag("--no-ras-top", sim.no_ras_top, "disable the RAS-top metadata request");
  simulate->add_flag("--rnr-uncapped", sim.rnr_uncapped, "replay whole RnR recordings (no last-n cap)");
  simulate->add_flag("--holdout", sim.holdout, "train on first half, simulate second half");
  simulate->add_flag("--no-accuracy", sim.no_accuracy, "skip IOU/depth metrics");
  simulate->add_option("--threshold", sim.threshold, "HB probability threshold");
  simulate->add_option("--depth", sim.depth, "SSRA chain depth");
  simulate->add_option("--lastn", sim.lastn, "SSRA last-N cachelines");
  simulate->add_option("--label", sim.label, "label stored in the report");
  simulate->add_option("-o,--out", sim.out, "report JSON path (default stdout)");

  // report
  auto* report_cmd = app.add_subcommand("report", "compare simulation reports (baseline first)");
  std::vector<std::string> report_files;
  std::string report_out, report_plot, report_json_out;
  report_cmd->add_option("reports", report_files, "report JSON files")->required()->expected(-2);
  report_cmd->add_option("-o,--out", report_out, "CSV output (default stdout)");
  report_cmd->add_option("--plot", report_plot, "SVG bar chart output");
  report_cmd->add_option("--json", report_json_out, "JSON table output");

  // experiment
  auto* exp_cmd = app.add_subcommand("experiment", "run a recipe of simulation points");
  std::string exp_recipe, exp_out;
  exp_cmd->add_option("recipe", exp_recipe, "experiment recipe (TOML)")->required();
  exp_cmd->add_option("-o,--out", exp_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    if (g_json_errors) {
      fprintf(stderr, "{\"error\": \"%s\", \"kind\": \"usage\", \"exit\": 1}\n", e.what());
      return 1;
    }
    app.exit(e);
    return 1;
  }

  if (gen->parsed()) {
    std::string spec = read_file(gen_spec);
    TraceHandle t;
    char* truth = nullptr;
    check(deer_trace_generate(spec.c_str(), seed_set ? &seed : nullptr, &t.p, &truth));
    check(deer_trace_write(t.p, gen_out.c_str()));
    std::string truth_path = gen_truth.empty() ? gen_out + ".truth.json" : gen_truth;
    write_file(truth_path, take_string(truth));
    char* info_json = nullptr;
    check(deer_trace_info_json(t.p, &info_json));
    printf("%s\n", take_string(info_json).c_str());
    return 0;
  }
  if (info->parsed()) {
    TraceHandle t;
    check(deer_trace_read(info_path.c_str(), &t.p));
    char* json = nullptr;
    check(deer_trace_info_json(t.p, &json));
    printf("%s\n", take_string(json).c_str());
    return 0;
  }
  if (cfg_cmd->parsed() || hb_cmd->parsed()) {
    TraceHandle t;
    check(deer_trace_read(an_trace.c_str(), &t.p));
    deer_analyze_params ap;
    deer_analyze_params_init(&ap);
    ap.probability_threshold = an_threshold;
    AnalysisHandle a;
    check(deer_analyze(t.p, &ap, &a.p));
    char* json = nullptr;
    if (cfg_cmd->parsed())
      check(deer_analysis_cfg_json(a.p, &json));
    else
      check(deer_analysis_hb_json(a.p, &json));
    std::string text = take_string(json);
    if (an_out.empty())
      printf("%s\n", text.c_str());
    else
      write_file(an_out, text + "\n");
    return 0;
  }
  if (genmeta->parsed()) {
    TraceHandle t;
    check(deer_trace_read(gm_trace.c_str(), &t.p));
    deer_analyze_params ap;
    deer_analyze_params_init(&ap);
    ap.probability_threshold = gm_threshold;
    AnalysisHandle a;
    check(deer_analyze(t.p, &ap, &a.p));
    deer_meta_params mp;
    deer_meta_params_init(&mp);
    mp.max_depth_hbs = gm_depth;
    mp.max_cachelines_per_entry = gm_lastn;
    mp.containment_pruning = gm_noprune ? 0 : 1;
    MetadataHandle m;
    check(deer_metadata_build(t.p, a.p, &mp, &m.p));
    check(deer_metadata_save(m.p, gm_out.c_str()));
    char* stats = nullptr;
    check(deer_metadata_stats_json(m.p, &stats));
    printf("%s\n", take_string(stats).c_str());
    return 0;
  }
  if (simulate->parsed()) return cmd_simulate(sim);
  if (report_cmd->parsed()) {
    std::vector<ReportHandle> handles(report_files.size());
    std::vector<const deer_report*> ptrs;
    for (size_t i = 0; i < report_files.size(); ++i) {
      check(deer_report_load(report_files[i].c_str(), &handles[i].p));
      ptrs.push_back(handles[i].p);
    }
    char* csv = nullptr;
    check(deer_compare_csv(ptrs.data(), ptrs.size(), &csv));
    std::string text = take_string(csv);
    if (report_out.empty())
      printf("%s", text.c_str());
    else
      write_file(report_out, text);
    if (!report_json_out.empty()) {
      char* js = nullptr;
      check(deer_compare_json(ptrs.data(), ptrs.size(), &js));
      write_file(report_json_out, take_string(js) + "\n");
    }
    if (!report_plot.empty()) check(deer_compare_svg(ptrs.data(), ptrs.size(), report_plot.c_str()));
    return 0;
  }
  if (exp_cmd->parsed()) {
    char* summary = nullptr;
    check(deer_run_experiment(exp_recipe.c_str(), exp_out.c_str(), threads, &summary));
    printf("%s\n", take_string(summary).c_str());
    return 0;
  }
  return 0;
}
