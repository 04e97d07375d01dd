#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "deer/hyperblock.hpp"
#include "deer/metacodec.hpp"
#include "deer/metrics.hpp"
#include "deer/rivals.hpp"
#include "deer/sim.hpp"
#include "deer/ssra.hpp"
#include "deer/types.hpp"

namespace deer {

struct MetadataBuild {
  MetadataTable table;
  std::map<Addr, SSRAChain> chains;  // post-pruning
  u64 pruned_chains = 0;
  u64 dropped_lines = 0;  // lines the encoder had to shed
  u64 exercised_code_bytes = 0;
};

HBAnalysis analyze_trace(const Trace& trace, const HBConfig& config);

MetadataBuild build_metadata(const Trace& trace, const HBAnalysis& analysis,
                             const SSRAConfig& config, HashConfig hash = {});

struct RunSpec {
  SimMode mode = SimMode::ssra;
  CacheConfig cache;
  DRUConfig dru;
  HBConfig hb;
  SSRAConfig ssra;
  RnRConfig rnr;
  bool holdout = false;  // train on the first half, simulate the second
  bool with_accuracy = true;
  std::string label;
};

// End-to-end: analysis, metadata, simulation, and accuracy metrics for one
// configuration. Reuses a caller-provided analysis when the spec allows it.
SimReport run_configured(const Trace& trace, const RunSpec& spec,
                         const HBAnalysis* shared_analysis = nullptr);

struct ExperimentSpec {
  std::string name = "experiment";
  std::string trace_file;     // one of trace_file / workload_spec_file
  std::string workload_spec_file;
  HBConfig hb;
  CacheConfig cache;
  DRUConfig dru;
  SSRAConfig ssra;
  RnRConfig rnr;
  std::vector<SimMode> modes{SimMode::off, SimMode::ssra};
  bool with_accuracy = true;
  bool holdout = false;
  std::vector<u32> sweep_md_latency;
  std::vector<u32> sweep_lastn;
  std::vector<u32> sweep_pfb;
  std::vector<u32> sweep_ras;
  std::vector<u32> sweep_depth;  // dynamic mode with ideal metadata

  static ExperimentSpec from_toml_file(const std::string& path);
  static ExperimentSpec from_toml_text(const std::string& text);
  void validate() const;
};

struct ExperimentResult {
  std::vector<SimReport> mode_reports;   // one per requested mode
  std::vector<SimReport> sweep_reports;  // one per sweep point
  std::string comparison_csv;
  std::string comparison_json;
  std::string summary_json;
};

ExperimentResult run_experiment(const ExperimentSpec& spec, const std::string& out_dir,
                                u32 threads = 1);

}  // namespace deer
