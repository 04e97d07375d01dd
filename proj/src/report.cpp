#include <fstream>
#include <sstream>

#include "json.hpp"

#include "deer/sim.hpp"

namespace deer {

namespace {

using nlohmann::json;

json counters_to_json(const SimCounters& c) {
  return json{{"cycles", c.cycles},
              {"instructions", c.instructions},
              {"l1i_accesses", c.l1i_accesses},
              {"l1i_misses", c.l1i_misses},
              {"l2_demand_accesses", c.l2_demand_accesses},
              {"l2_demand_misses", c.l2_demand_misses},
              {"l2_cold_misses", c.l2_cold_misses},
              {"l2_noncold_misses", c.l2_noncold_misses},
              {"triggers", c.triggers},
              {"metadata_requests", c.metadata_requests},
              {"metadata_misses", c.metadata_misses},
              {"prefetches_issued", c.prefetches_issued},
              {"pf_hit_redundant", c.pf_hit_redundant},
              {"pf_useful_cold", c.pf_useful_cold},
              {"pf_useful_noncold", c.pf_useful_noncold},
              {"pf_evicted_without_use", c.pf_evicted_without_use},
              {"pf_dropped_from_buffer", c.pf_dropped_from_buffer},
              {"onchip_storage_bytes", c.onchip_storage_bytes},
              {"recording_storage_bytes", c.recording_storage_bytes},
              {"cold_first_touches_after_first_trigger", c.cold_first_touches_after_first_trigger},
              {"cold_covered_after_first_trigger", c.cold_covered_after_first_trigger}};
}

SimCounters counters_from_json(const json& j) {
  SimCounters c;
  c.cycles = j.at("cycles");
  c.instructions = j.at("instructions");
  c.l1i_accesses = j.at("l1i_accesses");
  c.l1i_misses = j.at("l1i_misses");
  c.l2_demand_accesses = j.at("l2_demand_accesses");
  c.l2_demand_misses = j.at("l2_demand_misses");
  c.l2_cold_misses = j.at("l2_cold_misses");
  c.l2_noncold_misses = j.at("l2_noncold_misses");
  c.triggers = j.at("triggers");
  c.metadata_requests = j.at("metadata_requests");
  c.metadata_misses = j.at("metadata_misses");
  c.prefetches_issued = j.at("prefetches_issued");
  c.pf_hit_redundant = j.at("pf_hit_redundant");
  c.pf_useful_cold = j.at("pf_useful_cold");
  c.pf_useful_noncold = j.at("pf_useful_noncold");
  c.pf_evicted_without_use = j.at("pf_evicted_without_use");
  c.pf_dropped_from_buffer = j.at("pf_dropped_from_buffer");
  c.onchip_storage_bytes = j.at("onchip_storage_bytes");
  c.recording_storage_bytes = j.at("recording_storage_bytes");
  c.cold_first_touches_after_first_trigger = j.at("cold_first_touches_after_first_trigger");
  c.cold_covered_after_first_trigger = j.at("cold_covered_after_first_trigger");
  return c;
}

}  // namespace

std::string report_to_json(const SimReport& r) {
  json j;
  j["schema"] = "deer-report-v1";
  j["trace"] = {{"name", r.trace_name}, {"instructions", r.trace_instructions}};
  j["mode"] = to_string(r.mode);
  j["label"] = r.label;
  j["cache"] = {{"l1i_bytes", r.cache.l1i_bytes}, {"l1i_assoc", r.cache.l1i_assoc},
                {"l2_bytes", r.cache.l2_bytes},   {"l2_assoc", r.cache.l2_assoc},
                {"line_size", r.cache.line_size}, {"lat_l1", r.cache.lat_l1},
                {"lat_l2", r.cache.lat_l2},       {"lat_dram", r.cache.lat_dram}};
  j["dru"] = {{"ras_size", r.dru.ras_size},
              {"prefetch_buffer_size", r.dru.prefetch_buffer_size},
              {"metadata_load_latency", r.dru.metadata_load_latency},
              {"ras_top_prefetch", r.dru.ras_top_prefetch},
              {"issue_bandwidth", r.dru.issue_bandwidth},
              {"metadata_cache_entries", r.dru.metadata_cache_entries},
              {"runahead_depth", r.dru.runahead_depth},
              {"oracle_distance", r.dru.oracle_distance}};
  j["counters"] = counters_to_json(r.counters);
  if (r.accuracy)
    j["accuracy"] = {{"count", r.accuracy->count},
                     {"empty_predictions", r.accuracy->empty_predictions},
                     {"min", r.accuracy->min},
                     {"q1", r.accuracy->q1},
                     {"median", r.accuracy->median},
                     {"q3", r.accuracy->q3},
                     {"max", r.accuracy->max},
                     {"mean", r.accuracy->mean}};
  if (r.depth)
    j["effective_depth"] = {{"dynamic_insts_mean", r.depth->dynamic_insts_mean},
                            {"static_insts_mean", r.depth->static_insts_mean},
                            {"cycles_skipped_ratio", r.depth->cycles_skipped_ratio},
                            {"qualifying", r.depth->qualifying}};
  if (r.divergence_rate) j["divergence_rate"] = *r.divergence_rate;
  return j.dump(2);
}

SimReport report_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    throw Error(ErrorKind::data, std::string("bad report json: ") + e.what());
  }
  if (j.value("schema", "") != "deer-report-v1")
    throw Error(ErrorKind::data, "not a deer-report-v1 document");
  SimReport r;
  r.trace_name = j.at("trace").at("name");
  r.trace_instructions = j.at("trace").at("instructions");
  auto mode = sim_mode_from_string(j.at("mode"));
  if (!mode) throw Error(ErrorKind::data, "unknown mode in report");
  r.mode = *mode;
  r.label = j.value("label", "");
  const auto& jc = j.at("cache");
  r.cache.l1i_bytes = jc.at("l1i_bytes");
  r.cache.l1i_assoc = jc.at("l1i_assoc");
  r.cache.l2_bytes = jc.at("l2_bytes");
  r.cache.l2_assoc = jc.at("l2_assoc");
  r.cache.line_size = jc.at("line_size");
  r.cache.lat_l1 = jc.at("lat_l1");
  r.cache.lat_l2 = jc.at("lat_l2");
  r.cache.lat_dram = jc.at("lat_dram");
  const auto& jd = j.at("dru");
  r.dru.mode = r.mode;
  r.dru.ras_size = jd.at("ras_size");
  r.dru.prefetch_buffer_size = jd.at("prefetch_buffer_size");
  r.dru.metadata_load_latency = jd.at("metadata_load_latency");
  r.dru.ras_top_prefetch = jd.at("ras_top_prefetch");
  r.dru.issue_bandwidth = jd.at("issue_bandwidth");
  r.dru.metadata_cache_entries = jd.at("metadata_cache_entries");
  r.dru.runahead_depth = jd.at("runahead_depth");
  r.dru.oracle_distance = jd.at("oracle_distance");
  r.counters = counters_from_json(j.at("counters"));
  if (j.contains("accuracy")) {
    AccuracySummary a;
    const auto& ja = j.at("accuracy");
    a.count = ja.at("count");
    a.empty_predictions = ja.at("empty_predictions");
    a.min = ja.at("min");
    a.q1 = ja.at("q1");
    a.median = ja.at("median");
    a.q3 = ja.at("q3");
    a.max = ja.at("max");
    a.mean = ja.at("mean");
    r.accuracy = a;
  }
  if (j.contains("effective_depth")) {
    DepthSummary d;
    const auto& jd2 = j.at("effective_depth");
    d.dynamic_insts_mean = jd2.at("dynamic_insts_mean");
    d.static_insts_mean = jd2.at("static_insts_mean");
    d.cycles_skipped_ratio = jd2.at("cycles_skipped_ratio");
    d.qualifying = jd2.at("qualifying");
    r.depth = d;
  }
  if (j.contains("divergence_rate")) r.divergence_rate = j.at("divergence_rate").get<f64>();
  return r;
}

void save_report(const SimReport& r, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error(ErrorKind::io, "cannot open for writing: " + path);
  f << report_to_json(r) << "\n";
  if (!f) throw Error(ErrorKind::io, "write failure: " + path);
}

SimReport load_report(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorKind::io, "cannot open report: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return report_from_json(ss.str());
}

}  // namespace deer
