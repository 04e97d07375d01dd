#include <filesystem>

#include "doctest.h"

#include "deer/experiment.hpp"
#include "deer/metrics.hpp"
#include "deer/synth.hpp"
#include "helpers/oracles.hpp"
#include "helpers/trace_builder.hpp"

using namespace deer;
using namespace deer::testing;

TEST_CASE("repeat distance: hand counts") {
  TraceBuilder b;
  b.step(0xA0).step(0xB0).step(0xA0);  // A B A -> distance 1 for A
  auto rep = repeat_distance(b.build());
  REQUIRE(rep.samples.size() == 1);
  CHECK(rep.samples[0] == 1);

  TraceBuilder once;
  once.step(0x10).step(0x20).step(0x30);
  CHECK(repeat_distance(once.build()).samples.empty());  // no pc repeats
}

TEST_CASE("repeat distance matches the brute-force set scan on a random trace") {
  SynthWorkloadSpec spec;
  spec.function_count = 20;
  spec.target_trace_length = 10000;
  spec.rng_seed = 12;
  Trace t = generate_synthetic(spec).trace;
  auto fast = repeat_distance(t);
  auto brute = brute_repeat_distance(t);
  REQUIRE(fast.samples.size() == brute.size());
  for (size_t i = 0; i < brute.size(); ++i) REQUIRE(fast.samples[i] == brute[i]);
}

TEST_CASE("iou arithmetic: identical, disjoint, and half-overlapping sets") {
  std::set<Addr> a{1, 2, 3}, b{1, 2, 3};
  CHECK(brute_iou(a, b) == doctest::Approx(1.0));
  std::set<Addr> c{4, 5};
  CHECK(brute_iou(a, c) == doctest::Approx(0.0));
  std::set<Addr> d{1, 2, 6, 7}, e{1, 2, 8, 9};  // |inter|=2, |union|=6 -> 1/3
  CHECK(brute_iou(d, e) == doctest::Approx(2.0 / 6.0));
  std::set<Addr> f{1, 2, 3, 4}, g{1, 2};  // |inter|=2, |union|=4 -> 0.5
  CHECK(brute_iou(f, g) == doctest::Approx(0.5));
}

TEST_CASE("iou_accuracy matches a brute-force recomputation per instance") {
  SynthWorkloadSpec spec;
  spec.function_count = 30;
  spec.target_trace_length = 15000;
  spec.rng_seed = 41;
  Trace t = generate_synthetic(spec).trace;
  HBAnalysis a = analyze_trace(t, HBConfig{});
  auto chains = build_all_chains(a, SSRAConfig{});

  SsraPredictor predictor(chains);
  AccuracyAndDepth ad = iou_accuracy(t, predictor);

  // recompute independently
  std::vector<f64> expect;
  u64 empty = 0;
  for (size_t i = 0; i < t.records.size(); ++i) {
    const auto& rec = t.records[i];
    if (!is_call(rec.iclass) && !is_return(rec.iclass)) continue;
    auto it = chains.find(rec.target);
    std::set<Addr> s_pr;
    if (it != chains.end())
      s_pr.insert(it->second.cachelines.begin(), it->second.cachelines.end());
    if (s_pr.empty()) {
      ++empty;
      continue;
    }
    BruteExecutedSet ex = brute_executed_set(t, i + 1, s_pr.size());
    expect.push_back(brute_iou(s_pr, ex.lines));
  }
  REQUIRE(ad.accuracy.ious.size() == expect.size());
  CHECK(ad.accuracy.empty_predictions == empty);
  for (size_t i = 0; i < expect.size(); ++i)
    REQUIRE(ad.accuracy.ious[i] == doctest::Approx(expect[i]).epsilon(1e-12));
}

TEST_CASE("effective depth: loop-free chains give ratio 1") {
  // a straight chain of calls with no repetition: dynamic == static
  TraceBuilder b;
  for (int rep = 0; rep < 4; ++rep) {
    b.call(0x100, 0x1000);
    b.run(0x1000, 7);
    b.call(0x101C, 0x2000);
    b.run(0x2000, 7);
    b.ret(0x201C, 0x1020);
    b.run(0x1020, 3);
    b.ret(0x1030, 0x104);
    b.jmp(0x104, 0x100);
  }
  Trace t = b.build();
  HBAnalysis a = analyze_trace(t, HBConfig{});
  auto chains = build_all_chains(a, SSRAConfig{});
  SsraPredictor predictor(chains);
  AccuracyAndDepth ad = iou_accuracy(t, predictor);
  DepthSummary d = ad.depth.summarize();
  REQUIRE(d.qualifying > 0);
  CHECK(d.cycles_skipped_ratio == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("effective depth: a 10x30 loop gives a ratio near 10") {
  Trace t = LoopFixture::trace(5, 10);
  HBAnalysis a = analyze_trace(t, HBConfig{});
  auto chains = build_all_chains(a, SSRAConfig{});
  SsraPredictor predictor(chains);
  AccuracyAndDepth ad = iou_accuracy(t, predictor);
  DepthSummary d = ad.depth.summarize();
  REQUIRE(d.qualifying > 0);
  CHECK(d.cycles_skipped_ratio > 9.0);
  CHECK(d.cycles_skipped_ratio < 11.0);
}

TEST_CASE("effective depth matches brute force and loop fixtures beat branchy ones") {
  Trace loopy = LoopFixture::trace(5, 10);
  Trace branchy = CallChainFixture::trace(20);

  auto depth_of = [](const Trace& t) {
    HBAnalysis a = analyze_trace(t, HBConfig{});
    auto chains = build_all_chains(a, SSRAConfig{});
    SsraPredictor predictor(chains);
    return iou_accuracy(t, predictor).depth.summarize();
  };
  DepthSummary dl = depth_of(loopy);
  DepthSummary db = depth_of(branchy);
  CHECK(dl.cycles_skipped_ratio > db.cycles_skipped_ratio * 3);

  // brute-force recount of the depth samples on the loop fixture
  HBAnalysis a = analyze_trace(loopy, HBConfig{});
  auto chains = build_all_chains(a, SSRAConfig{});
  std::vector<u64> dyn, stat;
  for (size_t i = 0; i < loopy.records.size(); ++i) {
    const auto& rec = loopy.records[i];
    if (!is_call(rec.iclass) && !is_return(rec.iclass)) continue;
    auto it = chains.find(rec.target);
    std::set<Addr> s_pr;
    if (it != chains.end())
      s_pr.insert(it->second.cachelines.begin(), it->second.cachelines.end());
    if (s_pr.empty()) continue;
    BruteExecutedSet ex = brute_executed_set(loopy, i + 1, s_pr.size());
    if (brute_iou(s_pr, ex.lines) > 0.6) {
      dyn.push_back(ex.span);
      stat.push_back(ex.static_pcs.size());
    }
  }
  SsraPredictor predictor(chains);
  DepthReport fast = iou_accuracy(loopy, predictor).depth;
  REQUIRE(fast.dynamic_insts.size() == dyn.size());
  for (size_t i = 0; i < dyn.size(); ++i) {
    REQUIRE(fast.dynamic_insts[i] == dyn[i]);
    REQUIRE(fast.static_insts[i] == stat[i]);
  }
}

TEST_CASE("comparison table: reductions, refusals, and file outputs") {
  SynthWorkloadSpec spec;
  spec.function_count = 25;
  spec.target_trace_length = 12000;
  Trace t = generate_synthetic(spec).trace;

  CacheConfig cache;
  cache.l1i_bytes = 2048;
  cache.l2_bytes = 8192;
  DRUConfig off;
  off.mode = SimMode::off;
  SimReport base = simulate(t, nullptr, cache, off, {.label = "off"});

  SimReport same = base;
  same.label = "candidate";
  ComparisonTable zero = compare_report({base, same});
  CHECK(zero.rows[1].miss_reduction_pct == doctest::Approx(0.0));

  SimReport better = base;
  better.label = "better";
  better.counters.l2_demand_misses = base.counters.l2_demand_misses * 8 / 10;
  ComparisonTable tab = compare_report({base, better});
  f64 expect = 100.0 *
               static_cast<f64>(base.counters.l2_demand_misses - better.counters.l2_demand_misses) /
               static_cast<f64>(base.counters.l2_demand_misses);
  CHECK(tab.rows[1].miss_reduction_pct == doctest::Approx(expect));

  SimReport mismatched = base;
  mismatched.cache.l2_bytes *= 2;
  CHECK_THROWS_AS(compare_report({base, mismatched}), Error);

  std::string csv = tab.to_csv();
  CHECK(csv.find("miss_reduction_pct") != std::string::npos);
  auto svg_path = (std::filesystem::temp_directory_path() / "deer_cmp.svg").string();
  tab.write_svg(svg_path);
  CHECK(std::filesystem::file_size(svg_path) > 100);
}

TEST_CASE("report json round-trips") {
  SynthWorkloadSpec spec;
  spec.function_count = 15;
  spec.target_trace_length = 6000;
  Trace t = generate_synthetic(spec).trace;
  RunSpec rs;
  rs.mode = SimMode::ssra;
  rs.cache.l1i_bytes = 2048;
  rs.cache.l2_bytes = 8192;
  SimReport rep = run_configured(t, rs);
  REQUIRE(rep.accuracy.has_value());

  std::string json = report_to_json(rep);
  SimReport back = report_from_json(json);
  CHECK(back.counters.l2_demand_misses == rep.counters.l2_demand_misses);
  CHECK(back.counters.prefetches_issued == rep.counters.prefetches_issued);
  CHECK(back.mode == rep.mode);
  REQUIRE(back.accuracy.has_value());
  CHECK(back.accuracy->mean == doctest::Approx(rep.accuracy->mean));
  CHECK(report_to_json(back) == json);
}

TEST_CASE("divergence rate is 0 on a perfectly predictable trace") {
  TraceBuilder b;
  for (int i = 0; i < 6; ++i) {
    b.call(0x100, 0x1000);
    b.run(0x1000, 5);
    b.ret(0x1014, 0x104);
    b.jmp(0x104, 0x100);
  }
  Trace t = b.build();
  HBAnalysis a = analyze_trace(t, HBConfig{});
  auto chains = build_all_chains(a, SSRAConfig{});
  CHECK(divergence_rate(t, a, chains) == doctest::Approx(0.0));
}
