#include "doctest.h"

#include "deer/metrics.hpp"
#include "deer/synth.hpp"
#include "deer/trace_io.hpp"
#include "helpers/oracles.hpp"

using namespace deer;

TEST_CASE("single function, no branches: straight-line loop-free trace") {
  SynthWorkloadSpec spec;
  spec.function_count = 1;
  spec.mean_function_size = 40;
  spec.loop_probability = 0.0;
  spec.max_call_depth = 1;
  spec.target_trace_length = 500;
  Trace t = generate_synthetic(spec).trace;
  CHECK(t.records.size() >= 450);
  for (const auto& r : t.records) {
    CHECK(r.iclass != IClass::call);
    CHECK(r.iclass != IClass::ret);
    CHECK(r.iclass != IClass::cond_branch);  // driver wraps with one jump only
  }
}

TEST_CASE("same seed twice gives byte-identical traces") {
  SynthWorkloadSpec spec;
  spec.function_count = 30;
  spec.target_trace_length = 20000;
  spec.rng_seed = 99;
  SynthResult a = generate_synthetic(spec);
  SynthResult b = generate_synthetic(spec);
  CHECK(a.trace.records == b.trace.records);
  CHECK(a.truth.to_json() == b.truth.to_json());

  spec.rng_seed = 100;
  SynthResult c = generate_synthetic(spec);
  CHECK(a.trace.records != c.trace.records);
}

TEST_CASE("calls and returns nest; no unmatched returns") {
  SynthWorkloadSpec spec;
  spec.function_count = 50;
  spec.max_call_depth = 6;
  spec.target_trace_length = 40000;
  Trace t = generate_synthetic(spec).trace;
  CHECK(unmatched_return_count(t) == 0);

  // depth never exceeds the cap
  u64 depth = 0, max_depth = 0;
  for (const auto& r : t.records) {
    if (is_call(r.iclass)) max_depth = std::max(max_depth, ++depth);
    if (is_return(r.iclass) && depth > 0) --depth;
  }
  CHECK(max_depth <= spec.max_call_depth);
}

TEST_CASE("trace length lands within 10% of the target") {
  SynthWorkloadSpec spec;
  spec.function_count = 25;
  spec.target_trace_length = 30000;
  Trace t = generate_synthetic(spec).trace;
  CHECK(t.records.size() >= 27000);
  CHECK(t.records.size() <= 33000);
}

TEST_CASE("infeasible specs are refused") {
  SynthWorkloadSpec spec;
  spec.code_footprint = 16;  // smaller than one function
  CHECK_THROWS_AS(spec.validate(), Error);

  SynthWorkloadSpec squeezed;
  squeezed.function_count = 2000;
  squeezed.mean_function_size = 100;
  squeezed.code_footprint = 64 * 1024;  // functions cannot fit
  CHECK_THROWS_AS(generate_synthetic(squeezed), Error);

  SynthWorkloadSpec bad_bias;
  bad_bias.branch_bias = 1.5;
  CHECK_THROWS_AS(bad_bias.validate(), Error);
}

TEST_CASE("ground truth matches the trace") {
  SynthWorkloadSpec spec;
  spec.function_count = 20;
  spec.max_call_depth = 4;
  spec.target_trace_length = 20000;
  SynthResult r = generate_synthetic(spec);
  REQUIRE(r.truth.functions.size() == spec.function_count);

  std::set<Addr> entries;
  for (const auto& fn : r.truth.functions) entries.insert(fn.entry);
  for (const auto& rec : r.trace.records)
    if (is_call(rec.iclass)) CHECK(entries.count(rec.target) == 1);

  // every executed pc falls inside some function's range
  for (const auto& rec : r.trace.records) {
    bool inside = false;
    for (const auto& fn : r.truth.functions)
      inside |= (rec.pc >= fn.entry && rec.pc < fn.past_end);
    CHECK(inside);
  }
}

TEST_CASE("long-repeat-distance spec produces the heavy tail") {
  // The recipes/longtail.toml fixture is scaled for acceptance runs; this is
  // a smaller cousin asserting the same property cheaply: a driver cycling
  // through many subtrees pushes repeat distances past the window size.
  SynthWorkloadSpec spec;
  spec.function_count = 300;
  spec.mean_function_size = 60;
  spec.call_fanout_min = 1;
  spec.call_fanout_max = 1;
  spec.max_call_depth = 3;
  spec.loop_probability = 0.3;
  spec.branch_bias = 0.8;
  spec.target_trace_length = 60000;
  spec.rng_seed = 5;
  Trace t = generate_synthetic(spec).trace;
  auto rd = repeat_distance(t);
  // 300 functions x ~60 instrs: repeats of driver-level code see most of the
  // footprint (~15k unique instructions) between occurrences.
  CHECK(rd.fraction_above(8000) >= 0.05);
}
