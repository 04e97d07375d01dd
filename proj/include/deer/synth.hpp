#pragma once

#include <string>
#include <vector>

#include "deer/types.hpp"

namespace deer {

struct SynthWorkloadSpec {
  std::string name = "synthetic";
  u32 function_count = 64;
  u32 mean_function_size = 80;  // instructions
  u32 call_fanout_min = 1;      // call sites per non-driver function
  u32 call_fanout_max = 3;
  u32 max_call_depth = 8;
  u32 loop_iters_min = 2;
  u32 loop_iters_max = 8;
  f64 loop_probability = 0.4;
  f64 branch_bias = 0.8;        // probability of the most-likely successor
  u64 code_footprint = u64{1} << 22;  // bytes
  u64 target_trace_length = 200000;
  u64 rng_seed = 1;

  void validate() const;
  static SynthWorkloadSpec from_toml_text(const std::string& text);
  static SynthWorkloadSpec from_toml_file(const std::string& path);
};

// Companion ground truth, consumed by tests only; the analyzer never sees it.
struct GroundTruth {
  struct Function {
    Addr entry;
    Addr past_end;
    u32 level;
  };
  std::vector<Function> functions;
  std::vector<Addr> loop_headers;
  std::vector<Addr> call_sites;

  std::string to_json() const;
};

struct SynthResult {
  Trace trace;
  GroundTruth truth;
};

SynthResult generate_synthetic(const SynthWorkloadSpec& spec);

// Deterministic splitmix64 stream; used instead of <random> distributions so
// generated traces are byte-identical across standard libraries.
struct Rng {
  u64 state;
  explicit Rng(u64 seed) : state(seed) {}
  u64 next() {
    u64 z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }
  // inclusive range
  u64 range(u64 lo, u64 hi) { return lo + (hi > lo ? next() % (hi - lo + 1) : 0); }
  f64 uniform01() { return static_cast<f64>(next() >> 11) * (1.0 / 9007199254740992.0); }
  bool chance(f64 p) { return uniform01() < p; }
};

}  // namespace deer
