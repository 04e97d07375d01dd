#include "deer/synth.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

#include "deer/tomlmini.hpp"

namespace deer {

void SynthWorkloadSpec::validate() const {
  if (branch_bias < 0.0 || branch_bias > 1.0)
    throw Error(ErrorKind::usage, "branch_bias must be within [0,1]");
  if (loop_probability < 0.0 || loop_probability > 1.0)
    throw Error(ErrorKind::usage, "loop_probability must be within [0,1]");
  if (function_count == 0) throw Error(ErrorKind::usage, "function_count must be >= 1");
  if (mean_function_size < 8)
    throw Error(ErrorKind::usage, "mean_function_size must be >= 8 instructions");
  if (call_fanout_min > call_fanout_max)
    throw Error(ErrorKind::usage, "call_fanout_min > call_fanout_max");
  if (loop_iters_min > loop_iters_max || loop_iters_min == 0)
    throw Error(ErrorKind::usage, "bad loop iteration range");
  if (max_call_depth == 0) throw Error(ErrorKind::usage, "max_call_depth must be >= 1");
  if (target_trace_length == 0) throw Error(ErrorKind::usage, "target_trace_length must be >= 1");
  if (code_footprint < static_cast<u64>(mean_function_size) * 4)
    throw Error(ErrorKind::usage, "infeasible spec: code_footprint smaller than one function");
}

SynthWorkloadSpec SynthWorkloadSpec::from_toml_text(const std::string& text) {
  auto doc = toml::Document::parse(text);
  SynthWorkloadSpec s;
  auto u = [&](const char* k, u64 fb) { return static_cast<u64>(doc.get_int(k, static_cast<i64>(fb))); };
  s.name = doc.get_string("name", s.name);
  s.function_count = static_cast<u32>(u("function_count", s.function_count));
  s.mean_function_size = static_cast<u32>(u("mean_function_size", s.mean_function_size));
  s.call_fanout_min = static_cast<u32>(u("call_fanout_min", s.call_fanout_min));
  s.call_fanout_max = static_cast<u32>(u("call_fanout_max", s.call_fanout_max));
  s.max_call_depth = static_cast<u32>(u("max_call_depth", s.max_call_depth));
  s.loop_iters_min = static_cast<u32>(u("loop_iters_min", s.loop_iters_min));
  s.loop_iters_max = static_cast<u32>(u("loop_iters_max", s.loop_iters_max));
  s.loop_probability = doc.get_double("loop_probability", s.loop_probability);
  s.branch_bias = doc.get_double("branch_bias", s.branch_bias);
  s.code_footprint = u("code_footprint", s.code_footprint);
  s.target_trace_length = u("target_trace_length", s.target_trace_length);
  s.rng_seed = u("rng_seed", s.rng_seed);
  s.validate();
  return s;
}

SynthWorkloadSpec SynthWorkloadSpec::from_toml_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorKind::io, "cannot open spec file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return from_toml_text(ss.str());
}

std::string GroundTruth::to_json() const {
  nlohmann::json j;
  j["functions"] = nlohmann::json::array();
  for (const auto& fn : functions)
    j["functions"].push_back({{"entry", fn.entry}, {"past_end", fn.past_end}, {"level", fn.level}});
  j["loop_headers"] = loop_headers;
  j["call_sites"] = call_sites;
  return j.dump(2);
}

namespace {

struct Slot {
  enum class Kind : u8 { plain, cond, jump, call, ret } kind = Kind::plain;
  Addr pc = 0;
  size_t target_slot = 0;  // cond/jump: slot index within the function
  Addr target_addr = 0;    // resolved after layout; call: callee entry
  u32 callee = 0;          // call only
  f64 taken_prob = 0.0;    // cond only
  bool is_loop_branch = false;
  u32 loop_min = 0, loop_max = 0;
};

struct Function {
  u32 id = 0;
  u32 level = 0;
  Addr entry = 0;
  std::vector<Slot> slots;
};

}  // namespace

SynthResult generate_synthetic(const SynthWorkloadSpec& spec) {
  spec.validate();
  Rng build_rng(spec.rng_seed);
  GroundTruth truth;

  // Leveled acyclic call graph keeps nesting balanced and bounds the dynamic
  // call depth by construction: level-L functions call only level L+1. The
  // driver (level 0) calls every level-1 function once per cycle, which gives
  // the long repeat-distance tail when function_count is large.
  u32 depth_levels = std::max<u32>(1, spec.max_call_depth);
  std::vector<Function> fns(spec.function_count);
  std::vector<std::vector<u32>> by_level(depth_levels);
  fns[0].level = 0;
  by_level[0].push_back(0);
  for (u32 i = 1; i < spec.function_count; ++i) {
    fns[i].id = i;
    fns[i].level = depth_levels == 1 ? 0 : 1 + (i - 1) % (depth_levels - 1);
    by_level[fns[i].level].push_back(i);
  }

  for (u32 i = 0; i < spec.function_count; ++i) {
    Function& fn = fns[i];
    bool driver = (i == 0);
    std::vector<u32> callees;
    if (fn.level + 1 < depth_levels) callees = by_level[fn.level + 1];

    u32 size_target = static_cast<u32>(build_rng.range(
        std::max<u64>(8, spec.mean_function_size / 2), spec.mean_function_size * 3 / 2));
    u32 call_sites = driver
                         ? static_cast<u32>(callees.size())
                         : (callees.empty() ? 0
                                            : static_cast<u32>(build_rng.range(spec.call_fanout_min,
                                                                               spec.call_fanout_max)));
    bool has_loop = !driver && build_rng.chance(spec.loop_probability);
    bool loop_contains_call = has_loop && call_sites > 0 && build_rng.chance(0.5);
    u32 diamonds = size_target >= 48 ? static_cast<u32>(build_rng.range(0, 2)) : 0;

    u32 overhead = call_sites * 2 + (has_loop ? 2 : 0) + diamonds * 6 + 1;
    u32 filler_total = size_target > overhead ? size_target - overhead : 4;
    u32 segments = 1 + call_sites + (has_loop ? 1 : 0) + diamonds;
    u32 per_segment = std::max<u32>(2, filler_total / segments);

    auto emit_plain = [&](u32 n) {
      for (u32 j = 0; j < n; ++j) fn.slots.push_back({Slot::Kind::plain});
    };
    auto emit_call = [&](u32 site) {
      Slot s{Slot::Kind::call};
      s.callee = driver ? callees[site]
                        : callees[build_rng.next() % callees.size()];
      fn.slots.push_back(s);
    };

    emit_plain(per_segment);

    for (u32 d = 0; d < diamonds; ++d) {
      bool likely_taken = build_rng.chance(0.5);
      size_t branch_idx = fn.slots.size();
      Slot br{Slot::Kind::cond};
      br.taken_prob = likely_taken ? spec.branch_bias : 1.0 - spec.branch_bias;
      fn.slots.push_back(br);
      emit_plain(static_cast<u32>(build_rng.range(2, 4)));
      size_t jump_idx = fn.slots.size();
      fn.slots.push_back({Slot::Kind::jump});
      fn.slots[branch_idx].target_slot = fn.slots.size();  // else path
      emit_plain(static_cast<u32>(build_rng.range(2, 4)));
      fn.slots[jump_idx].target_slot = fn.slots.size();  // join
      emit_plain(per_segment);
    }

    u32 next_call = 0;
    if (has_loop) {
      size_t header = fn.slots.size();
      emit_plain(std::max<u32>(3, per_segment));
      if (loop_contains_call && next_call < call_sites) {
        emit_call(next_call++);
        emit_plain(2);
      }
      Slot back{Slot::Kind::cond};
      back.target_slot = header;
      back.is_loop_branch = true;
      back.loop_min = spec.loop_iters_min;
      back.loop_max = spec.loop_iters_max;
      fn.slots.push_back(back);
      emit_plain(per_segment);
    }
    while (next_call < call_sites) {
      emit_call(next_call++);
      emit_plain(per_segment);
    }

    if (driver) {
      Slot j{Slot::Kind::jump};
      j.target_slot = 0;
      fn.slots.push_back(j);
    } else {
      fn.slots.push_back({Slot::Kind::ret});
    }
  }

  // Layout: functions packed sequentially, each aligned to a cacheline.
  const Addr code_base = 0x40000000;
  Addr cursor = code_base;
  for (auto& fn : fns) {
    cursor = (cursor + 63) & ~Addr{63};
    fn.entry = cursor;
    for (auto& slot : fn.slots) {
      slot.pc = cursor;
      cursor += 4;
    }
  }
  if (cursor - code_base > spec.code_footprint)
    throw Error(ErrorKind::usage,
                "infeasible spec: generated code (" + std::to_string(cursor - code_base) +
                    " bytes) exceeds code_footprint (" + std::to_string(spec.code_footprint) + ")");

  for (auto& fn : fns) {
    for (auto& slot : fn.slots) {
      switch (slot.kind) {
        case Slot::Kind::cond:
        case Slot::Kind::jump:
          slot.target_addr = fn.slots[slot.target_slot].pc;
          break;
        case Slot::Kind::call:
          slot.target_addr = fns[slot.callee].entry;
          truth.call_sites.push_back(slot.pc);
          break;
        default: break;
      }
      if (slot.is_loop_branch) truth.loop_headers.push_back(slot.target_addr);
    }
    truth.functions.push_back({fn.entry, fn.slots.back().pc + 4, fn.level});
  }

  // Emission: walk the program, drawing branch outcomes and loop counts from
  // a separate stream so structural choices stay independent of trace length.
  Trace trace;
  trace.meta.name = spec.name;
  trace.meta.instruction_size = 4;
  trace.meta.cacheline_size = 64;
  trace.records.reserve(spec.target_trace_length + 64);

  struct Frame {
    u32 fn;
    size_t slot;
    std::map<size_t, u32> loop_left;
  };
  std::vector<Frame> stack;
  stack.push_back({0, 0, {}});
  Rng exec_rng(spec.rng_seed ^ 0xD1F2C3B4A5968778ull);

  u64 seq = 0;
  while (seq < spec.target_trace_length && !stack.empty()) {
    Frame& fr = stack.back();
    Function& fn = fns[fr.fn];
    Slot& slot = fn.slots[fr.slot];
    switch (slot.kind) {
      case Slot::Kind::plain:
        trace.records.push_back(InstructionRecord::plain(seq++, slot.pc));
        fr.slot++;
        break;
      case Slot::Kind::jump:
        trace.records.push_back(InstructionRecord::make_jump(seq++, slot.pc, slot.target_addr));
        fr.slot = slot.target_slot;
        break;
      case Slot::Kind::cond: {
        bool taken;
        if (slot.is_loop_branch) {
          auto it = fr.loop_left.find(fr.slot);
          if (it == fr.loop_left.end()) {
            u32 iters = static_cast<u32>(exec_rng.range(slot.loop_min, slot.loop_max));
            it = fr.loop_left.emplace(fr.slot, iters > 0 ? iters - 1 : 0).first;
          }
          taken = it->second > 0;
          if (taken)
            it->second--;
          else
            fr.loop_left.erase(it);
        } else {
          taken = exec_rng.chance(slot.taken_prob);
        }
        trace.records.push_back(InstructionRecord::make_cond(seq++, slot.pc, slot.target_addr, taken));
        fr.slot = taken ? slot.target_slot : fr.slot + 1;
        break;
      }
      case Slot::Kind::call: {
        u32 callee = slot.callee;
        trace.records.push_back(InstructionRecord::make_call(seq++, slot.pc, slot.target_addr));
        fr.slot++;  // the return lands on the next slot
        stack.push_back({callee, 0, {}});
        break;
      }
      case Slot::Kind::ret: {
        const Frame& caller = stack[stack.size() - 2];
        Addr ra = fns[caller.fn].slots[caller.slot].pc;
        trace.records.push_back(InstructionRecord::make_return(seq++, slot.pc, ra));
        stack.pop_back();
        break;
      }
    }
  }

  trace.meta.instruction_count = trace.records.size();
  return {std::move(trace), std::move(truth)};
}

}  // namespace deer
