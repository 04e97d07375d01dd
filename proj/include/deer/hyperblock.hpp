#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "deer/cfg.hpp"
#include "deer/types.hpp"

namespace deer {

enum class HBType : u8 { call = 0, ret = 1, other = 2 };
const char* to_string(HBType t);

struct HBConfig {
  f64 probability_threshold = 0.8;
  u64 mls_exec_floor = 2;  // HBs executed fewer times get no MLS link
  enum class Tiebreak : u8 { count_then_lower_pc } mls_tiebreak = Tiebreak::count_then_lower_pc;

  void validate() const;
};

// Rewire attached to an HB whose MLS continuation would enter a cycle body:
// the chain jumps to the cycle's most likely exit instead, and one traversal
// of the body is folded into the HB's cacheline coverage.
struct CycleSkip {
  std::optional<Addr> exit_hb;  // absent: cycle has no usable exit
  bool consumes_call = false;   // recursion entered via call: skip spans the whole bracket
  u32 cycle_index = 0;
};

struct Hyperblock {
  Addr start_pc = 0;
  std::vector<Addr> blocks;  // member block start pcs, in chain order
  HBType type = HBType::other;
  std::optional<Addr> return_address;  // present iff type == call
  std::vector<Addr> cachelines;        // first-occurrence order, deduplicated
  u32 own_line_count = 0;  // prefix of cachelines covering member blocks only;
                           // the rest is an attached cycle-body bundle
  std::optional<Addr> mls;
  std::optional<CycleSkip> skip;
  u64 exec_count = 0;
  Addr function_entry = 0;
};

struct HBAnalysis {
  HBConfig config;
  std::map<Addr, Hyperblock> hbs;
  std::set<Addr> trigger_pcs;  // call/return targets: the PCs that get metadata
  std::map<Addr, std::map<Addr, u64>> transitions;  // committed HB-start event stream
  std::vector<CycleInfo> cycles;

  const Hyperblock* hb_at(Addr start) const {
    auto it = hbs.find(start);
    return it == hbs.end() ? nullptr : &it->second;
  }
};

// The HB start set: call/return targets, the trace head, sub-threshold branch
// targets, and cycle headers/exits so chains can resume at every stop point.
std::set<Addr> hb_start_set(const CFG& cfg, const std::vector<CycleInfo>& cycles, const HBConfig& config);

std::map<Addr, Hyperblock> form_hyperblocks(const CFG& cfg, const HBConfig& config);

std::map<Addr, std::map<Addr, u64>> compute_transitions(const Trace& trace,
                                                        const std::set<Addr>& starts);

void compute_mls(const CFG& cfg, std::map<Addr, Hyperblock>& hbs,
                 const std::map<Addr, std::map<Addr, u64>>& transitions, const HBConfig& config);

void apply_cycle_skipping(const CFG& cfg, std::map<Addr, Hyperblock>& hbs,
                          const std::vector<CycleInfo>& cycles);

HBAnalysis analyze_hyperblocks(const Trace& trace, const CFG& cfg, const HBConfig& config);

std::string hbs_to_json(const HBAnalysis& analysis);

}  // namespace deer
