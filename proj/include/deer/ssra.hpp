#pragma once

#include <functional>
#include <map>
#include <vector>

#include "deer/hyperblock.hpp"
#include "deer/types.hpp"

namespace deer {

enum class Truncation : u8 {
  none = 0,
  depth_cap,
  static_ras_exhausted,
  no_mls,
  cycle_no_exit,
  metadata_miss,  // dynamic mode only; never appears on an SSRA chain
};
const char* to_string(Truncation t);

struct SSRAConfig {
  u32 max_depth_hbs = 50;
  u32 max_cachelines_per_entry = 16;  // last-N selection
  bool containment_pruning = true;

  void validate() const;
};

struct SSRAChain {
  Addr trigger_pc = 0;
  std::vector<Addr> hbs;
  std::vector<Addr> cachelines;  // deduplicated, first-occurrence order
  Truncation truncation_reason = Truncation::none;
  std::vector<Addr> line_seq;  // raw visit sequence; drives last-N selection
};

// One chain-walk engine serves the static (empty RAS) and dynamic (RAS
// snapshot, metadata probe) modes. A call HB pushes its return address and
// continues at the most likely callee; a return HB pops; cycle skips jump to
// the rewired exit. The probe returning false models a metadata-cache miss.
struct WalkResult {
  std::vector<Addr> hbs;
  std::vector<Addr> line_seq;
  Truncation reason = Truncation::none;
  std::vector<Addr> metadata_misses;
};

WalkResult walk_chain(const HBAnalysis& analysis, Addr trigger, u32 depth_cap,
                      std::vector<Addr> ras_seed,
                      const std::function<bool(Addr)>& metadata_available = nullptr);

SSRAChain build_chain(Addr trigger_pc, const HBAnalysis& analysis, const SSRAConfig& config);

// Last-n unique lines of a visit sequence, by final occurrence; keeps every
// line (first-occurrence order) when n is not exceeded.
std::vector<Addr> select_last_n(const std::vector<Addr>& line_seq, u32 n);

std::vector<Addr> select_cachelines(const SSRAChain& chain, const SSRAConfig& config);

// Chains keyed by trigger pc; pruning removes chains contiguously contained
// in exactly one other chain whose trigger is their only way in.
std::map<Addr, SSRAChain> build_all_chains(const HBAnalysis& analysis, const SSRAConfig& config);

struct PruneResult {
  std::map<Addr, SSRAChain> chains;
  std::map<Addr, Addr> pruned;  // removed trigger -> covering trigger
};

PruneResult prune_contained(const std::map<Addr, SSRAChain>& chains, const HBAnalysis& analysis);

}  // namespace deer
