#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "deer/types.hpp"

namespace deer {

enum class EdgeKind : u8 { fallthrough = 0, taken = 1, call = 2, ret = 3 };
const char* to_string(EdgeKind k);

// Probability normalization groups: taken/fallthrough compete with each
// other; call targets compete with call targets; return targets likewise.
enum class EdgeClass : u8 { branch = 0, call = 1, ret = 2 };
inline EdgeClass edge_class(EdgeKind k) {
  switch (k) {
    case EdgeKind::call: return EdgeClass::call;
    case EdgeKind::ret: return EdgeClass::ret;
    default: return EdgeClass::branch;
  }
}

struct BasicBlock {
  Addr start_pc = 0;
  Addr end_pc = 0;  // inclusive, last instruction
  IClass terminator = IClass::other;
  u64 exec_count = 0;
  Addr function_entry = 0;

  u64 instr_count(u32 instruction_size) const {
    return (end_pc - start_pc) / instruction_size + 1;
  }
};

struct Edge {
  Addr from = 0;  // block start pc
  Addr to = 0;    // block start pc
  EdgeKind kind = EdgeKind::fallthrough;
  u64 count = 0;

  auto key() const { return std::tuple{from, to, kind}; }
};

struct EdgeProbability {
  Addr from = 0;
  Addr to = 0;
  EdgeKind kind = EdgeKind::fallthrough;
  f64 probability = 0.0;
};

struct CFG {
  u32 instruction_size = 4;
  u32 cacheline_size = 64;
  Addr first_pc = 0;
  std::map<Addr, BasicBlock> blocks;
  std::vector<Edge> edges;  // sorted by (from, to, kind)
  std::map<Addr, std::pair<u32, u32>> out_edges;  // block start -> [first, last) in edges
  std::set<Addr> function_entries;
  u64 split_events = 0;          // leaders discovered inside an existing straight-line run
  u64 function_conflicts = 0;    // blocks observed under more than one function

  const BasicBlock* block_at(Addr start) const;
  std::vector<const Edge*> edges_from(Addr block_start) const;
  f64 edge_probability(const Edge& e) const;
};

CFG build_cfg(const Trace& trace);

std::vector<EdgeProbability> edge_probabilities(const CFG& cfg);

struct CycleInfo {
  enum class Kind : u8 { loop, recursion } kind = Kind::loop;
  Addr header = 0;                  // loop header block / lowest function entry of the SCC
  std::set<Addr> body_blocks;       // block start pcs
  std::vector<Edge> back_edges;     // loop back edges / recursion-internal call edges
  std::vector<Edge> exit_edges;     // every CFG edge leaving the body
  std::vector<Addr> functions;      // recursion: the SCC's function entries
};

std::vector<CycleInfo> detect_cycles(const CFG& cfg);

std::string cfg_to_json(const CFG& cfg);

}  // namespace deer
