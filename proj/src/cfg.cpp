#include "deer/cfg.hpp"

#include <algorithm>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"

namespace deer {

const char* to_string(EdgeKind k) {
  switch (k) {
    case EdgeKind::fallthrough: return "fallthrough";
    case EdgeKind::taken: return "taken";
    case EdgeKind::call: return "call";
    case EdgeKind::ret: return "return";
  }
  return "?";
}

const BasicBlock* CFG::block_at(Addr start) const {
  auto it = blocks.find(start);
  return it == blocks.end() ? nullptr : &it->second;
}

std::vector<const Edge*> CFG::edges_from(Addr block_start) const {
  std::vector<const Edge*> out;
  auto it = out_edges.find(block_start);
  if (it == out_edges.end()) return out;
  for (u32 i = it->second.first; i < it->second.second; ++i) out.push_back(&edges[i]);
  return out;
}

f64 CFG::edge_probability(const Edge& e) const {
  u64 total = 0;
  for (const Edge* s : edges_from(e.from))
    if (edge_class(s->kind) == edge_class(e.kind)) total += s->count;
  return total == 0 ? 0.0 : static_cast<f64>(e.count) / static_cast<f64>(total);
}

CFG build_cfg(const Trace& trace) {
  CFG cfg;
  cfg.instruction_size = trace.meta.instruction_size;
  cfg.cacheline_size = trace.meta.cacheline_size;
  if (trace.records.empty()) return cfg;
  cfg.first_pc = trace.records.front().pc;
  const u32 isz = trace.meta.instruction_size;

  // Pass 0: every executed pc with its instruction class (first sighting wins).
  std::unordered_map<Addr, IClass> iclass_of;
  iclass_of.reserve(trace.records.size() / 4);
  for (const auto& r : trace.records) iclass_of.emplace(r.pc, r.iclass);

  // Pass 1: leaders. Targets, fallthroughs of control flow, the trace start,
  // and any discontinuity destination.
  std::unordered_set<Addr> leaders;
  leaders.insert(trace.records.front().pc);
  for (size_t i = 0; i < trace.records.size(); ++i) {
    const auto& r = trace.records[i];
    if (is_control_flow(r.iclass)) {
      if (iclass_of.count(r.target)) leaders.insert(r.target);
      if (iclass_of.count(r.pc + isz)) leaders.insert(r.pc + isz);
      if (is_call(r.iclass)) cfg.function_entries.insert(r.target);
    } else if (i + 1 < trace.records.size() && trace.records[i + 1].pc != r.pc + isz) {
      leaders.insert(trace.records[i + 1].pc);  // unexplained discontinuity
    }
  }
  cfg.function_entries.insert(trace.records.front().pc);

  // A split happened when a leader lands in the middle of a straight-line run.
  for (Addr l : leaders) {
    auto prev = iclass_of.find(l - isz);
    if (prev != iclass_of.end() && prev->second == IClass::other && l != trace.records.front().pc)
      cfg.split_events++;
  }

  // Block formation over the sorted executed pcs.
  std::vector<Addr> pcs;
  pcs.reserve(iclass_of.size());
  for (const auto& [pc, _] : iclass_of) pcs.push_back(pc);
  std::sort(pcs.begin(), pcs.end());

  Addr cur_start = 0;
  bool open = false;
  auto close_block = [&](Addr end) {
    BasicBlock b;
    b.start_pc = cur_start;
    b.end_pc = end;
    b.terminator = iclass_of.at(end);
    cfg.blocks.emplace(cur_start, b);
    open = false;
  };
  for (size_t i = 0; i < pcs.size(); ++i) {
    Addr pc = pcs[i];
    bool leader = leaders.count(pc) != 0;
    bool contiguous = open && pc == pcs[i - 1] + isz && iclass_of.at(pcs[i - 1]) == IClass::other;
    if (open && (leader || !contiguous)) close_block(pcs[i - 1]);
    if (!open) {
      cur_start = pc;
      open = true;
    }
    if (is_control_flow(iclass_of.at(pc))) close_block(pc);
  }
  if (open) close_block(pcs.back());

  // Pass 2: execution counts, edges, and function membership via a
  // call-stack replay (first observation wins per block).
  std::unordered_set<Addr> is_start;
  for (const auto& [s, _] : cfg.blocks) is_start.insert(s);

  std::map<std::tuple<Addr, Addr, EdgeKind>, u64> edge_counts;
  std::unordered_map<Addr, Addr> func_of_block;
  std::vector<Addr> sorted_entries(cfg.function_entries.begin(), cfg.function_entries.end());
  auto nearest_entry = [&](Addr pc) -> Addr {
    auto it = std::upper_bound(sorted_entries.begin(), sorted_entries.end(), pc);
    return it == sorted_entries.begin() ? pc : *std::prev(it);
  };

  std::vector<Addr> call_stack;
  Addr current_function = trace.records.front().pc;
  Addr cur_block = 0;
  const InstructionRecord* prev = nullptr;
  for (const auto& r : trace.records) {
    if (is_start.count(r.pc)) {
      auto& b = cfg.blocks.at(r.pc);
      b.exec_count++;
      if (prev) {
        EdgeKind kind;
        switch (prev->iclass) {
          case IClass::call:
          case IClass::indirect_call: kind = EdgeKind::call; break;
          case IClass::ret: kind = EdgeKind::ret; break;
          case IClass::cond_branch: kind = prev->taken ? EdgeKind::taken : EdgeKind::fallthrough; break;
          case IClass::uncond_branch: kind = EdgeKind::taken; break;
          default: kind = r.pc == prev->pc + isz ? EdgeKind::fallthrough : EdgeKind::taken; break;
        }
        edge_counts[{cur_block, r.pc, kind}]++;
      }
      cur_block = r.pc;
      auto [it, inserted] = func_of_block.emplace(r.pc, current_function);
      if (!inserted && it->second != current_function) cfg.function_conflicts++;
    }
    if (is_call(r.iclass)) {
      call_stack.push_back(current_function);
      current_function = r.target;
    } else if (is_return(r.iclass)) {
      if (!call_stack.empty()) {
        current_function = call_stack.back();
        call_stack.pop_back();
      } else {
        current_function = nearest_entry(r.target);
      }
    }
    prev = &r;
  }

  for (auto& [start, b] : cfg.blocks) b.function_entry = func_of_block.at(start);

  cfg.edges.reserve(edge_counts.size());
  for (const auto& [key, count] : edge_counts) {
    auto [from, to, kind] = key;
    cfg.edges.push_back({from, to, kind, count});
  }
  std::sort(cfg.edges.begin(), cfg.edges.end(),
            [](const Edge& a, const Edge& b) { return a.key() < b.key(); });
  for (u32 i = 0; i < cfg.edges.size(); ++i) {
    Addr from = cfg.edges[i].from;
    auto it = cfg.out_edges.find(from);
    if (it == cfg.out_edges.end())
      cfg.out_edges.emplace(from, std::pair<u32, u32>{i, i + 1});
    else
      it->second.second = i + 1;
  }
  return cfg;
}

std::vector<EdgeProbability> edge_probabilities(const CFG& cfg) {
  std::vector<EdgeProbability> out;
  out.reserve(cfg.edges.size());
  for (const auto& e : cfg.edges)
    out.push_back({e.from, e.to, e.kind, cfg.edge_probability(e)});
  return out;
}

namespace {

// Intra-function view used for loop detection. Call sites get a synthetic
// fallthrough edge to their continuation so post-call code stays reachable
// from the function entry.
struct IntraGraph {
  std::vector<Addr> nodes;  // block starts, sorted
  std::unordered_map<Addr, u32> index;
  std::vector<std::vector<u32>> succ;
  std::vector<std::vector<u32>> pred;
};

IntraGraph intra_graph(const CFG& cfg, Addr function_entry) {
  IntraGraph g;
  for (const auto& [start, b] : cfg.blocks)
    if (b.function_entry == function_entry) {
      g.index[start] = static_cast<u32>(g.nodes.size());
      g.nodes.push_back(start);
    }
  g.succ.resize(g.nodes.size());
  g.pred.resize(g.nodes.size());
  auto add = [&](Addr from, Addr to) {
    auto fi = g.index.find(from), ti = g.index.find(to);
    if (fi == g.index.end() || ti == g.index.end()) return;
    g.succ[fi->second].push_back(ti->second);
    g.pred[ti->second].push_back(fi->second);
  };
  for (const auto& e : cfg.edges)
    if (e.kind == EdgeKind::fallthrough || e.kind == EdgeKind::taken) add(e.from, e.to);
  for (const auto& [start, b] : cfg.blocks)
    if (b.function_entry == function_entry && is_call(b.terminator)) {
      Addr cont = b.end_pc + cfg.instruction_size;
      if (cfg.blocks.count(cont)) add(start, cont);
    }
  return g;
}

// Iterative dominators over reachable nodes (Cooper/Harvey/Kennedy).
std::vector<i64> dominators(const IntraGraph& g, u32 entry) {
  const size_t n = g.nodes.size();
  std::vector<i64> idom(n, -1);
  std::vector<i64> rpo_pos(n, -1);
  std::vector<u32> order;
  // DFS postorder from entry
  std::vector<std::pair<u32, size_t>> st{{entry, 0}};
  std::vector<char> seen(n, 0);
  seen[entry] = 1;
  while (!st.empty()) {
    auto& [u, i] = st.back();
    if (i < g.succ[u].size()) {
      u32 v = g.succ[u][i++];
      if (!seen[v]) {
        seen[v] = 1;
        st.push_back({v, 0});
      }
    } else {
      order.push_back(u);
      st.pop_back();
    }
  }
  std::reverse(order.begin(), order.end());  // reverse postorder
  for (size_t i = 0; i < order.size(); ++i) rpo_pos[order[i]] = static_cast<i64>(i);

  idom[entry] = static_cast<i64>(entry);
  auto intersect = [&](i64 a, i64 b) {
    while (a != b) {
      while (rpo_pos[static_cast<size_t>(a)] > rpo_pos[static_cast<size_t>(b)])
        a = idom[static_cast<size_t>(a)];
      while (rpo_pos[static_cast<size_t>(b)] > rpo_pos[static_cast<size_t>(a)])
        b = idom[static_cast<size_t>(b)];
    }
    return a;
  };
  bool changed = true;
  while (changed) {
    changed = false;
    for (u32 u : order) {
      if (u == entry) continue;
      i64 new_idom = -1;
      for (u32 p : g.pred[u]) {
        if (idom[p] < 0) continue;
        new_idom = new_idom < 0 ? p : intersect(new_idom, p);
      }
      if (new_idom >= 0 && idom[u] != new_idom) {
        idom[u] = new_idom;
        changed = true;
      }
    }
  }
  return idom;
}

bool dominates(const std::vector<i64>& idom, u32 a, u32 b) {
  // does a dominate b
  i64 cur = b;
  while (true) {
    if (cur == static_cast<i64>(a)) return true;
    if (idom[static_cast<size_t>(cur)] < 0 || idom[static_cast<size_t>(cur)] == cur) return false;
    cur = idom[static_cast<size_t>(cur)];
  }
}

std::set<u32> natural_loop(const IntraGraph& g, u32 tail, u32 header) {
  std::set<u32> body{header, tail};
  std::vector<u32> work{tail};
  while (!work.empty()) {
    u32 u = work.back();
    work.pop_back();
    if (u == header) continue;
    for (u32 p : g.pred[u])
      if (body.insert(p).second) work.push_back(p);
  }
  return body;
}

// Tarjan SCC, iterative.
std::vector<std::vector<u32>> strongly_connected(const std::vector<std::vector<u32>>& succ) {
  const size_t n = succ.size();
  std::vector<i64> idx(n, -1), low(n, 0);
  std::vector<char> on_stack(n, 0);
  std::vector<u32> stack;
  std::vector<std::vector<u32>> sccs;
  i64 counter = 0;
  struct Frame {
    u32 v;
    size_t child;
  };
  for (u32 root = 0; root < n; ++root) {
    if (idx[root] >= 0) continue;
    std::vector<Frame> frames{{root, 0}};
    idx[root] = low[root] = counter++;
    stack.push_back(root);
    on_stack[root] = 1;
    while (!frames.empty()) {
      Frame& f = frames.back();
      if (f.child < succ[f.v].size()) {
        u32 w = succ[f.v][f.child++];
        if (idx[w] < 0) {
          idx[w] = low[w] = counter++;
          stack.push_back(w);
          on_stack[w] = 1;
          frames.push_back({w, 0});
        } else if (on_stack[w]) {
          low[f.v] = std::min(low[f.v], idx[w]);
        }
      } else {
        if (low[f.v] == idx[f.v]) {
          std::vector<u32> scc;
          while (true) {
            u32 w = stack.back();
            stack.pop_back();
            on_stack[w] = 0;
            scc.push_back(w);
            if (w == f.v) break;
          }
          sccs.push_back(std::move(scc));
        }
        u32 v = f.v;
        frames.pop_back();
        if (!frames.empty()) low[frames.back().v] = std::min(low[frames.back().v], low[v]);
      }
    }
  }
  return sccs;
}

void collect_exits(const CFG& cfg, CycleInfo& cycle) {
  for (const auto& e : cfg.edges)
    if (cycle.body_blocks.count(e.from) && !cycle.body_blocks.count(e.to))
      cycle.exit_edges.push_back(e);
}

}  // namespace

std::vector<CycleInfo> detect_cycles(const CFG& cfg) {
  std::vector<CycleInfo> cycles;

  // Loops, per function: dominator back edges, then an SCC fallback for
  // whatever irreducible structure remains.
  for (Addr fentry : cfg.function_entries) {
    if (!cfg.blocks.count(fentry)) continue;
    IntraGraph g = intra_graph(cfg, fentry);
    if (g.nodes.empty()) continue;
    auto ei = g.index.find(fentry);
    if (ei == g.index.end()) continue;
    u32 entry = ei->second;
    auto idom = dominators(g, entry);

    std::map<u32, CycleInfo> loops_by_header;
    std::set<std::pair<u32, u32>> back_edge_set;
    for (u32 u = 0; u < g.nodes.size(); ++u) {
      if (idom[u] < 0) continue;  // unreachable from entry
      for (u32 v : g.succ[u]) {
        if (idom[v] < 0) continue;
        if (dominates(idom, v, u)) {
          back_edge_set.insert({u, v});
          auto& loop = loops_by_header[v];
          loop.kind = CycleInfo::Kind::loop;
          loop.header = g.nodes[v];
          for (u32 m : natural_loop(g, u, v)) loop.body_blocks.insert(g.nodes[m]);
        }
      }
    }

    // SCC fallback on the graph minus recognized back edges.
    std::vector<std::vector<u32>> reduced(g.nodes.size());
    for (u32 u = 0; u < g.nodes.size(); ++u)
      for (u32 v : g.succ[u])
        if (!back_edge_set.count({u, v})) reduced[u].push_back(v);
    for (const auto& scc : strongly_connected(reduced)) {
      bool self_loop = false;
      if (scc.size() == 1)
        for (u32 v : reduced[scc[0]]) self_loop |= (v == scc[0]);
      if (scc.size() < 2 && !self_loop) continue;
      CycleInfo irr;
      irr.kind = CycleInfo::Kind::loop;
      u32 header = *std::min_element(scc.begin(), scc.end(), [&](u32 a, u32 b) {
        return g.nodes[a] < g.nodes[b];
      });
      irr.header = g.nodes[header];
      for (u32 m : scc) irr.body_blocks.insert(g.nodes[m]);
      // edges into the designated header from inside the SCC act as its back edges
      for (u32 u : scc)
        for (u32 v : g.succ[u])
          if (v == header) back_edge_set.insert({u, v});
      loops_by_header.emplace(header + static_cast<u32>(g.nodes.size()), std::move(irr));
    }

    for (auto& [h, loop] : loops_by_header) {
      for (auto [u, v] : back_edge_set) {
        if (g.nodes[v] != loop.header) continue;
        for (const auto& e : cfg.edges)
          if (e.from == g.nodes[u] && e.to == g.nodes[v] &&
              (e.kind == EdgeKind::taken || e.kind == EdgeKind::fallthrough))
            loop.back_edges.push_back(e);
      }
      collect_exits(cfg, loop);
      cycles.push_back(std::move(loop));
    }
  }

  // Recursion: SCCs of the call graph.
  std::vector<Addr> funcs(cfg.function_entries.begin(), cfg.function_entries.end());
  std::unordered_map<Addr, u32> fidx;
  for (u32 i = 0; i < funcs.size(); ++i) fidx[funcs[i]] = i;
  std::vector<std::set<u32>> callee_sets(funcs.size());
  for (const auto& e : cfg.edges) {
    if (e.kind != EdgeKind::call) continue;
    auto b = cfg.block_at(e.from);
    if (!b) continue;
    auto ci = fidx.find(b->function_entry);
    auto ti = fidx.find(e.to);
    if (ci != fidx.end() && ti != fidx.end()) callee_sets[ci->second].insert(ti->second);
  }
  std::vector<std::vector<u32>> call_succ(funcs.size());
  for (u32 i = 0; i < funcs.size(); ++i)
    call_succ[i].assign(callee_sets[i].begin(), callee_sets[i].end());
  for (const auto& scc : strongly_connected(call_succ)) {
    bool self_loop = false;
    if (scc.size() == 1)
      self_loop = callee_sets[scc[0]].count(scc[0]) != 0;
    if (scc.size() < 2 && !self_loop) continue;
    CycleInfo rec;
    rec.kind = CycleInfo::Kind::recursion;
    std::set<Addr> scc_funcs;
    for (u32 i : scc) scc_funcs.insert(funcs[i]);
    rec.header = *scc_funcs.begin();
    rec.functions.assign(scc_funcs.begin(), scc_funcs.end());
    for (const auto& [start, b] : cfg.blocks)
      if (scc_funcs.count(b.function_entry)) rec.body_blocks.insert(start);
    for (const auto& e : cfg.edges) {
      if (e.kind != EdgeKind::call) continue;
      auto b = cfg.block_at(e.from);
      if (b && scc_funcs.count(b->function_entry) && scc_funcs.count(e.to))
        rec.back_edges.push_back(e);
    }
    collect_exits(cfg, rec);
    cycles.push_back(std::move(rec));
  }

  std::sort(cycles.begin(), cycles.end(), [](const CycleInfo& a, const CycleInfo& b) {
    if (a.kind != b.kind) return a.kind < b.kind;
    if (a.header != b.header) return a.header < b.header;
    return a.body_blocks.size() < b.body_blocks.size();
  });
  return cycles;
}

std::string cfg_to_json(const CFG& cfg) {
  nlohmann::json j;
  j["instruction_size"] = cfg.instruction_size;
  j["cacheline_size"] = cfg.cacheline_size;
  j["blocks"] = nlohmann::json::array();
  for (const auto& [start, b] : cfg.blocks)
    j["blocks"].push_back({{"start_pc", b.start_pc},
                           {"end_pc", b.end_pc},
                           {"terminator", to_string(b.terminator)},
                           {"exec_count", b.exec_count},
                           {"function_entry", b.function_entry}});
  j["edges"] = nlohmann::json::array();
  for (const auto& e : cfg.edges)
    j["edges"].push_back({{"from", e.from},
                          {"to", e.to},
                          {"kind", to_string(e.kind)},
                          {"count", e.count},
                          {"probability", cfg.edge_probability(e)}});
  j["function_entries"] = std::vector<Addr>(cfg.function_entries.begin(), cfg.function_entries.end());
  j["split_events"] = cfg.split_events;
  return j.dump(2);
}

}  // namespace deer
