#include "deer/hyperblock.hpp"

#include <algorithm>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"

namespace deer {

const char* to_string(HBType t) {
  switch (t) {
    case HBType::call: return "call";
    case HBType::ret: return "return";
    case HBType::other: return "other";
  }
  return "?";
}

void HBConfig::validate() const {
  if (probability_threshold <= 0.0 || probability_threshold > 1.0)
    throw Error(ErrorKind::usage, "probability_threshold must be within (0,1]");
}

std::set<Addr> hb_start_set(const CFG& cfg, const std::vector<CycleInfo>& cycles,
                            const HBConfig& config) {
  std::set<Addr> starts;
  if (cfg.blocks.empty()) return starts;
  starts.insert(cfg.first_pc);
  for (const auto& e : cfg.edges) {
    switch (e.kind) {
      case EdgeKind::call:
      case EdgeKind::ret:
        starts.insert(e.to);
        break;
      case EdgeKind::fallthrough:
      case EdgeKind::taken: {
        if (cfg.edge_probability(e) < config.probability_threshold) starts.insert(e.to);
        const BasicBlock* from = cfg.block_at(e.from);
        const BasicBlock* to = cfg.block_at(e.to);
        if (from && to && from->function_entry != to->function_entry) starts.insert(e.to);
        break;
      }
    }
  }
  for (const auto& c : cycles) {
    if (cfg.blocks.count(c.header)) starts.insert(c.header);
    for (const auto& be : c.back_edges)
      if (cfg.blocks.count(be.to)) starts.insert(be.to);
    for (const auto& ex : c.exit_edges)
      if (cfg.blocks.count(ex.to)) starts.insert(ex.to);
  }
  // Only executed pcs can start an HB.
  for (auto it = starts.begin(); it != starts.end();)
    it = cfg.blocks.count(*it) ? std::next(it) : starts.erase(it);
  return starts;
}

namespace {

void append_block_lines(std::vector<Addr>& lines, std::unordered_set<Addr>& seen,
                        const BasicBlock& b, u32 line_size) {
  Addr mask = ~static_cast<Addr>(line_size - 1);
  for (Addr a = b.start_pc & mask; a <= (b.end_pc & mask); a += line_size)
    if (seen.insert(a).second) lines.push_back(a);
}

Hyperblock grow_hyperblock(const CFG& cfg, const HBConfig& config, Addr start) {
  Hyperblock hb;
  hb.start_pc = start;
  const BasicBlock* b = cfg.block_at(start);
  hb.function_entry = b->function_entry;
  hb.exec_count = b->exec_count;

  std::unordered_set<Addr> members;
  std::unordered_set<Addr> line_seen;
  while (true) {
    hb.blocks.push_back(b->start_pc);
    members.insert(b->start_pc);
    append_block_lines(hb.cachelines, line_seen, *b, cfg.cacheline_size);

    if (is_call(b->terminator)) {
      hb.type = HBType::call;
      hb.return_address = b->end_pc + cfg.instruction_size;
      break;
    }
    if (is_return(b->terminator)) {
      hb.type = HBType::ret;
      break;
    }
    // Continue across the best intra-function edge when it meets the
    // threshold; cuts, revisits, and function boundaries end the chain.
    const Edge* best = nullptr;
    u64 total = 0;
    for (const Edge* e : cfg.edges_from(b->start_pc)) {
      if (e->kind != EdgeKind::fallthrough && e->kind != EdgeKind::taken) continue;
      total += e->count;
      if (!best || e->count > best->count || (e->count == best->count && e->to < best->to))
        best = e;
    }
    hb.type = HBType::other;
    if (!best || total == 0) break;
    if (static_cast<f64>(best->count) / static_cast<f64>(total) < config.probability_threshold)
      break;
    if (members.count(best->to)) break;
    const BasicBlock* next = cfg.block_at(best->to);
    if (!next || next->function_entry != hb.function_entry) break;
    b = next;
  }
  hb.own_line_count = static_cast<u32>(hb.cachelines.size());
  return hb;
}

}  // namespace

std::map<Addr, Hyperblock> form_hyperblocks(const CFG& cfg, const HBConfig& config) {
  config.validate();
  auto cycles = detect_cycles(cfg);
  auto starts = hb_start_set(cfg, cycles, config);
  std::map<Addr, Hyperblock> hbs;
  for (Addr s : starts) hbs.emplace(s, grow_hyperblock(cfg, config, s));
  return hbs;
}

std::map<Addr, std::map<Addr, u64>> compute_transitions(const Trace& trace,
                                                        const std::set<Addr>& starts) {
  std::map<Addr, std::map<Addr, u64>> transitions;
  std::unordered_set<Addr> start_set(starts.begin(), starts.end());
  bool have_prev = false;
  Addr prev = 0;
  for (const auto& r : trace.records) {
    if (!start_set.count(r.pc)) continue;
    if (have_prev) transitions[prev][r.pc]++;
    prev = r.pc;
    have_prev = true;
  }
  return transitions;
}

void compute_mls(const CFG& cfg, std::map<Addr, Hyperblock>& hbs,
                 const std::map<Addr, std::map<Addr, u64>>& transitions, const HBConfig& config) {
  for (auto& [start, hb] : hbs) {
    hb.mls.reset();
    if (hb.exec_count < config.mls_exec_floor) continue;
    switch (hb.type) {
      case HBType::ret:
        break;  // the successor comes from the RAS at runtime
      case HBType::call: {
        // Most likely callee entry, from the terminator block's call edges.
        const Edge* best = nullptr;
        for (const Edge* e : cfg.edges_from(hb.blocks.back())) {
          if (e->kind != EdgeKind::call) continue;
          if (!best || e->count > best->count || (e->count == best->count && e->to < best->to))
            best = e;
        }
        if (best && hbs.count(best->to)) hb.mls = best->to;
        break;
      }
      case HBType::other: {
        auto it = transitions.find(start);
        if (it == transitions.end()) break;
        std::optional<Addr> best;
        u64 best_count = 0;
        for (const auto& [to, count] : it->second) {
          if (!hbs.count(to)) continue;
          if (!best || count > best_count || (count == best_count && to < *best)) {
            best = to;
            best_count = count;
          }
        }
        hb.mls = best;
        break;
      }
    }
  }
}

void apply_cycle_skipping(const CFG& cfg, std::map<Addr, Hyperblock>& hbs,
                          const std::vector<CycleInfo>& cycles) {
  // Per cycle: the bundle of cachelines for one traversal of the body, and
  // the most likely exit target. Loops exit across intra-function edges,
  // recursions across return edges (the post-unwind continuation).
  struct CyclePlan {
    std::vector<Addr> bundle;
    std::optional<Addr> exit_hb;
    bool is_recursion = false;
    size_t body_size = 0;
  };
  std::vector<CyclePlan> plans(cycles.size());
  for (size_t i = 0; i < cycles.size(); ++i) {
    const CycleInfo& c = cycles[i];
    CyclePlan& p = plans[i];
    p.is_recursion = c.kind == CycleInfo::Kind::recursion;
    p.body_size = c.body_blocks.size();
    std::unordered_set<Addr> seen;
    for (Addr bs : c.body_blocks) {
      const BasicBlock* b = cfg.block_at(bs);
      if (b) append_block_lines(p.bundle, seen, *b, cfg.cacheline_size);
    }
    const Edge* best = nullptr;
    for (const Edge& e : c.exit_edges) {
      bool usable = p.is_recursion ? e.kind == EdgeKind::ret
                                   : (e.kind == EdgeKind::fallthrough || e.kind == EdgeKind::taken);
      if (!usable || !hbs.count(e.to)) continue;
      if (!best || e.count > best->count || (e.count == best->count && e.to < best->to)) best = &e;
    }
    if (best) p.exit_hb = best->to;
  }

  // Rewire every HB whose MLS lands inside a body; the outermost covering
  // cycle wins so nested structures are skipped in one jump.
  for (auto& [start, hb] : hbs) {
    hb.skip.reset();
    if (!hb.mls) continue;
    i64 chosen = -1;
    for (size_t i = 0; i < cycles.size(); ++i) {
      if (!cycles[i].body_blocks.count(*hb.mls)) continue;
      if (chosen < 0 || plans[i].body_size > plans[static_cast<size_t>(chosen)].body_size ||
          (plans[i].body_size == plans[static_cast<size_t>(chosen)].body_size &&
           cycles[i].header < cycles[static_cast<size_t>(chosen)].header))
        chosen = static_cast<i64>(i);
    }
    if (chosen < 0) continue;
    const CyclePlan& p = plans[static_cast<size_t>(chosen)];
    CycleSkip skip;
    skip.exit_hb = p.exit_hb;
    skip.consumes_call = p.is_recursion && hb.type == HBType::call;
    skip.cycle_index = static_cast<u32>(chosen);
    hb.skip = skip;
    std::unordered_set<Addr> seen(hb.cachelines.begin(), hb.cachelines.end());
    for (Addr line : p.bundle)
      if (seen.insert(line).second) hb.cachelines.push_back(line);
  }

  // The effective continuation within one function must stay acyclic.
  // Residual cycles (interleaved exits) are broken deterministically at
  // their highest start pc.
  while (true) {
    std::map<Addr, Addr> eff;
    for (const auto& [start, hb] : hbs) {
      std::optional<Addr> next = hb.skip ? hb.skip->exit_hb : hb.mls;
      if (!next) continue;
      auto it = hbs.find(*next);
      if (it != hbs.end() && it->second.function_entry == hb.function_entry) eff[start] = *next;
    }
    std::map<Addr, int> state;  // 0 unvisited, 1 in progress, 2 done
    std::optional<Addr> victim;
    for (const auto& [start, _] : eff) {
      if (state[start]) continue;
      std::vector<Addr> path{start};
      state[start] = 1;
      while (!path.empty()) {
        Addr cur = path.back();
        auto next = eff.find(cur);
        if (next == eff.end() || state[next->second] == 2) {
          state[cur] = 2;
          path.pop_back();
        } else if (state[next->second] == 1) {
          Addr worst = next->second;
          for (auto it = path.rbegin(); it != path.rend(); ++it) {
            worst = std::max(worst, *it);
            if (*it == next->second) break;
          }
          victim = worst;
          break;
        } else {
          state[next->second] = 1;
          path.push_back(next->second);
        }
      }
      if (victim) break;
    }
    if (!victim) break;
    Hyperblock& hb = hbs.at(*victim);
    if (hb.skip)
      hb.skip->exit_hb.reset();
    else
      hb.mls.reset();
  }
}

HBAnalysis analyze_hyperblocks(const Trace& trace, const CFG& cfg, const HBConfig& config) {
  HBAnalysis a;
  a.config = config;
  a.cycles = detect_cycles(cfg);
  auto starts = hb_start_set(cfg, a.cycles, config);
  a.hbs.clear();
  for (Addr s : starts) a.hbs.emplace(s, grow_hyperblock(cfg, config, s));
  a.transitions = compute_transitions(trace, starts);
  compute_mls(cfg, a.hbs, a.transitions, config);
  apply_cycle_skipping(cfg, a.hbs, a.cycles);
  for (const auto& r : trace.records)
    if ((is_call(r.iclass) || is_return(r.iclass)) && a.hbs.count(r.target))
      a.trigger_pcs.insert(r.target);
  return a;
}

std::string hbs_to_json(const HBAnalysis& analysis) {
  nlohmann::json j;
  j["probability_threshold"] = analysis.config.probability_threshold;
  j["hyperblocks"] = nlohmann::json::array();
  for (const auto& [start, hb] : analysis.hbs) {
    nlohmann::json h{{"start_pc", hb.start_pc},
                     {"type", to_string(hb.type)},
                     {"blocks", hb.blocks},
                     {"cachelines", hb.cachelines},
                     {"exec_count", hb.exec_count},
                     {"function_entry", hb.function_entry},
                     {"is_trigger", analysis.trigger_pcs.count(start) != 0}};
    if (hb.return_address) h["return_address"] = *hb.return_address;
    if (hb.mls) h["mls"] = *hb.mls;
    if (hb.skip && hb.skip->exit_hb) h["cycle_skip_to"] = *hb.skip->exit_hb;
    j["hyperblocks"].push_back(h);
  }
  j["cycles"] = nlohmann::json::array();
  for (const auto& c : analysis.cycles)
    j["cycles"].push_back(
        {{"kind", c.kind == CycleInfo::Kind::loop ? "loop" : "recursion"},
         {"header", c.header},
         {"body_blocks", std::vector<Addr>(c.body_blocks.begin(), c.body_blocks.end())}});
  return j.dump(2);
}

}  // namespace deer
