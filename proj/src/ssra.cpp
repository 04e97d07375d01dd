#include "deer/ssra.hpp"

#include <algorithm>
#include <unordered_map>
#include <unordered_set>

namespace deer {

const char* to_string(Truncation t) {
  switch (t) {
    case Truncation::none: return "none";
    case Truncation::depth_cap: return "depth_cap";
    case Truncation::static_ras_exhausted: return "static_ras_exhausted";
    case Truncation::no_mls: return "no_mls";
    case Truncation::cycle_no_exit: return "cycle_no_exit";
    case Truncation::metadata_miss: return "metadata_miss";
  }
  return "?";
}

void SSRAConfig::validate() const {
  if (max_depth_hbs == 0) throw Error(ErrorKind::usage, "max_depth_hbs must be >= 1");
  if (max_cachelines_per_entry == 0 || max_cachelines_per_entry > 48)
    throw Error(ErrorKind::usage, "max_cachelines_per_entry must be within [1,48]");
}

WalkResult walk_chain(const HBAnalysis& analysis, Addr trigger, u32 depth_cap,
                      std::vector<Addr> ras_seed,
                      const std::function<bool(Addr)>& metadata_available) {
  WalkResult res;
  std::vector<Addr>& ras = ras_seed;
  Addr curr = trigger;
  for (u32 depth = 1; depth <= depth_cap; ++depth) {
    if (metadata_available && !metadata_available(curr)) {
      res.metadata_misses.push_back(curr);
      res.reason = Truncation::metadata_miss;
      return res;
    }
    const Hyperblock* hb = analysis.hb_at(curr);
    if (!hb) {
      res.reason = Truncation::no_mls;
      return res;
    }
    res.hbs.push_back(curr);
    res.line_seq.insert(res.line_seq.end(), hb->cachelines.begin(), hb->cachelines.end());
    if (depth == depth_cap) {
      res.reason = Truncation::depth_cap;
      return res;
    }
    if (hb->skip) {
      if (!hb->skip->exit_hb) {
        res.reason = Truncation::cycle_no_exit;
        return res;
      }
      if (hb->type == HBType::call && !hb->skip->consumes_call)
        ras.push_back(*hb->return_address);
      curr = *hb->skip->exit_hb;
      continue;
    }
    switch (hb->type) {
      case HBType::call:
        if (!hb->mls) {
          res.reason = Truncation::no_mls;
          return res;
        }
        ras.push_back(*hb->return_address);
        curr = *hb->mls;
        break;
      case HBType::other:
        if (!hb->mls) {
          res.reason = Truncation::no_mls;
          return res;
        }
        curr = *hb->mls;
        break;
      case HBType::ret:
        if (ras.empty()) {
          res.reason = Truncation::static_ras_exhausted;
          return res;
        }
        curr = ras.back();
        ras.pop_back();
        break;
    }
  }
  res.reason = Truncation::depth_cap;
  return res;
}

SSRAChain build_chain(Addr trigger_pc, const HBAnalysis& analysis, const SSRAConfig& config) {
  config.validate();
  WalkResult w = walk_chain(analysis, trigger_pc, config.max_depth_hbs, {});
  SSRAChain chain;
  chain.trigger_pc = trigger_pc;
  chain.hbs = std::move(w.hbs);
  chain.line_seq = std::move(w.line_seq);
  chain.truncation_reason = w.reason;
  std::unordered_set<Addr> seen;
  for (Addr line : chain.line_seq)
    if (seen.insert(line).second) chain.cachelines.push_back(line);
  return chain;
}

std::vector<Addr> select_last_n(const std::vector<Addr>& line_seq, u32 n) {
  std::vector<Addr> unique;
  std::unordered_set<Addr> seen;
  for (Addr line : line_seq)
    if (seen.insert(line).second) unique.push_back(line);
  if (n == 0 || unique.size() <= n) return unique;

  // Keep the n lines whose final occurrence sits deepest in the sequence:
  // the farthest point in the predicted future.
  std::unordered_map<Addr, size_t> last_pos;
  for (size_t i = 0; i < line_seq.size(); ++i) last_pos[line_seq[i]] = i;
  std::vector<std::pair<size_t, Addr>> by_last;
  by_last.reserve(last_pos.size());
  for (const auto& [line, pos] : last_pos) by_last.push_back({pos, line});
  std::sort(by_last.begin(), by_last.end());
  std::vector<Addr> out;
  out.reserve(n);
  for (size_t i = by_last.size() - n; i < by_last.size(); ++i) out.push_back(by_last[i].second);
  return out;
}

std::vector<Addr> select_cachelines(const SSRAChain& chain, const SSRAConfig& config) {
  config.validate();
  return select_last_n(chain.line_seq, config.max_cachelines_per_entry);
}

std::map<Addr, SSRAChain> build_all_chains(const HBAnalysis& analysis, const SSRAConfig& config) {
  std::map<Addr, SSRAChain> chains;
  for (Addr trigger : analysis.trigger_pcs)
    chains.emplace(trigger, build_chain(trigger, analysis, config));
  return chains;
}

namespace {

bool contiguously_contains(const std::vector<Addr>& big, const std::vector<Addr>& small) {
  if (small.empty() || small.size() > big.size()) return false;
  return std::search(big.begin(), big.end(), small.begin(), small.end()) != big.end();
}

}  // namespace

PruneResult prune_contained(const std::map<Addr, SSRAChain>& chains, const HBAnalysis& analysis) {
  // Predecessors over the committed HB transition graph.
  std::unordered_map<Addr, std::set<Addr>> preds;
  for (const auto& [from, tos] : analysis.transitions)
    for (const auto& [to, count] : tos)
      if (count > 0) preds[to].insert(from);

  // The removed chain must be reachable only through the covering one: every
  // step from the covering trigger down to the removed trigger is the sole
  // way to arrive there. A one-hop check is not enough to keep the committed
  // stream guarantee, so the whole prefix is required to be a sole-pred path.
  auto only_through = [&](const SSRAChain& covering, const SSRAChain& removed) {
    auto pos = std::search(covering.hbs.begin(), covering.hbs.end(), removed.hbs.begin(),
                           removed.hbs.end());
    if (pos == covering.hbs.end()) return false;
    size_t k = static_cast<size_t>(pos - covering.hbs.begin());
    for (size_t j = k; j > 0; --j) {
      auto p = preds.find(covering.hbs[j]);
      if (p == preds.end() || p->second.size() != 1) return false;
      if (*p->second.begin() != covering.hbs[j - 1]) return false;
    }
    return true;
  };

  PruneResult result;
  result.chains = chains;
  for (const auto& [trigger, chain] : chains) {
    if (chain.hbs.empty()) continue;
    Addr cover = 0;
    u32 cover_count = 0;
    for (const auto& [other_trigger, other] : chains) {
      if (other_trigger == trigger) continue;
      if (contiguously_contains(other.hbs, chain.hbs)) {
        cover = other_trigger;
        if (++cover_count > 1) break;
      }
    }
    if (cover_count != 1) continue;
    if (!only_through(chains.at(cover), chain)) continue;
    result.pruned.emplace(trigger, cover);
  }
  for (const auto& [trigger, cover] : result.pruned) result.chains.erase(trigger);
  return result;
}

}  // namespace deer
