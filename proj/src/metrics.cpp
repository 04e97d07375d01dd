#include "deer/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"

namespace deer {

namespace {

struct Fenwick {
  std::vector<i64> tree;
  explicit Fenwick(size_t n) : tree(n + 1, 0) {}
  void add(size_t i, i64 v) {
    for (size_t x = i + 1; x < tree.size(); x += x & (~x + 1)) tree[x] += v;
  }
  i64 prefix(i64 i) const {  // sum of [0, i]
    i64 s = 0;
    for (i64 x = i + 1; x > 0; x -= x & (-x)) s += tree[static_cast<size_t>(x)];
    return s;
  }
};

f64 percentile_of(const std::vector<f64>& sorted, f64 p) {
  if (sorted.empty()) return 0.0;
  f64 idx = p * static_cast<f64>(sorted.size() - 1);
  size_t lo = static_cast<size_t>(idx);
  size_t hi = std::min(lo + 1, sorted.size() - 1);
  f64 frac = idx - static_cast<f64>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

}  // namespace

RepeatDistanceReport repeat_distance(const Trace& trace) {
  RepeatDistanceReport rep;
  const size_t n = trace.records.size();
  Fenwick marks(n);
  std::unordered_map<Addr, i64> last;
  last.reserve(n / 4);
  std::unordered_set<Addr> repeated;
  for (size_t i = 0; i < n; ++i) {
    Addr pc = trace.records[i].pc;
    auto it = last.find(pc);
    if (it != last.end()) {
      i64 j = it->second;
      // distinct pcs strictly between the two occurrences: each carries one
      // mark at its latest position so far, which lies inside the window.
      i64 distinct = marks.prefix(static_cast<i64>(i) - 1) - marks.prefix(j);
      rep.samples.push_back(static_cast<u64>(distinct));
      repeated.insert(pc);
      marks.add(static_cast<size_t>(j), -1);
      it->second = static_cast<i64>(i);
    } else {
      last.emplace(pc, static_cast<i64>(i));
    }
    marks.add(i, +1);
  }
  rep.pcs_seen = last.size();
  rep.pcs_with_repeat = repeated.size();
  return rep;
}

f64 RepeatDistanceReport::fraction_above(u64 distance) const {
  if (samples.empty()) return 0.0;
  u64 c = 0;
  for (u64 s : samples)
    if (s > distance) ++c;
  return static_cast<f64>(c) / static_cast<f64>(samples.size());
}

u64 RepeatDistanceReport::percentile(f64 p) const {
  if (samples.empty()) return 0;
  std::vector<u64> sorted = samples;
  std::sort(sorted.begin(), sorted.end());
  size_t idx = static_cast<size_t>(p * static_cast<f64>(sorted.size() - 1));
  return sorted[idx];
}

std::vector<Addr> SsraPredictor::predict(const InstructionRecord& rec) {
  auto it = chains_.find(rec.target);
  if (it == chains_.end()) return {};
  return it->second.cachelines;
}

std::vector<Addr> DynamicWalkPredictor::predict(const InstructionRecord& rec) {
  std::vector<Addr> snap = stack_;
  if (is_call(rec.iclass))
    snap.push_back(rec.pc + isz_);
  else if (is_return(rec.iclass) && !snap.empty())
    snap.pop_back();
  WalkResult w = walk_chain(analysis_, rec.target, depth_, std::move(snap));
  std::vector<Addr> out;
  std::unordered_set<Addr> seen;
  for (Addr l : w.line_seq)
    if (seen.insert(l).second) out.push_back(l);
  return out;
}

void DynamicWalkPredictor::observe(const InstructionRecord& rec) {
  if (is_call(rec.iclass))
    stack_.push_back(rec.pc + isz_);
  else if (is_return(rec.iclass) && !stack_.empty())
    stack_.pop_back();
}

std::vector<Addr> RnrPredictor::predict(const InstructionRecord& rec) {
  const std::vector<Addr>* recording = state_.recording_for(rec.target);
  if (!recording) return {};
  // Line expansion delegated to the state so replay and prediction agree.
  return state_.replay_lines(*recording);
}

AccuracySummary AccuracyReport::summarize() const {
  AccuracySummary s;
  s.count = ious.size();
  s.empty_predictions = empty_predictions;
  if (ious.empty()) return s;
  std::vector<f64> sorted = ious;
  std::sort(sorted.begin(), sorted.end());
  s.min = sorted.front();
  s.max = sorted.back();
  s.q1 = percentile_of(sorted, 0.25);
  s.median = percentile_of(sorted, 0.5);
  s.q3 = percentile_of(sorted, 0.75);
  s.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<f64>(sorted.size());
  return s;
}

DepthSummary DepthReport::summarize() const {
  DepthSummary s;
  s.qualifying = dynamic_insts.size();
  if (dynamic_insts.empty()) return s;
  f64 dsum = 0, ssum = 0;
  for (u64 v : dynamic_insts) dsum += static_cast<f64>(v);
  for (u64 v : static_insts) ssum += static_cast<f64>(v);
  s.dynamic_insts_mean = dsum / static_cast<f64>(dynamic_insts.size());
  s.static_insts_mean = ssum / static_cast<f64>(static_insts.size());
  s.cycles_skipped_ratio = ssum == 0 ? 0.0 : dsum / ssum;
  return s;
}

AccuracyAndDepth iou_accuracy(const Trace& trace, PathPredictor& predictor, f64 accuracy_floor) {
  AccuracyAndDepth out;
  const auto& recs = trace.records;
  for (size_t i = 0; i < recs.size(); ++i) {
    const InstructionRecord& rec = recs[i];
    if (is_call(rec.iclass) || is_return(rec.iclass)) {
      std::vector<Addr> predicted = predictor.predict(rec);
      std::unordered_set<Addr> s_pr(predicted.begin(), predicted.end());
      if (s_pr.empty()) {
        out.accuracy.empty_predictions++;
      } else {
        // Executed unique cachelines after the trigger, capped to |S_Pr|.
        std::unordered_set<Addr> s_ex;
        std::unordered_set<Addr> static_pcs;
        u64 span = 0;
        for (size_t k = i + 1; k < recs.size() && s_ex.size() < s_pr.size(); ++k) {
          s_ex.insert(trace.line_of(recs[k].pc));
          static_pcs.insert(recs[k].pc);
          ++span;
        }
        u64 inter = 0;
        for (Addr l : s_ex)
          if (s_pr.count(l)) ++inter;
        u64 uni = s_pr.size() + s_ex.size() - inter;
        f64 iou = uni == 0 ? 0.0 : static_cast<f64>(inter) / static_cast<f64>(uni);
        out.accuracy.ious.push_back(iou);
        if (iou > accuracy_floor) {
          out.depth.dynamic_insts.push_back(span);
          out.depth.static_insts.push_back(static_pcs.size());
        }
      }
    }
    predictor.observe(rec);
  }
  return out;
}

f64 divergence_rate(const Trace& trace, const HBAnalysis& analysis,
                    const std::map<Addr, SSRAChain>& chains) {
  std::unordered_set<Addr> starts;
  for (const auto& [s, _] : analysis.hbs) starts.insert(s);

  u64 instances = 0;
  u64 diverged = 0;
  const auto& recs = trace.records;
  for (size_t i = 0; i < recs.size(); ++i) {
    const InstructionRecord& rec = recs[i];
    if (!is_call(rec.iclass) && !is_return(rec.iclass)) continue;
    auto it = chains.find(rec.target);
    if (it == chains.end() || it->second.hbs.size() < 2) continue;
    // The chain should appear as a subsequence of the committed HB starts;
    // cycle skips make extra in-between events legal. Bounded window, and
    // instances cut short by the end of the trace are not counted.
    const auto& hbs = it->second.hbs;
    size_t want = 0;
    u64 budget = 16 * hbs.size();
    size_t k = i + 1;
    for (; k < recs.size() && budget > 0 && want < hbs.size(); ++k) {
      if (!starts.count(recs[k].pc)) continue;
      --budget;
      if (recs[k].pc == hbs[want]) ++want;
    }
    if (want < hbs.size() && k == recs.size()) continue;  // truncated observation
    ++instances;
    if (want < hbs.size()) ++diverged;
  }
  return instances == 0 ? 0.0 : static_cast<f64>(diverged) / static_cast<f64>(instances);
}

ComparisonTable compare_report(const std::vector<SimReport>& reports) {
  if (reports.size() < 2)
    throw Error(ErrorKind::usage, "comparison needs at least two reports (baseline first)");
  const SimReport& base = reports.front();
  for (const auto& r : reports) {
    bool same_cache = r.cache.l1i_bytes == base.cache.l1i_bytes &&
                      r.cache.l1i_assoc == base.cache.l1i_assoc &&
                      r.cache.l2_bytes == base.cache.l2_bytes &&
                      r.cache.l2_assoc == base.cache.l2_assoc &&
                      r.cache.line_size == base.cache.line_size;
    if (r.trace_name != base.trace_name || r.trace_instructions != base.trace_instructions ||
        !same_cache)
      throw Error(ErrorKind::data, "reports disagree on trace or cache configuration");
  }

  ComparisonTable table;
  for (const auto& r : reports) {
    ComparisonRow row;
    row.label = r.label.empty() ? to_string(r.mode) : r.label;
    row.mode = to_string(r.mode);
    row.l2_demand_misses = r.counters.l2_demand_misses;
    row.l2_miss_rate = r.l2_demand_miss_rate();
    f64 bm = static_cast<f64>(base.counters.l2_demand_misses);
    row.miss_reduction_pct =
        bm == 0 ? 0.0 : 100.0 * (bm - static_cast<f64>(r.counters.l2_demand_misses)) / bm;
    if (r.accuracy) row.iou_mean = r.accuracy->mean;
    row.onchip_bytes = r.counters.onchip_storage_bytes;
    row.recording_bytes = r.counters.recording_storage_bytes;
    row.prefetches_issued = r.counters.prefetches_issued;
    u64 useful = r.counters.pf_useful_cold + r.counters.pf_useful_noncold;
    row.useful_pct = r.counters.prefetches_issued == 0
                         ? 0.0
                         : 100.0 * static_cast<f64>(useful) /
                               static_cast<f64>(r.counters.prefetches_issued);
    table.rows.push_back(row);
  }
  return table;
}

std::string ComparisonTable::to_csv() const {
  std::ostringstream ss;
  ss << "label,mode,l2_demand_misses,l2_miss_rate,miss_reduction_pct,iou_mean,onchip_bytes,"
        "recording_bytes,prefetches_issued,useful_pct\n";
  for (const auto& r : rows) {
    ss << r.label << ',' << r.mode << ',' << r.l2_demand_misses << ',' << r.l2_miss_rate << ','
       << r.miss_reduction_pct << ',';
    if (r.iou_mean) ss << *r.iou_mean;
    ss << ',' << r.onchip_bytes << ',' << r.recording_bytes << ',' << r.prefetches_issued << ','
       << r.useful_pct << "\n";
  }
  return ss.str();
}

std::string ComparisonTable::to_json() const {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json row{{"label", r.label},
                       {"mode", r.mode},
                       {"l2_demand_misses", r.l2_demand_misses},
                       {"l2_miss_rate", r.l2_miss_rate},
                       {"miss_reduction_pct", r.miss_reduction_pct},
                       {"onchip_bytes", r.onchip_bytes},
                       {"recording_bytes", r.recording_bytes},
                       {"prefetches_issued", r.prefetches_issued},
                       {"useful_pct", r.useful_pct}};
    if (r.iou_mean) row["iou_mean"] = *r.iou_mean;
    j.push_back(row);
  }
  return j.dump(2);
}

void ComparisonTable::write_svg(const std::string& path) const {
  const int bar_w = 70, gap = 30, h = 320, margin = 50;
  int width = margin * 2 + static_cast<int>(rows.size()) * (bar_w + gap);
  f64 max_v = 1.0;
  for (const auto& r : rows) max_v = std::max(max_v, std::abs(r.miss_reduction_pct));
  std::ostringstream ss;
  ss << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << h + 80
     << "\">\n";
  ss << "<text x=\"" << margin << "\" y=\"20\" font-size=\"14\">L2 demand I-miss reduction vs "
     << (rows.empty() ? "" : rows.front().label) << " (%)</text>\n";
  for (size_t i = 0; i < rows.size(); ++i) {
    f64 frac = std::max(0.0, rows[i].miss_reduction_pct) / max_v;
    int bh = static_cast<int>(frac * (h - 40));
    int x = margin + static_cast<int>(i) * (bar_w + gap);
    int y = 30 + (h - 40) - bh;
    ss << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << bar_w << "\" height=\"" << bh
       << "\" fill=\"#4878a8\"/>\n";
    ss << "<text x=\"" << x << "\" y=\"" << h + 10 << "\" font-size=\"11\">" << rows[i].label
       << "</text>\n";
    ss << "<text x=\"" << x << "\" y=\"" << y - 4 << "\" font-size=\"11\">"
       << static_cast<int>(rows[i].miss_reduction_pct * 10) / 10.0 << "</text>\n";
  }
  ss << "</svg>\n";
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error(ErrorKind::io, "cannot open for writing: " + path);
  f << ss.str();
}

}  // namespace deer
