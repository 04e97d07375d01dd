#include "deer/rivals.hpp"

#include <algorithm>

namespace deer {

RnRState::RnRState(const HBAnalysis& analysis, const RnRConfig& config)
    : analysis_(analysis), config_(config) {
  if (config.window == 0) throw Error(ErrorKind::usage, "RnR window must be >= 1");
  for (const auto& [start, _] : analysis.hbs) hb_starts_.insert(start);
}

u64 RnRState::distinct_since(size_t start) const {
  std::unordered_set<Addr> seen;
  for (size_t i = start; i < events_.size(); ++i) seen.insert(events_[i]);
  return seen.size();
}

void RnRState::complete_front_windows() {
  while (!open_.empty() && open_.front().distinct >= config_.window) {
    OpenWindow w = open_.front();
    open_.pop_front();
    has_open_.erase(w.trigger);
    std::vector<Addr> uniques;
    std::unordered_set<Addr> seen;
    for (size_t i = w.start; i < events_.size() && uniques.size() < config_.window; ++i)
      if (seen.insert(events_[i]).second) uniques.push_back(events_[i]);
    recordings_[w.trigger] = std::move(uniques);
    if (!open_.empty()) open_.front().distinct = distinct_since(open_.front().start);
  }
}

void RnRState::observe(Addr pc) {
  if (!hb_starts_.count(pc)) return;
  if (config_.variant == RnRVariant::last50_hb) {
    window_.push_back(pc);
    if (window_.size() > config_.window) window_.pop_front();
    if (window_.size() == config_.window)
      recordings_[window_.front()] = std::vector<Addr>(window_.begin(), window_.end());
    return;
  }

  // unique50: the commit extends every window that has not seen this pc yet,
  // i.e. the windows opened after its previous occurrence. Since distinct
  // counts are monotone in window age, only the front window can complete.
  events_.push_back(pc);
  size_t idx = events_.size() - 1;
  auto prev_it = last_occurrence_.find(pc);
  i64 prev = prev_it == last_occurrence_.end() ? -1 : prev_it->second;
  last_occurrence_[pc] = static_cast<i64>(idx);
  if (!open_.empty() && static_cast<i64>(open_.front().start) > prev) open_.front().distinct++;
  complete_front_windows();
  if (!has_open_.count(pc)) {
    // The window records what appears strictly after the trigger commit.
    open_.push_back({pc, idx + 1, 0});
    has_open_.insert(pc);
  }
}

const std::vector<Addr>* RnRState::recording_for(Addr trigger) const {
  auto it = recordings_.find(trigger);
  return it == recordings_.end() ? nullptr : &it->second;
}

std::vector<Addr> RnRState::replay_lines(const std::vector<Addr>& recorded_hbs) const {
  std::vector<Addr> seq;
  for (Addr hb_pc : recorded_hbs) {
    const Hyperblock* hb = analysis_.hb_at(hb_pc);
    if (!hb) continue;
    seq.insert(seq.end(), hb->cachelines.begin(),
               hb->cachelines.begin() + hb->own_line_count);
  }
  return select_last_n(seq, config_.replay_lastn);
}

u64 RnRState::storage_bytes() const {
  u64 entries = 0;
  for (const auto& [_, list] : recordings_) entries += list.size();
  return entries * 8;
}

u64 rnr_storage_report(const RnRState& state) { return state.storage_bytes(); }

namespace {

class RnrEngine : public SimEngine {
 public:
  RnrEngine(const HBAnalysis& analysis, const RnRConfig& config) : state_(analysis, config) {}

  void on_commit(const InstructionRecord& rec, u64, SimDevice& dev) override {
    // Replay against the recordings made before this commit, then record.
    if (const std::vector<Addr>* rec_list = state_.recording_for(rec.pc)) {
      dev.count_trigger();
      state_.count_replay();
      dev.enqueue_lines(state_.replay_lines(*rec_list), dev.cycle(), PfOrigin::replay);
    }
    state_.observe(rec.pc);
  }

  u64 recording_storage_bytes() const override { return state_.storage_bytes(); }
  u64 onchip_storage_bytes(const DRUConfig& dru) const override {
    // Shared prefetch buffer only; the recordings are reported separately.
    return u64{dru.prefetch_buffer_size} * 6;
  }

 private:
  RnRState state_;
};

}  // namespace

SimReport rnr_simulate(const Trace& trace, const HBAnalysis& analysis, const RnRConfig& config,
                       const CacheConfig& cache_cfg, const DRUConfig& dru_cfg,
                       const SimOptions& opts) {
  DRUConfig cfg = dru_cfg;
  cfg.mode = config.variant == RnRVariant::last50_hb ? SimMode::rnr50 : SimMode::rnr_unique50;
  RnrEngine engine(analysis, config);
  return simulate_with_engine(trace, cache_cfg, cfg, &engine, opts);
}

}  // namespace deer
