#pragma once

#include <deque>
#include <map>
#include <unordered_map>
#include <unordered_set>

#include "deer/hyperblock.hpp"
#include "deer/sim.hpp"
#include "deer/types.hpp"

namespace deer {

enum class RnRVariant : u8 { last50_hb, unique50_hb };

struct RnRConfig {
  RnRVariant variant = RnRVariant::last50_hb;
  u32 window = 50;
  u32 replay_lastn = 16;  // 0 removes the cap (paper-faithful unlimited replay)
};

// Record-and-replay state over committed HB starts. Recordings are unlimited
// and counted for the storage report.
class RnRState {
 public:
  RnRState(const HBAnalysis& analysis, const RnRConfig& config);

  // Feed one committed instruction; internally reacts to HB-start commits.
  void observe(Addr pc);

  // The list replayed when trigger commits right now (recorded HB pcs).
  const std::vector<Addr>* recording_for(Addr trigger) const;

  // Replay lines for a recorded HB list, capped by the last-n rule.
  std::vector<Addr> replay_lines(const std::vector<Addr>& recorded_hbs) const;

  u64 storage_bytes() const;
  u64 replays() const { return replays_; }
  void count_replay() { replays_++; }

 private:
  void complete_front_windows();
  u64 distinct_since(size_t start) const;

  const HBAnalysis& analysis_;
  RnRConfig config_;
  std::unordered_set<Addr> hb_starts_;
  std::map<Addr, std::vector<Addr>> recordings_;

  // last50 variant
  std::deque<Addr> window_;

  // unique50 variant: windows complete in FIFO order, so only the front needs
  // an exact distinct count.
  struct OpenWindow {
    Addr trigger;
    size_t start;       // index into events_
    u64 distinct = 0;   // exact for the front window only
  };
  std::vector<Addr> events_;
  std::unordered_map<Addr, i64> last_occurrence_;
  std::deque<OpenWindow> open_;
  std::unordered_set<Addr> has_open_;
  u64 replays_ = 0;
};

SimReport rnr_simulate(const Trace& trace, const HBAnalysis& analysis, const RnRConfig& config,
                       const CacheConfig& cache_cfg, const DRUConfig& dru_cfg,
                       const SimOptions& opts = {});

u64 rnr_storage_report(const RnRState& state);

}  // namespace deer
