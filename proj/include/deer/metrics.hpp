#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "deer/hyperblock.hpp"
#include "deer/rivals.hpp"
#include "deer/sim.hpp"
#include "deer/ssra.hpp"
#include "deer/types.hpp"

namespace deer {

struct RepeatDistanceReport {
  std::vector<u64> samples;  // one per repeated pc occurrence, in trace order
  u64 pcs_seen = 0;
  u64 pcs_with_repeat = 0;

  f64 fraction_above(u64 distance) const;
  u64 percentile(f64 p) const;  // p within [0,1]
};

// Unique pcs executed between consecutive occurrences of each pc.
RepeatDistanceReport repeat_distance(const Trace& trace);

// A path predictor produces the set of cachelines expected after a trigger.
// predict() is called at each committed call/return before observe() sees
// that record, so predictions use only past state plus the trigger itself.
class PathPredictor {
 public:
  virtual ~PathPredictor() = default;
  virtual std::vector<Addr> predict(const InstructionRecord& trigger_rec) = 0;
  virtual void observe(const InstructionRecord& rec) { (void)rec; }
};

class SsraPredictor : public PathPredictor {
 public:
  explicit SsraPredictor(const std::map<Addr, SSRAChain>& chains) : chains_(chains) {}
  std::vector<Addr> predict(const InstructionRecord& rec) override;

 private:
  const std::map<Addr, SSRAChain>& chains_;
};

class DynamicWalkPredictor : public PathPredictor {
 public:
  DynamicWalkPredictor(const HBAnalysis& analysis, u32 depth, u32 instruction_size)
      : analysis_(analysis), depth_(depth), isz_(instruction_size) {}
  std::vector<Addr> predict(const InstructionRecord& rec) override;
  void observe(const InstructionRecord& rec) override;

 private:
  const HBAnalysis& analysis_;
  u32 depth_;
  u32 isz_;
  std::vector<Addr> stack_;
};

class RnrPredictor : public PathPredictor {
 public:
  RnrPredictor(const HBAnalysis& analysis, const RnRConfig& config)
      : state_(analysis, config) {}
  std::vector<Addr> predict(const InstructionRecord& rec) override;
  void observe(const InstructionRecord& rec) override { state_.observe(rec.pc); }

 private:
  RnRState state_;
};

struct AccuracyReport {
  std::vector<f64> ious;  // per qualifying trigger instance
  u64 empty_predictions = 0;

  AccuracySummary summarize() const;
};

struct DepthReport {
  std::vector<u64> dynamic_insts;  // per accurate instance
  std::vector<u64> static_insts;

  DepthSummary summarize() const;
};

struct AccuracyAndDepth {
  AccuracyReport accuracy;
  DepthReport depth;
};

// IOU of predicted vs executed unique cachelines per trigger instance, and
// the instruction spans behind the effective-depth figures.
AccuracyAndDepth iou_accuracy(const Trace& trace, PathPredictor& predictor,
                              f64 accuracy_floor = 0.60);

// Fraction of predicted chains whose HB sequence is not committed in order
// within a bounded window after the trigger. An approximation of the
// self-correction engagement rate.
f64 divergence_rate(const Trace& trace, const HBAnalysis& analysis,
                    const std::map<Addr, SSRAChain>& chains);

struct ComparisonRow {
  std::string label;
  std::string mode;
  u64 l2_demand_misses = 0;
  f64 l2_miss_rate = 0;
  f64 miss_reduction_pct = 0;  // vs the first (baseline) report
  std::optional<f64> iou_mean;
  u64 onchip_bytes = 0;
  u64 recording_bytes = 0;
  u64 prefetches_issued = 0;
  f64 useful_pct = 0;
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;

  std::string to_csv() const;
  std::string to_json() const;
  void write_svg(const std::string& path) const;  // miss-reduction bar chart
};

// First report is the baseline; all reports must share trace and cache config.
ComparisonTable compare_report(const std::vector<SimReport>& reports);

}  // namespace deer
