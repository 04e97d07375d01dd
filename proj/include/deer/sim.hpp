#pragma once

#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "deer/metacodec.hpp"
#include "deer/ssra.hpp"
#include "deer/types.hpp"

namespace deer {

enum class SimMode : u8 { off, ssra, dynamic, oracle, rnr50, rnr_unique50 };
const char* to_string(SimMode m);
std::optional<SimMode> sim_mode_from_string(const std::string& s);

struct CacheConfig {
  u64 l1i_bytes = 256 * 1024;
  u32 l1i_assoc = 8;
  u64 l2_bytes = 2 * 1024 * 1024;
  u32 l2_assoc = 8;
  u32 line_size = 64;
  u32 lat_l1 = 4;    // hit latency; hits do not stall the simple clock
  u32 lat_l2 = 40;   // stall per L1 miss that hits L2
  u32 lat_dram = 200;  // stall per L2 miss

  void validate() const;
};

struct DRUConfig {
  SimMode mode = SimMode::ssra;
  u32 ras_size = 16;
  u32 prefetch_buffer_size = 32;
  u32 metadata_load_latency = 400;
  bool ras_top_prefetch = true;
  u32 issue_bandwidth = 1;  // prefetches issued from the buffer per cycle
  // dynamic mode
  u32 metadata_cache_entries = 256;
  u32 runahead_depth = 50;
  bool ideal_metadata = false;  // dynamic walks never miss the metadata cache
  // oracle mode
  u64 oracle_distance = 1000;

  void validate() const;
  // prefetch buffer + RAS at 6 bytes per entry, plus one fetched metadata line
  u64 onchip_storage_bytes() const {
    return u64{prefetch_buffer_size} * 6 + u64{ras_size} * 6 + 16;
  }
};

class RAS {
 public:
  explicit RAS(u32 capacity) : buf_(std::max<u32>(1, capacity)) {}

  void push(Addr a) {
    buf_[head_] = a;
    head_ = (head_ + 1) % buf_.size();
    if (size_ < buf_.size()) ++size_;  // overflow overwrites the oldest entry
  }
  std::optional<Addr> pop() {
    if (size_ == 0) return std::nullopt;
    head_ = (head_ + buf_.size() - 1) % buf_.size();
    --size_;
    return buf_[head_];
  }
  std::optional<Addr> top() const {
    if (size_ == 0) return std::nullopt;
    return buf_[(head_ + buf_.size() - 1) % buf_.size()];
  }
  size_t depth() const { return size_; }
  std::vector<Addr> snapshot() const {  // bottom to top
    std::vector<Addr> out;
    out.reserve(size_);
    for (size_t i = 0; i < size_; ++i)
      out.push_back(buf_[(head_ + buf_.size() - size_ + i) % buf_.size()]);
    return out;
  }

 private:
  std::vector<Addr> buf_;
  size_t head_ = 0;
  size_t size_ = 0;
};

enum class PfOrigin : u8 { trigger = 0, ras_top = 1, replay = 2, oracle = 3 };

struct SimCounters {
  u64 cycles = 0;
  u64 instructions = 0;
  u64 l1i_accesses = 0;
  u64 l1i_misses = 0;
  u64 l2_demand_accesses = 0;
  u64 l2_demand_misses = 0;
  u64 l2_cold_misses = 0;
  u64 l2_noncold_misses = 0;
  u64 triggers = 0;
  u64 metadata_requests = 0;
  u64 metadata_misses = 0;
  u64 prefetches_issued = 0;
  u64 pf_hit_redundant = 0;
  u64 pf_useful_cold = 0;
  u64 pf_useful_noncold = 0;
  u64 pf_evicted_without_use = 0;
  u64 pf_dropped_from_buffer = 0;
  u64 onchip_storage_bytes = 0;
  u64 recording_storage_bytes = 0;
  u64 cold_first_touches_after_first_trigger = 0;
  u64 cold_covered_after_first_trigger = 0;
};

struct AccuracySummary {
  u64 count = 0;
  u64 empty_predictions = 0;
  f64 min = 0, q1 = 0, median = 0, q3 = 0, max = 0, mean = 0;
};

struct DepthSummary {
  f64 dynamic_insts_mean = 0;
  f64 static_insts_mean = 0;
  f64 cycles_skipped_ratio = 0;
  u64 qualifying = 0;
};

struct SimReport {
  std::string trace_name;
  u64 trace_instructions = 0;
  SimMode mode = SimMode::off;
  std::string label;
  CacheConfig cache;
  DRUConfig dru;
  SimCounters counters;
  std::optional<AccuracySummary> accuracy;
  std::optional<DepthSummary> depth;
  std::optional<f64> divergence_rate;

  f64 l2_demand_miss_rate() const {
    return counters.l2_demand_accesses == 0
               ? 0.0
               : static_cast<f64>(counters.l2_demand_misses) /
                     static_cast<f64>(counters.l2_demand_accesses);
  }
};

std::string report_to_json(const SimReport& r);
SimReport report_from_json(const std::string& json_text);
void save_report(const SimReport& r, const std::string& path);
SimReport load_report(const std::string& path);

struct SimEvent {
  Addr line = 0;
  bool is_prefetch = false;
  bool miss = false;  // demand: L2 miss; prefetch: filled (not redundant)
};

struct SimOptions {
  std::string label;
  std::vector<SimEvent>* l2_event_log = nullptr;   // optional capture for oracles
  std::vector<Addr>* final_l2_lines = nullptr;     // sorted resident lines at exit
};

// What a prefetch source may do, per committed instruction.
class SimDevice {
 public:
  virtual ~SimDevice() = default;
  virtual u64 cycle() const = 0;
  virtual u32 line_size() const = 0;
  // Lines enter the prefetch buffer tail once due_cycle is reached.
  virtual void enqueue_lines(const std::vector<Addr>& lines, u64 due_cycle, PfOrigin origin) = 0;
  // Immediate L2 prefetch, bypassing the buffer (oracle only).
  virtual void prefetch_direct(Addr line, PfOrigin origin) = 0;
  virtual void count_trigger() = 0;
  virtual void count_metadata_request() = 0;
  virtual void count_metadata_miss() = 0;
};

class SimEngine {
 public:
  virtual ~SimEngine() = default;
  virtual void on_commit(const InstructionRecord& rec, u64 index, SimDevice& dev) = 0;
  virtual u64 recording_storage_bytes() const { return 0; }
  virtual u64 onchip_storage_bytes(const DRUConfig& dru) const { return dru.onchip_storage_bytes(); }
};

SimReport simulate_with_engine(const Trace& trace, const CacheConfig& cache_cfg,
                               const DRUConfig& dru_cfg, SimEngine* engine,
                               const SimOptions& opts = {});

// mode off or ssra (table consulted per trigger; pass null for off)
SimReport simulate(const Trace& trace, const MetadataTable* table, const CacheConfig& cache_cfg,
                   const DRUConfig& dru_cfg, const SimOptions& opts = {});

SimReport simulate_dynamic(const Trace& trace, const HBAnalysis& analysis,
                           const CacheConfig& cache_cfg, const DRUConfig& dru_cfg,
                           const SimOptions& opts = {});

SimReport run_oracle(const Trace& trace, const CacheConfig& cache_cfg, u64 lookahead,
                     const SimOptions& opts = {});

}  // namespace deer
