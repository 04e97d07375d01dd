#include "deer/sim.hpp"

#include <algorithm>
#include <bit>
#include <list>
#include <unordered_map>
#include <unordered_set>

namespace deer {

const char* to_string(SimMode m) {
  switch (m) {
    case SimMode::off: return "off";
    case SimMode::ssra: return "ssra";
    case SimMode::dynamic: return "dynamic";
    case SimMode::oracle: return "oracle";
    case SimMode::rnr50: return "rnr50";
    case SimMode::rnr_unique50: return "rnr-unique50";
  }
  return "?";
}

std::optional<SimMode> sim_mode_from_string(const std::string& s) {
  if (s == "off") return SimMode::off;
  if (s == "ssra") return SimMode::ssra;
  if (s == "dynamic") return SimMode::dynamic;
  if (s == "oracle") return SimMode::oracle;
  if (s == "rnr50") return SimMode::rnr50;
  if (s == "rnr-unique50") return SimMode::rnr_unique50;
  return std::nullopt;
}

void CacheConfig::validate() const {
  if (line_size == 0 || !std::has_single_bit(line_size))
    throw Error(ErrorKind::usage, "line_size must be a power of two");
  if (l1i_assoc == 0 || l2_assoc == 0) throw Error(ErrorKind::usage, "associativity must be >= 1");
  if (l1i_bytes % (static_cast<u64>(l1i_assoc) * line_size) != 0)
    throw Error(ErrorKind::usage, "l1i size must divide into assoc x line_size sets");
  if (l2_bytes % (static_cast<u64>(l2_assoc) * line_size) != 0)
    throw Error(ErrorKind::usage, "l2 size must divide into assoc x line_size sets");
  if (!std::has_single_bit(l1i_bytes / (static_cast<u64>(l1i_assoc) * line_size)) ||
      !std::has_single_bit(l2_bytes / (static_cast<u64>(l2_assoc) * line_size)))
    throw Error(ErrorKind::usage, "set counts must be powers of two");
  if (!(lat_l1 < lat_l2 && lat_l2 < lat_dram))
    throw Error(ErrorKind::usage, "latencies must increase strictly: l1 < l2 < dram");
}

void DRUConfig::validate() const {
  if (ras_size == 0 || prefetch_buffer_size == 0 || issue_bandwidth == 0)
    throw Error(ErrorKind::usage, "DRU counts must be >= 1");
  if (mode == SimMode::dynamic && (metadata_cache_entries == 0 || runahead_depth == 0))
    throw Error(ErrorKind::usage, "dynamic mode needs metadata_cache_entries and runahead_depth >= 1");
}

namespace {

// Set-associative LRU cache with per-line prefetch bookkeeping.
class Cache {
 public:
  struct Line {
    Addr tag = 0;
    u64 lru = 0;
    bool valid = false;
    bool prefetched = false;
    bool pf_covers_cold = false;  // the line had never been resident when prefetched
  };

  Cache(u64 bytes, u32 assoc, u32 line_size)
      : assoc_(assoc), line_size_(line_size), sets_(bytes / (static_cast<u64>(assoc) * line_size)) {
    lines_.resize(sets_ * assoc_);
  }

  Line* probe(Addr line_addr) {
    Line* set = set_of(line_addr);
    for (u32 w = 0; w < assoc_; ++w)
      if (set[w].valid && set[w].tag == line_addr) return &set[w];
    return nullptr;
  }

  void touch(Line* line) { line->lru = ++tick_; }

  // Fills line_addr, returning the evicted line when a valid victim existed.
  std::optional<Line> fill(Addr line_addr, bool prefetched, bool pf_covers_cold) {
    Line* set = set_of(line_addr);
    Line* victim = &set[0];
    for (u32 w = 0; w < assoc_; ++w) {
      if (!set[w].valid) {
        victim = &set[w];
        break;
      }
      if (set[w].lru < victim->lru) victim = &set[w];
    }
    std::optional<Line> evicted;
    if (victim->valid) evicted = *victim;
    *victim = {line_addr, ++tick_, true, prefetched, pf_covers_cold};
    return evicted;
  }

  template <typename Fn>
  void for_each_valid(Fn&& fn) const {
    for (const Line& l : lines_)
      if (l.valid) fn(l);
  }

 private:
  Line* set_of(Addr line_addr) {
    u64 set = (line_addr / line_size_) & (sets_ - 1);
    return &lines_[set * assoc_];
  }

  u32 assoc_;
  u32 line_size_;
  u64 sets_;
  u64 tick_ = 0;
  std::vector<Line> lines_;
};

class Machine : public SimDevice {
 public:
  Machine(const Trace& trace, const CacheConfig& cache_cfg, const DRUConfig& dru_cfg,
          const SimOptions& opts)
      : trace_(trace),
        cache_cfg_(cache_cfg),
        dru_cfg_(dru_cfg),
        opts_(opts),
        l1_(cache_cfg.l1i_bytes, cache_cfg.l1i_assoc, cache_cfg.line_size),
        l2_(cache_cfg.l2_bytes, cache_cfg.l2_assoc, cache_cfg.line_size) {}

  u64 cycle() const override { return cycle_; }
  u32 line_size() const override { return cache_cfg_.line_size; }

  void enqueue_lines(const std::vector<Addr>& lines, u64 due_cycle, PfOrigin origin) override {
    if (!lines.empty()) arrivals_.push_back({due_cycle, lines, origin});
  }

  void prefetch_direct(Addr line, PfOrigin origin) override { prefetch_into_l2(line, origin); }

  void count_trigger() override {
    counters_.triggers++;
    first_trigger_seen_ = true;
  }
  void count_metadata_request() override { counters_.metadata_requests++; }
  void count_metadata_miss() override { counters_.metadata_misses++; }

  SimReport run(SimEngine* engine) {
    for (u64 i = 0; i < trace_.records.size(); ++i) {
      const InstructionRecord& rec = trace_.records[i];
      cycle_ += 1;
      deliver_arrivals();
      issue_prefetches();
      demand_fetch(trace_.line_of(rec.pc));
      if (engine) engine->on_commit(rec, i, *this);
      counters_.instructions++;
    }
    // Resident, never-used prefetches are as wasteful as evicted ones; fold
    // them in so the usefulness categories partition the issued prefetches.
    l2_.for_each_valid([&](const Cache::Line& l) {
      if (l.prefetched) counters_.pf_evicted_without_use++;
    });
    if (opts_.final_l2_lines) {
      l2_.for_each_valid([&](const Cache::Line& l) { opts_.final_l2_lines->push_back(l.tag); });
      std::sort(opts_.final_l2_lines->begin(), opts_.final_l2_lines->end());
    }
    counters_.cycles = cycle_;
    counters_.onchip_storage_bytes =
        engine ? engine->onchip_storage_bytes(dru_cfg_) : 0;
    counters_.recording_storage_bytes = engine ? engine->recording_storage_bytes() : 0;

    SimReport report;
    report.trace_name = trace_.meta.name;
    report.trace_instructions = trace_.records.size();
    report.mode = dru_cfg_.mode;
    report.label = opts_.label;
    report.cache = cache_cfg_;
    report.dru = dru_cfg_;
    report.counters = counters_;
    return report;
  }

 private:
  struct Arrival {
    u64 due;
    std::vector<Addr> lines;
    PfOrigin origin;
  };
  struct BufferEntry {
    Addr line;
    PfOrigin origin;
  };

  void deliver_arrivals() {
    while (!arrivals_.empty() && arrivals_.front().due <= cycle_) {
      for (Addr line : arrivals_.front().lines) {
        if (buffer_.size() == dru_cfg_.prefetch_buffer_size) {
          buffer_.pop_front();  // overflow drops the oldest entry
          counters_.pf_dropped_from_buffer++;
        }
        buffer_.push_back({line, arrivals_.front().origin});
      }
      arrivals_.pop_front();
    }
  }

  void issue_prefetches() {
    for (u32 n = 0; n < dru_cfg_.issue_bandwidth && !buffer_.empty(); ++n) {
      BufferEntry e = buffer_.front();
      buffer_.pop_front();
      prefetch_into_l2(e.line, e.origin);
    }
  }

  void prefetch_into_l2(Addr line, PfOrigin) {
    counters_.prefetches_issued++;
    if (l2_.probe(line)) {
      counters_.pf_hit_redundant++;  // no LRU touch: the check is passive
      log_event(line, true, false);
      return;
    }
    log_event(line, true, true);
    bool covers_cold = !ever_resident_.count(line);
    ever_resident_.insert(line);
    auto evicted = l2_.fill(line, true, covers_cold);
    if (evicted && evicted->prefetched) counters_.pf_evicted_without_use++;
  }

  void demand_fetch(Addr line) {
    counters_.l1i_accesses++;
    if (Cache::Line* l1 = l1_.probe(line)) {
      l1_.touch(l1);
      return;
    }
    counters_.l1i_misses++;
    counters_.l2_demand_accesses++;
    if (Cache::Line* l2 = l2_.probe(line)) {
      log_event(line, false, false);
      if (l2->prefetched) {
        if (l2->pf_covers_cold) {
          counters_.pf_useful_cold++;
          if (first_trigger_seen_) {
            counters_.cold_first_touches_after_first_trigger++;
            counters_.cold_covered_after_first_trigger++;
          }
        } else {
          counters_.pf_useful_noncold++;
        }
        l2->prefetched = false;
      }
      l2_.touch(l2);
      cycle_ += cache_cfg_.lat_l2;
      l1_.fill(line, false, false);
      return;
    }
    log_event(line, false, true);
    counters_.l2_demand_misses++;
    if (!ever_resident_.count(line)) {
      counters_.l2_cold_misses++;
      if (first_trigger_seen_) counters_.cold_first_touches_after_first_trigger++;
      ever_resident_.insert(line);
    } else {
      counters_.l2_noncold_misses++;
    }
    cycle_ += cache_cfg_.lat_dram;
    auto evicted = l2_.fill(line, false, false);
    if (evicted && evicted->prefetched) counters_.pf_evicted_without_use++;
    l1_.fill(line, false, false);
  }

  void log_event(Addr line, bool is_prefetch, bool miss) {
    if (opts_.l2_event_log) opts_.l2_event_log->push_back({line, is_prefetch, miss});
  }

  const Trace& trace_;
  CacheConfig cache_cfg_;
  DRUConfig dru_cfg_;
  SimOptions opts_;
  Cache l1_;
  Cache l2_;
  u64 cycle_ = 0;
  SimCounters counters_;
  std::deque<Arrival> arrivals_;
  std::deque<BufferEntry> buffer_;
  std::unordered_set<Addr> ever_resident_;
  bool first_trigger_seen_ = false;
};

// Commit-driven call/return filter shared by the DEER engines.
struct TriggerFilter {
  RAS ras;
  explicit TriggerFilter(u32 ras_size) : ras(ras_size) {}

  // Returns the trigger pc when rec is a call or return.
  std::optional<Addr> step(const InstructionRecord& rec, u32 instruction_size) {
    if (is_call(rec.iclass)) {
      ras.push(rec.pc + instruction_size);
      return rec.target;
    }
    if (is_return(rec.iclass)) {
      ras.pop();
      return rec.target;
    }
    return std::nullopt;
  }
};

class SsraEngine : public SimEngine {
 public:
  SsraEngine(const MetadataTable* table, const DRUConfig& dru, u32 instruction_size)
      : table_(table), dru_(dru), isz_(instruction_size), filter_(dru.ras_size) {}

  void on_commit(const InstructionRecord& rec, u64, SimDevice& dev) override {
    auto trigger = filter_.step(rec, isz_);
    if (!trigger) return;
    dev.count_trigger();
    request(*trigger, PfOrigin::trigger, dev);
    if (dru_.ras_top_prefetch)
      if (auto top = filter_.ras.top()) request(*top, PfOrigin::ras_top, dev);
  }

 private:
  void request(Addr pc, PfOrigin origin, SimDevice& dev) {
    dev.count_metadata_request();
    const MetadataEntry* entry = table_ ? table_->lookup(pc) : nullptr;
    if (!entry) {
      dev.count_metadata_miss();
      return;
    }
    dev.enqueue_lines(decode_entry(*entry, pc), dev.cycle() + dru_.metadata_load_latency, origin);
  }

  const MetadataTable* table_;
  DRUConfig dru_;
  u32 isz_;
  TriggerFilter filter_;
};

// LRU metadata cache for the dynamic runahead engine.
class MetadataCache {
 public:
  explicit MetadataCache(u32 capacity) : cap_(capacity) {}

  bool contains_and_touch(Addr pc) {
    auto it = map_.find(pc);
    if (it == map_.end()) return false;
    order_.splice(order_.end(), order_, it->second);
    return true;
  }

  void insert(Addr pc) {
    if (map_.count(pc)) return;
    if (map_.size() == cap_) {
      map_.erase(order_.front());
      order_.pop_front();
    }
    order_.push_back(pc);
    map_[pc] = std::prev(order_.end());
  }

 private:
  u32 cap_;
  std::list<Addr> order_;
  std::unordered_map<Addr, std::list<Addr>::iterator> map_;
};

class DynamicEngine : public SimEngine {
 public:
  DynamicEngine(const HBAnalysis& analysis, const DRUConfig& dru, u32 instruction_size)
      : analysis_(analysis),
        dru_(dru),
        isz_(instruction_size),
        filter_(dru.ras_size),
        cache_(dru.metadata_cache_entries) {}

  void on_commit(const InstructionRecord& rec, u64, SimDevice& dev) override {
    // Complete pending metadata-cache fills first.
    while (!fills_.empty() && fills_.front().first <= dev.cycle()) {
      cache_.insert(fills_.front().second);
      pending_.erase(fills_.front().second);
      fills_.pop_front();
    }
    auto trigger = filter_.step(rec, isz_);
    if (!trigger) return;
    dev.count_trigger();
    WalkResult walk =
        walk_chain(analysis_, *trigger, dru_.runahead_depth, filter_.ras.snapshot(),
                   [&](Addr pc) { return dru_.ideal_metadata || cache_.contains_and_touch(pc); });
    if (!walk.line_seq.empty()) {
      std::vector<Addr> lines;
      std::unordered_set<Addr> seen;
      for (Addr l : walk.line_seq)
        if (seen.insert(l).second) lines.push_back(l);
      dev.enqueue_lines(lines, dev.cycle(), PfOrigin::trigger);
    }
    for (Addr missed : walk.metadata_misses) {
      dev.count_metadata_request();
      dev.count_metadata_miss();
      if (pending_.insert(missed).second)
        fills_.push_back({dev.cycle() + dru_.metadata_load_latency, missed});
    }
  }

 private:
  const HBAnalysis& analysis_;
  DRUConfig dru_;
  u32 isz_;
  TriggerFilter filter_;
  MetadataCache cache_;
  std::deque<std::pair<u64, Addr>> fills_;
  std::unordered_set<Addr> pending_;
};

class OracleEngine : public SimEngine {
 public:
  OracleEngine(const Trace& trace, u64 lookahead) : trace_(trace), n_(lookahead) {}

  void on_commit(const InstructionRecord&, u64 index, SimDevice& dev) override {
    u64 ahead = index + n_;
    if (ahead < trace_.records.size())
      dev.prefetch_direct(trace_.line_of(trace_.records[ahead].pc), PfOrigin::oracle);
  }

  u64 onchip_storage_bytes(const DRUConfig&) const override { return 0; }

 private:
  const Trace& trace_;
  u64 n_;
};

}  // namespace

SimReport simulate_with_engine(const Trace& trace, const CacheConfig& cache_cfg,
                               const DRUConfig& dru_cfg, SimEngine* engine,
                               const SimOptions& opts) {
  cache_cfg.validate();
  dru_cfg.validate();
  Machine m(trace, cache_cfg, dru_cfg, opts);
  return m.run(engine);
}

SimReport simulate(const Trace& trace, const MetadataTable* table, const CacheConfig& cache_cfg,
                   const DRUConfig& dru_cfg, const SimOptions& opts) {
  if (dru_cfg.mode == SimMode::off)
    return simulate_with_engine(trace, cache_cfg, dru_cfg, nullptr, opts);
  if (dru_cfg.mode != SimMode::ssra)
    throw Error(ErrorKind::usage, "simulate() handles modes off and ssra only");
  SsraEngine engine(table, dru_cfg, trace.meta.instruction_size);
  return simulate_with_engine(trace, cache_cfg, dru_cfg, &engine, opts);
}

SimReport simulate_dynamic(const Trace& trace, const HBAnalysis& analysis,
                           const CacheConfig& cache_cfg, const DRUConfig& dru_cfg,
                           const SimOptions& opts) {
  DRUConfig cfg = dru_cfg;
  cfg.mode = SimMode::dynamic;
  DynamicEngine engine(analysis, cfg, trace.meta.instruction_size);
  return simulate_with_engine(trace, cache_cfg, cfg, &engine, opts);
}

SimReport run_oracle(const Trace& trace, const CacheConfig& cache_cfg, u64 lookahead,
                     const SimOptions& opts) {
  DRUConfig cfg;
  cfg.mode = SimMode::oracle;
  cfg.oracle_distance = lookahead;
  OracleEngine engine(trace, lookahead);
  return simulate_with_engine(trace, cache_cfg, cfg, &engine, opts);
}

}  // namespace deer
