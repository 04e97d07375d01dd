#include "deer/trace_io.hpp"

#include <array>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

namespace deer {

const char* to_string(IClass c) {
  switch (c) {
    case IClass::other: return "other";
    case IClass::call: return "call";
    case IClass::ret: return "return";
    case IClass::cond_branch: return "cond-branch";
    case IClass::uncond_branch: return "uncond-branch";
    case IClass::indirect_call: return "indirect-call";
  }
  return "?";
}

namespace {

constexpr char kMagic[4] = {'D', 'E', 'E', 'R'};
constexpr u8 kFlagTakenBit = 3;
constexpr u8 kFlagTargetBit = 4;

void put_bytes(std::string& out, const void* p, size_t n) {
  out.append(static_cast<const char*>(p), n);
}

template <typename T>
void put_le(std::string& out, T v) {
  static_assert(std::is_unsigned_v<T>);
  for (size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

struct ByteReader {
  const std::string& buf;
  u64 pos = 0;

  bool exhausted(size_t n) const { return pos + n > buf.size(); }

  template <typename T>
  T le(const char* what) {
    if (exhausted(sizeof(T)))
      throw Error(ErrorKind::data,
                  std::string("truncated trace file while reading ") + what + " at byte offset " +
                      std::to_string(pos),
                  pos);
    T v = 0;
    for (size_t i = 0; i < sizeof(T); ++i)
      v |= static_cast<T>(static_cast<u8>(buf[pos + i])) << (8 * i);
    pos += sizeof(T);
    return v;
  }
};

u8 record_flags(const InstructionRecord& r) {
  u8 flags = static_cast<u8>(r.iclass) & 0x7;
  if (r.taken) flags |= u8{1} << kFlagTakenBit;
  if (r.has_target) flags |= u8{1} << kFlagTargetBit;
  return flags;
}

}  // namespace

void validate_records(const std::vector<InstructionRecord>& records) {
  u64 prev_seq = 0;
  for (size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (i > 0 && r.seq <= prev_seq)
      throw Error(ErrorKind::data, "out-of-order seq at record " + std::to_string(i) + " (seq " +
                                       std::to_string(r.seq) + " after " + std::to_string(prev_seq) + ")");
    prev_seq = r.seq;
    bool needs_target = is_control_flow(r.iclass);
    if (r.has_target != needs_target)
      throw Error(ErrorKind::data,
                  std::string("record ") + std::to_string(i) + ": target must be " +
                      (needs_target ? "present" : "absent") + " for iclass " + to_string(r.iclass));
    if (!r.has_target && r.target != 0)
      throw Error(ErrorKind::data, "record " + std::to_string(i) + ": non-zero target without target-present");
    if (r.taken && r.iclass != IClass::cond_branch)
      throw Error(ErrorKind::data,
                  "record " + std::to_string(i) + ": taken flag is only meaningful for cond-branch");
  }
}

void write_trace(const Trace& trace, const std::string& path) {
  validate_records(trace.records);
  if (trace.meta.cacheline_size < trace.meta.instruction_size ||
      !std::has_single_bit(trace.meta.cacheline_size))
    throw Error(ErrorKind::data, "cacheline_size must be a power of two >= instruction_size");

  std::string out;
  out.reserve(24 + trace.meta.name.size() + trace.records.size() * 17);
  put_bytes(out, kMagic, 4);
  put_le<u16>(out, kTraceFormatVersion);
  put_le<u8>(out, static_cast<u8>(trace.meta.instruction_size));
  put_le<u8>(out, static_cast<u8>(std::countr_zero(trace.meta.cacheline_size)));
  if (trace.meta.name.size() > 0xFFFF)
    throw Error(ErrorKind::data, "trace name longer than 65535 bytes");
  put_le<u16>(out, static_cast<u16>(trace.meta.name.size()));
  put_bytes(out, trace.meta.name.data(), trace.meta.name.size());
  put_le<u64>(out, trace.records.size());
  for (const auto& r : trace.records) {
    put_le<u64>(out, r.pc);
    put_le<u64>(out, r.has_target ? r.target : 0);
    put_le<u8>(out, record_flags(r));
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorKind::io, "cannot open for writing: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw Error(ErrorKind::io, "write failure: " + path);
}

Trace read_trace(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::io, "cannot open trace file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  std::string buf = ss.str();

  ByteReader rd{buf};
  if (rd.exhausted(4) || std::memcmp(buf.data(), kMagic, 4) != 0)
    throw Error(ErrorKind::data, "malformed header: bad magic at byte offset 0", 0);
  rd.pos = 4;
  u16 version = rd.le<u16>("version");
  if (version != kTraceFormatVersion)
    throw Error(ErrorKind::data, "malformed header: unsupported version " + std::to_string(version), 4);

  Trace trace;
  trace.meta.instruction_size = rd.le<u8>("instruction_size");
  u8 line_log2 = rd.le<u8>("cacheline_size_log2");
  if (line_log2 >= 32)
    throw Error(ErrorKind::data, "malformed header: cacheline_size_log2 out of range", rd.pos - 1);
  trace.meta.cacheline_size = u32{1} << line_log2;
  if (trace.meta.instruction_size == 0 || trace.meta.cacheline_size < trace.meta.instruction_size)
    throw Error(ErrorKind::data, "malformed header: cacheline smaller than instruction", 6);

  u16 name_len = rd.le<u16>("name length");
  if (rd.exhausted(name_len))
    throw Error(ErrorKind::data, "truncated trace file while reading name at byte offset " +
                                     std::to_string(rd.pos),
                rd.pos);
  trace.meta.name.assign(buf.data() + rd.pos, name_len);
  rd.pos += name_len;

  u64 count = rd.le<u64>("record count");
  trace.records.reserve(count);
  for (u64 i = 0; i < count; ++i) {
    u64 record_off = rd.pos;
    InstructionRecord r;
    r.seq = i;
    r.pc = rd.le<u64>("record pc");
    r.target = rd.le<u64>("record target");
    u8 flags = rd.le<u8>("record flags");
    u8 icl = flags & 0x7;
    if (icl > static_cast<u8>(IClass::indirect_call))
      throw Error(ErrorKind::data,
                  "bad iclass " + std::to_string(icl) + " in record " + std::to_string(i) +
                      " at byte offset " + std::to_string(record_off),
                  record_off);
    r.iclass = static_cast<IClass>(icl);
    r.taken = (flags >> kFlagTakenBit) & 1;
    r.has_target = (flags >> kFlagTargetBit) & 1;
    trace.records.push_back(r);
  }
  if (rd.pos != buf.size())
    throw Error(ErrorKind::data,
                "trailing bytes after last record at byte offset " + std::to_string(rd.pos), rd.pos);
  trace.meta.instruction_count = trace.records.size();
  validate_records(trace.records);
  return trace;
}

u64 unmatched_return_count(const Trace& trace) {
  u64 depth = 0;
  u64 unmatched = 0;
  for (const auto& r : trace.records) {
    if (is_call(r.iclass)) {
      ++depth;
    } else if (is_return(r.iclass)) {
      if (depth == 0)
        ++unmatched;
      else
        --depth;
    }
  }
  return unmatched;
}

Trace slice_trace(const Trace& trace, u64 first, u64 count) {
  if (first > trace.records.size())
    throw Error(ErrorKind::usage, "slice start beyond end of trace");
  u64 end = std::min<u64>(trace.records.size(), first + count);
  Trace out;
  out.meta = trace.meta;
  out.meta.name = trace.meta.name + "[" + std::to_string(first) + ":" + std::to_string(end) + "]";
  out.records.assign(trace.records.begin() + static_cast<std::ptrdiff_t>(first),
                     trace.records.begin() + static_cast<std::ptrdiff_t>(end));
  for (u64 i = 0; i < out.records.size(); ++i) out.records[i].seq = i;
  out.meta.instruction_count = out.records.size();
  return out;
}

std::string trace_info_json(const Trace& trace) {
  std::map<std::string, u64> by_class;
  std::set<Addr> pcs;
  std::set<Addr> lines;
  for (const auto& r : trace.records) {
    by_class[to_string(r.iclass)]++;
    pcs.insert(r.pc);
    lines.insert(trace.line_of(r.pc));
  }
  nlohmann::json j;
  j["name"] = trace.meta.name;
  j["instruction_count"] = trace.records.size();
  j["instruction_size"] = trace.meta.instruction_size;
  j["cacheline_size"] = trace.meta.cacheline_size;
  j["unique_pcs"] = pcs.size();
  j["unique_cachelines"] = lines.size();
  j["iclass_counts"] = by_class;
  return j.dump(2);
}

}  // namespace deer
