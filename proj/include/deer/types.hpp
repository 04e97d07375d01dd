#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace deer {

using u8 = std::uint8_t;
using u16 = std::uint16_t;
using u32 = std::uint32_t;
using u64 = std::uint64_t;
using i32 = std::int32_t;
using i64 = std::int64_t;
using f64 = double;

using Addr = u64;

// Numeric values are pinned by the trace file format (flags bits 0-2).
enum class IClass : u8 {
  other = 0,
  call = 1,
  ret = 2,
  cond_branch = 3,
  uncond_branch = 4,
  indirect_call = 5,
};

const char* to_string(IClass c);

inline bool is_call(IClass c) { return c == IClass::call || c == IClass::indirect_call; }
inline bool is_return(IClass c) { return c == IClass::ret; }
inline bool is_control_flow(IClass c) { return c != IClass::other; }

struct InstructionRecord {
  u64 seq = 0;
  Addr pc = 0;
  IClass iclass = IClass::other;
  Addr target = 0;      // valid iff has_target
  bool has_target = false;
  bool taken = false;   // meaningful iff iclass == cond_branch

  bool operator==(const InstructionRecord&) const = default;

  static InstructionRecord plain(u64 seq, Addr pc) {
    return {seq, pc, IClass::other, 0, false, false};
  }
  static InstructionRecord make_call(u64 seq, Addr pc, Addr target, bool indirect = false) {
    return {seq, pc, indirect ? IClass::indirect_call : IClass::call, target, true, false};
  }
  static InstructionRecord make_return(u64 seq, Addr pc, Addr target) {
    return {seq, pc, IClass::ret, target, true, false};
  }
  static InstructionRecord make_cond(u64 seq, Addr pc, Addr target, bool taken) {
    return {seq, pc, IClass::cond_branch, target, true, taken};
  }
  static InstructionRecord make_jump(u64 seq, Addr pc, Addr target) {
    return {seq, pc, IClass::uncond_branch, target, true, false};
  }
};

struct TraceMeta {
  u32 instruction_size = 4;
  u32 cacheline_size = 64;
  std::string name;
  u64 instruction_count = 0;
};

struct Trace {
  TraceMeta meta;
  std::vector<InstructionRecord> records;

  Addr line_of(Addr pc) const { return pc & ~static_cast<u64>(meta.cacheline_size - 1); }
  u64 size() const { return records.size(); }
};

enum class ErrorKind : u8 { usage, data, io };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string message, std::optional<u64> byte_offset = std::nullopt)
      : std::runtime_error(std::move(message)), kind_(kind), byte_offset_(byte_offset) {}

  ErrorKind kind() const { return kind_; }
  std::optional<u64> byte_offset() const { return byte_offset_; }

 private:
  ErrorKind kind_;
  std::optional<u64> byte_offset_;
};

}  // namespace deer
