#pragma once

#include <string>

#include "deer/types.hpp"

namespace deer {

// Binary trace format, little-endian throughout:
//   header:  magic "DEER" | version u16 | instruction_size u8 | cacheline_size_log2 u8
//            | name_len u16 | name bytes | record_count u64
//   record:  pc u64 | target u64 (0 when absent) | flags u8
//   flags:   bits 0-2 iclass, bit 3 taken, bit 4 target-present
// seq is implicit: the record index.
inline constexpr u16 kTraceFormatVersion = 1;

Trace read_trace(const std::string& path);
void write_trace(const Trace& trace, const std::string& path);

// Checks record invariants (strictly increasing seq, target/taken consistency).
// Throws Error{data} naming the first offending record index.
void validate_records(const std::vector<InstructionRecord>& records);

// Counts pops of an empty stack during a call/return replay of the trace.
// Synthetic traces must stay within the allowance (default 0).
u64 unmatched_return_count(const Trace& trace);

Trace slice_trace(const Trace& trace, u64 first, u64 count);

std::string trace_info_json(const Trace& trace);

}  // namespace deer
