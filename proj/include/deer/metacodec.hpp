#pragma once

#include <array>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "deer/types.hpp"

namespace deer {

// 16-byte metadata entry: two 64-bit groups, each holding one full region and
// two delta regions. A region is a 512-byte granule (8 cachelines).
//
// Group bit layout (little-endian within each u64):
//   bits  0-29  full-region base      (address bits 9-38)
//   bits 30-37  full-region bitmap    (bit i = region base + i*64)
//   bits 38-42  delta region 1 offset (signed, x512 bytes, from the group base)
//   bits 43-50  delta region 1 bitmap
//   bits 51-55  delta region 2 offset (signed)
//   bits 56-63  delta region 2 bitmap
//
// Address bits 39 and up come from the owning HB pc. An entry encodes at most
// 48 cachelines (6 regions x 8 lines).
struct MetadataEntry {
  u64 group[2] = {0, 0};

  std::array<u8, 16> bytes() const;
  static MetadataEntry from_bytes(std::span<const u8, 16> b);
  bool operator==(const MetadataEntry&) const = default;
  bool empty() const { return group[0] == 0 && group[1] == 0; }
};

inline constexpr u32 kRegionBytes = 512;
inline constexpr u32 kLinesPerRegion = 8;
inline constexpr u32 kMaxRegions = 6;
inline constexpr u32 kMaxEncodableLines = 48;
inline constexpr i32 kDeltaMin = -16;
inline constexpr i32 kDeltaMax = 15;

class CodecError : public Error {
 public:
  enum class Code : u8 { region_overflow, delta_overflow, upper_bits_mismatch };

  CodecError(Code code, Addr offending_cacheline, std::string message)
      : Error(ErrorKind::data, std::move(message)),
        code_(code),
        offending_cacheline_(offending_cacheline) {}

  Code code() const { return code_; }
  Addr offending_cacheline() const { return offending_cacheline_; }

 private:
  Code code_;
  Addr offending_cacheline_;
};

MetadataEntry encode_entry(Addr hb_pc, std::span<const Addr> cachelines);
std::vector<Addr> decode_entry(const MetadataEntry& entry, Addr hb_pc);

// Greedy fallback for dispersed line sets: drop the earliest-in-chain line
// until the rest encodes. Returns the number of lines dropped.
struct EncodedWithDrops {
  MetadataEntry entry;
  u32 dropped = 0;
};
EncodedWithDrops encode_dropping_earliest(Addr hb_pc, std::vector<Addr> lines_in_chain_order);

struct HashConfig {
  u64 seed = 0x5DEECE66DULL;
};

// Two-choice displacement (cuckoo-style) table of 16-byte entries, keyed by
// HB pc. Sized to keep load factor <= 0.5; lookups probe two buckets.
class MetadataTable {
 public:
  struct Slot {
    u64 key = 0;  // 0 marks an empty slot
    MetadataEntry entry;
  };

  static MetadataTable build(const std::map<Addr, MetadataEntry>& entries,
                             HashConfig config = {});

  const MetadataEntry* lookup(Addr hb_pc) const;

  u64 bucket_count() const { return slots_.size(); }
  u64 occupancy() const { return occupancy_; }
  u64 entry_bytes() const { return slots_.size() * sizeof(MetadataEntry); }
  u64 raw_entry_bytes() const { return occupancy_ * sizeof(MetadataEntry); }
  u64 hash_seed() const { return seed_; }
  u64 regrow_count() const { return regrows_; }
  Addr base_address() const { return base_address_; }
  const std::vector<Slot>& slots() const { return slots_; }

  void save(const std::string& path) const;
  static MetadataTable load(const std::string& path);

  std::string stats_json() const;

 private:
  std::vector<Slot> slots_;
  u64 occupancy_ = 0;
  u64 seed_ = 0;
  u64 regrows_ = 0;
  Addr base_address_ = 0;  // HBT_PTR model value; cosmetic in this artifact

  std::pair<u64, u64> buckets_for(u64 key) const;
  bool try_insert_all(const std::map<Addr, MetadataEntry>& entries);
};

u64 mix64(u64 x);

}  // namespace deer
