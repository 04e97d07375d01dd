#include <algorithm>
#include <filesystem>
#include <map>
#include <set>

#include "doctest.h"

#include "deer/metacodec.hpp"
#include "deer/synth.hpp"

using namespace deer;

namespace {

constexpr Addr kHbPc = 0x40000000;
constexpr Addr kBaseRegion = kHbPc >> 9;  // 0x200000

Addr line_at(Addr region_index, u32 bit) { return (region_index << 9) | (static_cast<Addr>(bit) << 6); }

}  // namespace

TEST_CASE("empty cacheline list encodes to the all-zero entry") {
  MetadataEntry e = encode_entry(kHbPc, {});
  CHECK(e.group[0] == 0);
  CHECK(e.group[1] == 0);
  CHECK(decode_entry(e, kHbPc).empty());
}

TEST_CASE("golden: eight lines of one region fill group1's full slot") {
  std::vector<Addr> lines;
  for (u32 i = 0; i < 8; ++i) lines.push_back(kHbPc + i * 64);
  MetadataEntry e = encode_entry(kHbPc, lines);
  CHECK(e.group[0] == ((static_cast<u64>(0xFF) << 30) | kBaseRegion));
  CHECK(e.group[1] == 0);
  auto bytes = e.bytes();
  const u8 expect[16] = {0x00, 0x00, 0x20, 0xC0, 0x3F, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0};
  for (int i = 0; i < 16; ++i) CHECK(bytes[static_cast<size_t>(i)] == expect[i]);

  auto back = decode_entry(e, kHbPc);
  CHECK(std::set<Addr>(back.begin(), back.end()) == std::set<Addr>(lines.begin(), lines.end()));
}

TEST_CASE("golden: negative and positive deltas around the group base") {
  // regions 0x1FFFFF (base), 0x200000 (+1), 0x200002 (+3), one line each
  std::vector<Addr> lines{line_at(kBaseRegion - 1, 0), line_at(kBaseRegion, 0),
                          line_at(kBaseRegion + 2, 0)};
  MetadataEntry e = encode_entry(kHbPc, lines);
  CHECK(e.group[0] == 0x01180840401FFFFFull);
  CHECK(e.group[1] == 0);
  auto back = decode_entry(e, kHbPc);
  // sorted by (group, region slot, bit): full region first, then deltas
  REQUIRE(back.size() == 3);
  CHECK(back[0] == line_at(kBaseRegion - 1, 0));
  CHECK(back[1] == line_at(kBaseRegion, 0));
  CHECK(back[2] == line_at(kBaseRegion + 2, 0));
}

TEST_CASE("golden: hand-built word with delta -1 decodes below the base") {
  MetadataEntry e;
  // full region kBaseRegion bitmap 0x01; delta1 = -1 (0x1F), bitmap 0x01
  e.group[0] = kBaseRegion | (u64{0x01} << 30) | (u64{0x1F} << 38) | (u64{0x01} << 43);
  auto lines = decode_entry(e, kHbPc);
  REQUIRE(lines.size() == 2);
  CHECK(lines[0] == kHbPc);
  CHECK(lines[1] == kHbPc - 512);
}

TEST_CASE("48 lines over six regions spanning ~16KB encode; a 7th region overflows") {
  std::vector<Addr> lines;
  const Addr regions[6] = {kBaseRegion,      kBaseRegion + 8,  kBaseRegion + 15,
                           kBaseRegion + 16, kBaseRegion + 24, kBaseRegion + 31};
  for (Addr r : regions)
    for (u32 bit = 0; bit < 8; ++bit) lines.push_back(line_at(r, bit));
  REQUIRE(lines.size() == 48);
  MetadataEntry e = encode_entry(kHbPc, lines);
  auto back = decode_entry(e, kHbPc);
  CHECK(std::set<Addr>(back.begin(), back.end()) == std::set<Addr>(lines.begin(), lines.end()));

  auto with_seventh = lines;
  with_seventh.push_back(line_at(kBaseRegion + 200, 0));
  try {
    encode_entry(kHbPc, with_seventh);
    FAIL("expected RegionOverflow");
  } catch (const CodecError& err) {
    CHECK(err.code() == CodecError::Code::region_overflow);
  }
}

TEST_CASE("error taxonomy: region overflow, delta overflow, upper-bits mismatch") {
  // 49 lines
  std::vector<Addr> too_many;
  for (u32 i = 0; i < 49; ++i) too_many.push_back(kHbPc + i * 64);
  CHECK_THROWS_AS(encode_entry(kHbPc, too_many), CodecError);

  // two regions too far apart in both directions for any grouping of six
  std::vector<Addr> dispersed;
  for (int r = 0; r < 6; ++r) dispersed.push_back(line_at(kBaseRegion + static_cast<Addr>(r) * 40, 0));
  try {
    encode_entry(kHbPc, dispersed);
    FAIL("expected DeltaOverflow");
  } catch (const CodecError& err) {
    CHECK(err.code() == CodecError::Code::delta_overflow);
    CHECK(err.offending_cacheline() != 0);
  }

  // upper bits differ from the HB pc
  try {
    encode_entry(kHbPc, std::vector<Addr>{u64{1} << 40});
    FAIL("expected UpperBitsMismatch");
  } catch (const CodecError& err) {
    CHECK(err.code() == CodecError::Code::upper_bits_mismatch);
    CHECK(err.offending_cacheline() == u64{1} << 40);
  }
}

TEST_CASE("10k random encodable sets round-trip exactly") {
  Rng rng(2024);
  u64 done = 0, rejected = 0;
  while (done < 10000) {
    // two independent groups, regions within +15 granules of each base
    Addr b1 = (rng.next() & ((u64{1} << 28) - 1)) + 32;
    Addr b2 = rng.chance(0.5) ? b1 + rng.range(0, 40) : (rng.next() & ((u64{1} << 28) - 1)) + 32;
    Addr upper = rng.chance(0.5) ? 0 : (u64{3} << 39);
    std::set<Addr> lines;
    auto add_group = [&](Addr base) {
      u32 regions = static_cast<u32>(rng.range(0, 3));
      for (u32 r = 0; r < regions; ++r) {
        Addr region = base + rng.range(0, 15);
        u32 nbits = static_cast<u32>(rng.range(1, 8));
        for (u32 b = 0; b < nbits; ++b)
          lines.insert(upper | line_at(region, static_cast<u32>(rng.range(0, 7))));
      }
    };
    add_group(b1);
    add_group(b2);
    Addr hb_pc = upper | (b1 << 9) | 4;
    std::vector<Addr> vec(lines.begin(), lines.end());
    MetadataEntry e;
    try {
      e = encode_entry(hb_pc, vec);
    } catch (const CodecError&) {
      ++rejected;  // interleaved windows occasionally exceed a contiguous split
      continue;
    }
    auto back = decode_entry(e, hb_pc);
    std::set<Addr> back_set(back.begin(), back.end());
    REQUIRE(back_set == lines);
    REQUIRE(back.size() == back_set.size());  // no duplicate decodes
    ++done;
  }
  CHECK(rejected < 2000);  // the generator stays mostly within encodable shapes
}

TEST_CASE("entries are exactly 16 bytes and hold at most 48 lines") {
  CHECK(sizeof(MetadataEntry) == 16);
  std::vector<Addr> lines;
  for (u32 r = 0; r < 6; ++r)
    for (u32 b = 0; b < 8; ++b) lines.push_back(line_at(kBaseRegion + r, b));
  MetadataEntry e = encode_entry(kHbPc, lines);
  CHECK(decode_entry(e, kHbPc).size() == 48);
}

TEST_CASE("encode_dropping_earliest sheds lines from the chain head") {
  std::vector<Addr> lines;
  for (int r = 0; r < 8; ++r) lines.push_back(line_at(kBaseRegion + static_cast<Addr>(r) * 40, 0));
  EncodedWithDrops enc = encode_dropping_earliest(kHbPc, lines);
  CHECK(enc.dropped > 0);
  auto back = decode_entry(enc.entry, kHbPc);
  // the latest-in-chain lines survive
  CHECK(std::find(back.begin(), back.end(), lines.back()) != back.end());
  CHECK(std::find(back.begin(), back.end(), lines.front()) == back.end());
}

TEST_CASE("table: build, lookup, misses, and the footprint bound") {
  std::map<Addr, MetadataEntry> entries;
  Rng rng(7);
  for (u32 i = 0; i < 1000; ++i) {
    Addr pc = 0x40000000 + static_cast<Addr>(rng.range(1, 1u << 24)) * 4;
    std::vector<Addr> lines{pc & ~Addr{63}};
    entries[pc] = encode_entry(pc, lines);
  }
  MetadataTable table = MetadataTable::build(entries);
  for (const auto& [pc, entry] : entries) {
    const MetadataEntry* found = table.lookup(pc);
    REQUIRE(found);
    CHECK(*found == entry);
  }
  u64 misses = 0;
  for (u32 i = 1; i <= 1000; ++i) {
    Addr absent = 0x80000000 + static_cast<Addr>(i) * 4;
    if (!entries.count(absent) && !table.lookup(absent)) ++misses;
  }
  CHECK(misses == 1000);

  // entry storage stays within ~2x of the raw entries after the regrow policy
  CHECK(table.entry_bytes() <= static_cast<u64>(2.1 * static_cast<f64>(entries.size()) * 16));
  CHECK(table.raw_entry_bytes() == entries.size() * 16);
}

TEST_CASE("empty table misses every lookup") {
  MetadataTable table = MetadataTable::build({});
  CHECK(table.occupancy() == 0);
  CHECK(table.lookup(0x1234) == nullptr);
}

TEST_CASE("table serialization round-trips lookups bit-exactly") {
  std::map<Addr, MetadataEntry> entries;
  for (u32 i = 1; i <= 200; ++i) {
    Addr pc = 0x40000000 + static_cast<Addr>(i) * 256;
    entries[pc] = encode_entry(pc, std::vector<Addr>{pc & ~Addr{63}, (pc & ~Addr{63}) + 64});
  }
  MetadataTable table = MetadataTable::build(entries);
  auto path = (std::filesystem::temp_directory_path() / "deer_meta_rt.bin").string();
  table.save(path);
  MetadataTable loaded = MetadataTable::load(path);
  CHECK(loaded.bucket_count() == table.bucket_count());
  CHECK(loaded.occupancy() == table.occupancy());
  CHECK(loaded.hash_seed() == table.hash_seed());
  for (const auto& [pc, entry] : entries) {
    const MetadataEntry* found = loaded.lookup(pc);
    REQUIRE(found);
    CHECK(*found == entry);
  }
  CHECK(loaded.lookup(0x999) == nullptr);
}

TEST_CASE("table build is deterministic for a fixed seed") {
  std::map<Addr, MetadataEntry> entries;
  for (u32 i = 1; i <= 64; ++i) entries[0x1000 + i * 8] = MetadataEntry{{i, i * 3}};
  MetadataTable a = MetadataTable::build(entries, HashConfig{123});
  MetadataTable b = MetadataTable::build(entries, HashConfig{123});
  REQUIRE(a.slots().size() == b.slots().size());
  for (size_t i = 0; i < a.slots().size(); ++i) {
    CHECK(a.slots()[i].key == b.slots()[i].key);
    CHECK(a.slots()[i].entry == b.slots()[i].entry);
  }
}
