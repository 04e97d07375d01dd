#include "deer/metacodec.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace deer {

namespace {

constexpr u64 kBaseMask = (u64{1} << 30) - 1;

struct Region {
  u64 index;  // address >> 9
  u8 bitmap;
};

u64 pack_group(const std::vector<Region>& regions, size_t base_pos) {
  // base slot first, remaining regions in ascending order
  u64 g = regions[base_pos].index & kBaseMask;
  g |= static_cast<u64>(regions[base_pos].bitmap) << 30;
  int slot = 0;
  const u32 shift_delta[2] = {38, 51};
  const u32 shift_bitmap[2] = {43, 56};
  for (size_t i = 0; i < regions.size(); ++i) {
    if (i == base_pos) continue;
    i64 delta = static_cast<i64>(regions[i].index) - static_cast<i64>(regions[base_pos].index);
    g |= (static_cast<u64>(delta) & 0x1F) << shift_delta[slot];
    g |= static_cast<u64>(regions[i].bitmap) << shift_bitmap[slot];
    ++slot;
  }
  return g;
}

// A group is encodable iff some member can serve as the base with every other
// region within the signed 5-bit delta range. Returns the first such position.
i64 base_position(const std::vector<Region>& regions) {
  for (size_t p = 0; p < regions.size(); ++p) {
    bool ok = true;
    for (size_t i = 0; i < regions.size(); ++i) {
      i64 d = static_cast<i64>(regions[i].index) - static_cast<i64>(regions[p].index);
      if (d < kDeltaMin || d > kDeltaMax) {
        ok = false;
        break;
      }
    }
    if (ok) return static_cast<i64>(p);
  }
  return -1;
}

}  // namespace

std::array<u8, 16> MetadataEntry::bytes() const {
  std::array<u8, 16> out;
  for (int g = 0; g < 2; ++g)
    for (int i = 0; i < 8; ++i) out[static_cast<size_t>(g * 8 + i)] = static_cast<u8>(group[g] >> (8 * i));
  return out;
}

MetadataEntry MetadataEntry::from_bytes(std::span<const u8, 16> b) {
  MetadataEntry e;
  for (int g = 0; g < 2; ++g)
    for (int i = 0; i < 8; ++i)
      e.group[g] |= static_cast<u64>(b[static_cast<size_t>(g * 8 + i)]) << (8 * i);
  return e;
}

MetadataEntry encode_entry(Addr hb_pc, std::span<const Addr> cachelines) {
  if (cachelines.empty()) return {};
  if (cachelines.size() > kMaxEncodableLines)
    throw CodecError(CodecError::Code::region_overflow, cachelines[kMaxEncodableLines],
                     "more than 48 cachelines");

  const u64 upper = hb_pc >> 39;
  std::map<u64, std::pair<u8, Addr>> regions_map;  // region index -> (bitmap, first line)
  for (Addr line : cachelines) {
    if ((line & 63) != 0)
      throw CodecError(CodecError::Code::upper_bits_mismatch, line,
                       "cacheline address not 64-byte aligned");
    if ((line >> 39) != upper)
      throw CodecError(CodecError::Code::upper_bits_mismatch, line,
                       "cacheline upper bits differ from the HB pc");
    auto& slot = regions_map[line >> 9];
    if (slot.first == 0) slot.second = line;
    slot.first |= static_cast<u8>(1u << ((line >> 6) & 7));
  }
  if (regions_map.size() > kMaxRegions) {
    auto it = regions_map.begin();
    std::advance(it, kMaxRegions);
    throw CodecError(CodecError::Code::region_overflow, it->second.second,
                     "cachelines span more than 6 regions");
  }

  std::vector<Region> regions;
  std::vector<Addr> first_line;
  for (const auto& [idx, bm] : regions_map) {
    regions.push_back({idx, bm.first});
    first_line.push_back(bm.second);
  }

  // Canonical split: group1 takes the first m regions (m counted down from 3)
  // and group2 the rest; within a group the base is the first feasible member.
  const size_t k = regions.size();
  size_t m_hi = std::min<size_t>(3, k);
  size_t m_lo = k > 3 ? k - 3 : 0;
  for (size_t m = m_hi + 1; m-- > m_lo;) {
    std::vector<Region> g1(regions.begin(), regions.begin() + static_cast<std::ptrdiff_t>(m));
    std::vector<Region> g2(regions.begin() + static_cast<std::ptrdiff_t>(m), regions.end());
    i64 p1 = g1.empty() ? 0 : base_position(g1);
    i64 p2 = g2.empty() ? 0 : base_position(g2);
    if (p1 < 0 || p2 < 0) continue;
    MetadataEntry e;
    if (!g1.empty()) e.group[0] = pack_group(g1, static_cast<size_t>(p1));
    if (!g2.empty()) e.group[1] = pack_group(g2, static_cast<size_t>(p2));
    return e;
  }

  // No split fits: report a line from the most isolated region.
  size_t worst = 0;
  u64 worst_gap = 0;
  for (size_t i = 1; i < regions.size(); ++i) {
    u64 gap = regions[i].index - regions[i - 1].index;
    if (gap > worst_gap) {
      worst_gap = gap;
      worst = i;
    }
  }
  throw CodecError(CodecError::Code::delta_overflow, first_line[worst],
                   "regions farther apart than the delta range allows");
}

std::vector<Addr> decode_entry(const MetadataEntry& entry, Addr hb_pc) {
  std::vector<Addr> out;
  const u64 upper = (hb_pc >> 39) << 39;
  for (int g = 0; g < 2; ++g) {
    u64 word = entry.group[g];
    u64 base = word & kBaseMask;
    struct RegionView {
      u64 index;
      u8 bitmap;
    } views[3];
    views[0] = {base, static_cast<u8>((word >> 30) & 0xFF)};
    i64 d1 = static_cast<i64>((word >> 38) & 0x1F);
    if (d1 >= 16) d1 -= 32;
    views[1] = {(base + static_cast<u64>(d1)) & kBaseMask, static_cast<u8>((word >> 43) & 0xFF)};
    i64 d2 = static_cast<i64>((word >> 51) & 0x1F);
    if (d2 >= 16) d2 -= 32;
    views[2] = {(base + static_cast<u64>(d2)) & kBaseMask, static_cast<u8>((word >> 56) & 0xFF)};
    for (const auto& v : views) {
      if (v.bitmap == 0) continue;
      for (u32 bit = 0; bit < kLinesPerRegion; ++bit)
        if (v.bitmap & (1u << bit)) out.push_back(upper | (v.index << 9) | (static_cast<u64>(bit) << 6));
    }
  }
  return out;
}

EncodedWithDrops encode_dropping_earliest(Addr hb_pc, std::vector<Addr> lines) {
  EncodedWithDrops result;
  while (true) {
    try {
      result.entry = encode_entry(hb_pc, lines);
      return result;
    } catch (const CodecError&) {
      if (lines.empty()) throw;
      lines.erase(lines.begin());
      result.dropped++;
    }
  }
}

u64 mix64(u64 x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::pair<u64, u64> MetadataTable::buckets_for(u64 key) const {
  u64 mask = slots_.size() - 1;
  u64 b1 = mix64(key ^ seed_) & mask;
  u64 b2 = mix64(key ^ ~seed_) & mask;
  if (b2 == b1) b2 = (b1 + 1) & mask;
  return {b1, b2};
}

bool MetadataTable::try_insert_all(const std::map<Addr, MetadataEntry>& entries) {
  constexpr u32 kMaxDisplacements = 128;
  for (const auto& [key, entry] : entries) {
    u64 cur_key = key;
    MetadataEntry cur_entry = entry;
    auto [b1, b2] = buckets_for(cur_key);
    if (slots_[b1].key == 0) {
      slots_[b1] = {cur_key, cur_entry};
      continue;
    }
    if (slots_[b2].key == 0) {
      slots_[b2] = {cur_key, cur_entry};
      continue;
    }
    u64 at = b1;
    bool placed = false;
    for (u32 i = 0; i < kMaxDisplacements; ++i) {
      std::swap(cur_key, slots_[at].key);
      std::swap(cur_entry, slots_[at].entry);
      auto [n1, n2] = buckets_for(cur_key);
      u64 other = (at == n1) ? n2 : n1;
      if (slots_[other].key == 0) {
        slots_[other] = {cur_key, cur_entry};
        placed = true;
        break;
      }
      at = other;
    }
    if (!placed) return false;
  }
  return true;
}

MetadataTable MetadataTable::build(const std::map<Addr, MetadataEntry>& entries, HashConfig config) {
  for (const auto& [key, _] : entries)
    if (key == 0) throw Error(ErrorKind::data, "HB pc 0 cannot be a metadata key");

  MetadataTable t;
  t.seed_ = config.seed;
  u64 buckets = std::bit_ceil(std::max<u64>(8, entries.size() * 2));
  for (u32 attempt = 0;; ++attempt) {
    t.slots_.assign(buckets, {});
    if (t.try_insert_all(entries)) break;
    if (attempt >= 3)
      throw Error(ErrorKind::data, "metadata table insertion failed after 3 regrows");
    buckets *= 2;
    t.regrows_++;
  }
  t.occupancy_ = entries.size();
  return t;
}

const MetadataEntry* MetadataTable::lookup(Addr hb_pc) const {
  if (slots_.empty() || hb_pc == 0) return nullptr;
  auto [b1, b2] = buckets_for(hb_pc);
  if (slots_[b1].key == hb_pc) return &slots_[b1].entry;
  if (slots_[b2].key == hb_pc) return &slots_[b2].entry;
  return nullptr;
}

namespace {
constexpr char kMetaMagic[4] = {'D', 'R', 'H', 'B'};
constexpr u16 kMetaVersion = 1;

template <typename T>
void put_le(std::string& out, T v) {
  for (size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

template <typename T>
T get_le(const std::string& buf, u64& pos) {
  if (pos + sizeof(T) > buf.size())
    throw Error(ErrorKind::data, "truncated metadata file at byte offset " + std::to_string(pos), pos);
  T v = 0;
  for (size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<u8>(buf[pos + i])) << (8 * i);
  pos += sizeof(T);
  return v;
}
}  // namespace

void MetadataTable::save(const std::string& path) const {
  std::string out;
  out.reserve(22 + slots_.size() * 24);
  out.append(kMetaMagic, 4);
  put_le<u16>(out, kMetaVersion);
  put_le<u64>(out, slots_.size());
  put_le<u64>(out, seed_);
  for (const auto& s : slots_) {
    put_le<u64>(out, s.key);
    auto b = s.entry.bytes();
    out.append(reinterpret_cast<const char*>(b.data()), b.size());
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorKind::io, "cannot open for writing: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw Error(ErrorKind::io, "write failure: " + path);
}

MetadataTable MetadataTable::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::io, "cannot open metadata file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  std::string buf = ss.str();
  if (buf.size() < 4 || std::memcmp(buf.data(), kMetaMagic, 4) != 0)
    throw Error(ErrorKind::data, "bad metadata magic", 0);
  u64 pos = 4;
  u16 version = get_le<u16>(buf, pos);
  if (version != kMetaVersion)
    throw Error(ErrorKind::data, "unsupported metadata version " + std::to_string(version), 4);
  MetadataTable t;
  u64 buckets = get_le<u64>(buf, pos);
  if (buckets == 0 || !std::has_single_bit(buckets))
    throw Error(ErrorKind::data, "metadata bucket count must be a power of two");
  t.seed_ = get_le<u64>(buf, pos);
  t.slots_.resize(buckets);
  for (u64 i = 0; i < buckets; ++i) {
    t.slots_[i].key = get_le<u64>(buf, pos);
    if (pos + 16 > buf.size())
      throw Error(ErrorKind::data, "truncated metadata file at byte offset " + std::to_string(pos),
                  pos);
    std::array<u8, 16> b;
    std::memcpy(b.data(), buf.data() + pos, 16);
    pos += 16;
    t.slots_[i].entry = MetadataEntry::from_bytes(b);
    if (t.slots_[i].key != 0) t.occupancy_++;
  }
  if (pos != buf.size())
    throw Error(ErrorKind::data, "trailing bytes in metadata file at offset " + std::to_string(pos),
                pos);
  return t;
}

std::string MetadataTable::stats_json() const {
  nlohmann::json j;
  j["bucket_count"] = bucket_count();
  j["occupancy"] = occupancy();
  j["entry_bytes"] = entry_bytes();
  j["raw_entry_bytes"] = raw_entry_bytes();
  j["hash_seed"] = seed_;
  j["regrows"] = regrows_;
  return j.dump(2);
}

}  // namespace deer
