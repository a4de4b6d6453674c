#include "pehl/header_features.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstdio>
#include <stdexcept>

namespace pehl {

namespace {

constexpr std::uint16_t kCoffOffset = 68;
constexpr std::uint16_t kOpt = static_cast<std::uint16_t>(kOptionalHeaderOffset);
constexpr std::uint16_t kDirBase32 = kOpt + 96;
constexpr std::uint16_t kDirBase64 = kOpt + 112;

ByteSpan span(std::uint16_t lo, std::uint16_t len) {
  return ByteSpan{lo, static_cast<std::uint16_t>(lo + len)};
}

void add(std::vector<FeatureEntry>& out, std::string name, FeatureKind kind, ByteSpan s32,
         ByteSpan s64) {
  out.push_back(FeatureEntry{std::move(name), kind, s32, s64, 0});
}

void add_same(std::vector<FeatureEntry>& out, std::string name, FeatureKind kind, ByteSpan s) {
  add(out, std::move(name), kind, s, s);
}

// One flag entry per bit of a little-endian 16-bit field at `field_lo`.
void add_flags(std::vector<FeatureEntry>& out, std::uint16_t field_lo,
               std::initializer_list<std::pair<const char*, std::uint16_t>> bits) {
  for (const auto& [name, value] : bits) {
    const bool high = value > 0xFF;
    const auto byte = static_cast<std::uint16_t>(field_lo + (high ? 1 : 0));
    const auto mask = static_cast<std::uint8_t>(high ? value >> 8 : value);
    out.push_back(FeatureEntry{name, FeatureKind::flag, span(byte, 1), span(byte, 1), mask});
  }
}

std::vector<FeatureEntry> build_schema() {
  std::vector<FeatureEntry> s;
  s.reserve(kFeatureCount);
  using K = FeatureKind;

  // MS-DOS header. Of the ten e_res2 words only the first is kept.
  const std::pair<const char*, std::uint16_t> dos[] = {
      {"e_magic", 0},    {"e_cblp", 2},     {"e_cp", 4},       {"e_crlc", 6},
      {"e_cparhdr", 8},  {"e_minalloc", 10}, {"e_maxalloc", 12}, {"e_ss", 14},
      {"e_sp", 16},      {"e_csum", 18},    {"e_ip", 20},      {"e_cs", 22},
      {"e_lfarlc", 24},  {"e_ovno", 26},    {"e_res_0", 28},   {"e_res_1", 30},
      {"e_res_2", 32},   {"e_res_3", 34},   {"e_oemid", 36},   {"e_oeminfo", 38},
      {"e_res2_0", 40}};
  for (const auto& [name, lo] : dos) add_same(s, name, K::numeric, span(lo, 2));
  add_same(s, "e_lfanew", K::numeric, span(60, 4));

  // COFF file header.
  add_same(s, "Machine", K::categorical, span(kCoffOffset, 2));
  add_same(s, "NumberOfSections", K::numeric, span(kCoffOffset + 2, 2));
  add_same(s, "TimeDateStamp", K::numeric, span(kCoffOffset + 4, 4));
  add_same(s, "PointerToSymbolTable", K::numeric, span(kCoffOffset + 8, 4));
  add_same(s, "NumberOfSymbols", K::numeric, span(kCoffOffset + 12, 4));
  add_same(s, "SizeOfOptionalHeader", K::numeric, span(kCoffOffset + 16, 2));
  add_flags(s, kCoffOffset + 18,
            {{"IMAGE_FILE_RELOCS_STRIPPED", 0x0001},
             {"IMAGE_FILE_EXECUTABLE_IMAGE", 0x0002},
             {"IMAGE_FILE_LINE_NUMS_STRIPPED", 0x0004},
             {"IMAGE_FILE_LOCAL_SYMS_STRIPPED", 0x0008},
             {"IMAGE_FILE_AGGRESSIVE_WS_TRIM", 0x0010},
             {"IMAGE_FILE_LARGE_ADDRESS_AWARE", 0x0020},
             {"IMAGE_FILE_RESERVED_0040", 0x0040},
             {"IMAGE_FILE_BYTES_REVERSED_LO", 0x0080},
             {"IMAGE_FILE_32BIT_MACHINE", 0x0100},
             {"IMAGE_FILE_DEBUG_STRIPPED", 0x0200},
             {"IMAGE_FILE_REMOVABLE_RUN_FROM_SWAP", 0x0400},
             {"IMAGE_FILE_NET_RUN_FROM_SWAP", 0x0800},
             {"IMAGE_FILE_SYSTEM", 0x1000},
             {"IMAGE_FILE_DLL", 0x2000},
             {"IMAGE_FILE_UP_SYSTEM_ONLY", 0x4000},
             {"IMAGE_FILE_BYTES_REVERSED_HI", 0x8000}});

  // Optional header, standard fields.
  add_same(s, "Magic", K::categorical, span(kOpt, 2));
  add_same(s, "MajorLinkerVersion", K::numeric, span(kOpt + 2, 1));
  add_same(s, "MinorLinkerVersion", K::numeric, span(kOpt + 3, 1));
  add_same(s, "SizeOfCode", K::numeric, span(kOpt + 4, 4));
  add_same(s, "SizeOfInitializedData", K::numeric, span(kOpt + 8, 4));
  add_same(s, "SizeOfUninitializedData", K::numeric, span(kOpt + 12, 4));
  add_same(s, "AddressOfEntryPoint", K::numeric, span(kOpt + 16, 4));
  add_same(s, "BaseOfCode", K::numeric, span(kOpt + 20, 4));
  add(s, "BaseOfData", K::numeric, span(kOpt + 24, 4), ByteSpan{});

  // Optional header, Windows-specific fields.
  add(s, "ImageBase", K::numeric, span(kOpt + 28, 4), span(kOpt + 24, 8));
  add_same(s, "SectionAlignment", K::numeric, span(kOpt + 32, 4));
  add_same(s, "FileAlignment", K::numeric, span(kOpt + 36, 4));
  add_same(s, "MajorOperatingSystemVersion", K::numeric, span(kOpt + 40, 2));
  add_same(s, "MinorOperatingSystemVersion", K::numeric, span(kOpt + 42, 2));
  add_same(s, "MajorImageVersion", K::numeric, span(kOpt + 44, 2));
  add_same(s, "MinorImageVersion", K::numeric, span(kOpt + 46, 2));
  add_same(s, "MajorSubsystemVersion", K::numeric, span(kOpt + 48, 2));
  add_same(s, "MinorSubsystemVersion", K::numeric, span(kOpt + 50, 2));
  add_same(s, "SizeOfImage", K::numeric, span(kOpt + 56, 4));
  add_same(s, "SizeOfHeaders", K::numeric, span(kOpt + 60, 4));
  add_same(s, "CheckSum", K::numeric, span(kOpt + 64, 4));
  add_same(s, "Subsystem", K::categorical, span(kOpt + 68, 2));
  add_flags(s, kOpt + 70,
            {{"IMAGE_DLLCHARACTERISTICS_HIGH_ENTROPY_VA", 0x0020},
             {"IMAGE_DLLCHARACTERISTICS_DYNAMIC_BASE", 0x0040},
             {"IMAGE_DLLCHARACTERISTICS_FORCE_INTEGRITY", 0x0080},
             {"IMAGE_DLLCHARACTERISTICS_NX_COMPAT", 0x0100},
             {"IMAGE_DLLCHARACTERISTICS_NO_ISOLATION", 0x0200},
             {"IMAGE_DLLCHARACTERISTICS_NO_SEH", 0x0400},
             {"IMAGE_DLLCHARACTERISTICS_NO_BIND", 0x0800},
             {"IMAGE_DLLCHARACTERISTICS_APPCONTAINER", 0x1000},
             {"IMAGE_DLLCHARACTERISTICS_WDM_DRIVER", 0x2000},
             {"IMAGE_DLLCHARACTERISTICS_GUARD_CF", 0x4000},
             {"IMAGE_DLLCHARACTERISTICS_TERMINAL_SERVER_AWARE", 0x8000}});
  add(s, "SizeOfStackReserve", K::numeric, span(kOpt + 72, 4), span(kOpt + 72, 8));
  add(s, "SizeOfStackCommit", K::numeric, span(kOpt + 76, 4), span(kOpt + 80, 8));
  add(s, "SizeOfHeapReserve", K::numeric, span(kOpt + 80, 4), span(kOpt + 88, 8));
  add(s, "SizeOfHeapCommit", K::numeric, span(kOpt + 84, 4), span(kOpt + 96, 8));
  add(s, "LoaderFlags", K::numeric, span(kOpt + 88, 4), span(kOpt + 104, 4));
  add(s, "NumberOfRvaAndSizes", K::numeric, span(kOpt + 92, 4), span(kOpt + 108, 4));

  static constexpr const char* kDirectories[16] = {
      "Export",      "Import",      "Resource",     "Exception",
      "Certificate", "BaseRelocation", "Debug",     "Architecture",
      "GlobalPtr",   "TLS",         "LoadConfig",   "BoundImport",
      "IAT",         "DelayImport", "CLRRuntimeHeader", "Reserved"};
  for (std::uint16_t d = 0; d < 16; ++d) {
    const std::string base = std::string("DataDirectory.") + kDirectories[d];
    const auto lo32 = static_cast<std::uint16_t>(kDirBase32 + 8 * d);
    const auto lo64 = static_cast<std::uint16_t>(kDirBase64 + 8 * d);
    add(s, base + ".VirtualAddress", K::numeric, span(lo32, 4), span(lo64, 4));
    add(s, base + ".Size", K::numeric, span(lo32 + 4, 4), span(lo64 + 4, 4));
  }

  if (s.size() != kFeatureCount) {
    throw std::logic_error("feature schema must have 115 entries");
  }
  return s;
}

std::uint64_t read_le(const HeaderRegion& region, ByteSpan s) {
  std::uint64_t v = 0;
  for (std::size_t i = s.hi; i > s.lo; --i) {
    v = (v << 8) | region.bytes[i - 1];
  }
  return v;
}

}  // namespace

std::string_view to_string(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::numeric:
      return "numeric";
    case FeatureKind::categorical:
      return "categorical";
    case FeatureKind::flag:
      return "flag";
  }
  return "unknown";
}

const std::vector<FeatureEntry>& feature_schema() {
  static const std::vector<FeatureEntry> schema = build_schema();
  return schema;
}

std::optional<std::size_t> find_feature(std::string_view name) {
  const auto& schema = feature_schema();
  for (std::size_t i = 0; i < schema.size(); ++i) {
    if (schema[i].name == name) return i;
  }
  return std::nullopt;
}

std::uint16_t CategoricalVocabulary::encode(std::uint64_t raw) const {
  const auto it = std::find(values.begin(), values.end(), raw);
  if (it == values.end()) return kUnknownCategory;
  return static_cast<std::uint16_t>(it - values.begin() + 1);
}

const std::array<CategoricalVocabulary, kCategoricalFeatureCount>& categorical_vocabularies() {
  static const std::array<CategoricalVocabulary, kCategoricalFeatureCount> vocab = {
      CategoricalVocabulary{"Machine",
                            {0x014C, 0x8664, 0x01C0, 0x01C2, 0x01C4, 0xAA64, 0x0200, 0x0166,
                             0x0169, 0x01A2, 0x01A6, 0x01F0, 0x0EBC}},
      CategoricalVocabulary{"Magic", {kMagicPe32, kMagicPe32Plus}},
      CategoricalVocabulary{"Subsystem", {1, 2, 3, 5, 7, 8, 9, 10, 11, 12, 13, 14, 16}},
  };
  return vocab;
}

std::uint64_t read_field(const HeaderRegion& region, const FeatureEntry& entry, bool is_64bit) {
  const ByteSpan s = is_64bit ? entry.span64 : entry.span32;
  if (s.empty()) return 0;
  if (entry.kind == FeatureKind::flag) {
    return (region.bytes[s.lo] & entry.bit_mask) != 0 ? 1 : 0;
  }
  return read_le(region, s);
}

std::vector<double> FeatureVector::as_row() const {
  std::vector<double> row;
  row.reserve(kFeatureCount);
  std::size_t n = 0;
  std::size_t c = 0;
  for (const auto& entry : feature_schema()) {
    if (entry.kind == FeatureKind::categorical) {
      row.push_back(static_cast<double>(categorical[c++]));
    } else {
      row.push_back(numeric[n++]);
    }
  }
  return row;
}

FeatureVector parse_features(const HeaderRegion& region) {
  FeatureVector fv;
  const auto magic = static_cast<std::uint16_t>(region.bytes[kOptionalHeaderOffset] |
                                                region.bytes[kOptionalHeaderOffset + 1] << 8);
  fv.is_64bit = magic == kMagicPe32Plus;

  const auto& vocab = categorical_vocabularies();
  std::size_t n = 0;
  std::size_t c = 0;
  for (const auto& entry : feature_schema()) {
    const std::uint64_t raw = read_field(region, entry, fv.is_64bit);
    if (entry.kind == FeatureKind::categorical) {
      fv.categorical[c] = vocab[c].encode(raw);
      ++c;
    } else {
      fv.numeric[n++] = static_cast<double>(raw);
    }
  }
  return fv;
}

std::vector<std::string> fields_covering(std::size_t pos, bool is_64bit) {
  std::vector<std::string> out;
  for (const auto& e : feature_schema()) {
    if ((is_64bit ? e.span64 : e.span32).contains(pos)) out.push_back(e.name);
  }
  return out;
}

nlohmann::json schema_to_json() {
  auto span_json = [](ByteSpan s) {
    return s.empty() ? nlohmann::json(nullptr) : nlohmann::json::array({s.lo, s.hi});
  };
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : feature_schema()) {
    nlohmann::json j;
    j["name"] = e.name;
    j["kind"] = std::string(to_string(e.kind));
    j["span32"] = span_json(e.span32);
    j["span64"] = span_json(e.span64);
    j["mask"] = e.kind == FeatureKind::flag ? nlohmann::json(e.bit_mask) : nlohmann::json(nullptr);
    entries.push_back(std::move(j));
  }
  nlohmann::json cats = nlohmann::json::object();
  for (const auto& v : categorical_vocabularies()) {
    cats[std::string(v.field)] = v.values;
  }
  return nlohmann::json{{"features", std::move(entries)},
                        {"categorical_vocabularies", std::move(cats)},
                        {"unknown_category_code", kUnknownCategory}};
}

std::string schema_hash() {
  const std::string text = schema_to_json().dump();
  const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(text.data()),
                         static_cast<uInt>(text.size()));
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08lx", static_cast<unsigned long>(crc));
  return buf;
}

}  // namespace pehl
