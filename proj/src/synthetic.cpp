#include "pehl/synthetic.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "pehl/error.hpp"
#include "pehl/header_features.hpp"
#include "pehl/rng.hpp"

namespace pehl {

namespace {

const FeatureEntry& entry_named(const std::string& name) {
  const auto idx = find_feature(name);
  if (!idx) throw DataError("unknown schema field '" + name + "'");
  return feature_schema()[*idx];
}

std::uint64_t parse_number(const std::string& s) {
  std::size_t used = 0;
  std::uint64_t v = 0;
  try {
    v = std::stoull(s, &used, 0);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw DataError("bad rule value '" + s + "'");
  return v;
}

template <class T>
const T& pick(Rng& rng, const std::vector<T>& pool) {
  return pool[uniform_index(rng, pool.size())];
}

double unit(Rng& rng) { return uniform01(rng); }

std::uint64_t range(Rng& rng, std::uint64_t lo, std::uint64_t hi) {  // inclusive
  return lo + uniform_index(rng, hi - lo + 1);
}

// Writes and reads header fields of a file under construction by schema name,
// translating region offsets into file offsets.
class PeWriter {
 public:
  PeWriter(std::vector<std::uint8_t>& buf, std::uint32_t pe, bool is64)
      : buf_(buf), pe_(pe), is64_(is64) {}

  std::size_t file_offset(std::size_t region_pos) const {
    return region_pos < kDosHeaderSize ? region_pos : pe_ + (region_pos - kDosHeaderSize);
  }

  void put(const FeatureEntry& e, std::uint64_t value) {
    const ByteSpan s = is64_ ? e.span64 : e.span32;
    if (s.empty()) return;
    if (e.kind == FeatureKind::flag) {
      auto& b = buf_[file_offset(s.lo)];
      b = static_cast<std::uint8_t>(value ? (b | e.bit_mask) : (b & ~e.bit_mask));
      return;
    }
    for (std::size_t k = 0; k < static_cast<std::size_t>(s.hi - s.lo); ++k) {
      buf_[file_offset(s.lo + k)] = static_cast<std::uint8_t>(value >> (8 * k));
    }
  }
  void put(const std::string& name, std::uint64_t value) { put(entry_named(name), value); }

 private:
  std::vector<std::uint8_t>& buf_;
  std::uint32_t pe_;
  bool is64_;
};

const std::uint8_t kDosStub[] = {
    0x0e, 0x1f, 0xba, 0x0e, 0x00, 0xb4, 0x09, 0xcd, 0x21, 0xb8, 0x01, 0x4c, 0xcd, 0x21,
    'T',  'h',  'i',  's',  ' ',  'p',  'r',  'o',  'g',  'r',  'a',  'm',  ' ',  'c',
    'a',  'n',  'n',  'o',  't',  ' ',  'b',  'e',  ' ',  'r',  'u',  'n',  ' ',  'i',
    'n',  ' ',  'D',  'O',  'S',  ' ',  'm',  'o',  'd',  'e',  '.',  0x0d, 0x0d, 0x0a,
    '$',  0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00};

// Fills a plausible executable; the rule fields are set afterwards.
std::vector<std::uint8_t> build_file(Rng& rng, bool is64, bool dll, std::uint16_t subsystem) {
  static const std::vector<std::uint32_t> kPeOffsets = {0x80, 0xc8, 0xd0, 0xd8, 0xe0, 0xe8,
                                                        0xf0, 0xf8, 0x100, 0x108, 0x110, 0x118};
  const std::uint32_t pe = pick(rng, kPeOffsets);
  const std::uint32_t opt_size = is64 ? 0xf0 : 0xe0;
  const auto sections = static_cast<std::uint32_t>(range(rng, 3, 8));
  const std::size_t headers_end = pe + 24 + opt_size + 40 * sections;
  const std::size_t size = std::max<std::size_t>(0x400, headers_end) + 0x200 * range(rng, 1, 4);
  std::vector<std::uint8_t> buf(size, 0);

  // Stub and a rich-header-like blob between the DOS header and the PE header.
  std::copy(std::begin(kDosStub), std::end(kDosStub), buf.begin() + 64);
  for (std::size_t k = 64 + sizeof kDosStub; k < pe; ++k) {
    buf[k] = static_cast<std::uint8_t>(rng());
  }
  // Section bodies: random bytes after the headers.
  for (std::size_t k = 0x400; k < size; ++k) buf[k] = static_cast<std::uint8_t>(rng());

  PeWriter w(buf, pe, is64);
  w.put("e_magic", 0x5a4d);
  // Loader fields the PE loader ignores are randomized; a fixed real-world
  // DOS header would put constant byte pairs such as 00 03 into every file.
  for (const char* f : {"e_cblp", "e_cp", "e_crlc", "e_cparhdr", "e_minalloc", "e_maxalloc", "e_ss",
                        "e_sp", "e_csum", "e_ip", "e_cs", "e_lfarlc", "e_ovno"}) {
    w.put(f, range(rng, 0, 0xffff));
  }
  w.put("e_lfanew", pe);
  buf[pe] = 'P';
  buf[pe + 1] = 'E';

  w.put("Machine", is64 ? 0x8664 : 0x14c);
  w.put("NumberOfSections", sections);
  w.put("TimeDateStamp", range(rng, 0x40000000, 0x60000000));
  w.put("SizeOfOptionalHeader", opt_size);
  w.put("IMAGE_FILE_EXECUTABLE_IMAGE", 1);
  w.put("IMAGE_FILE_32BIT_MACHINE", is64 ? 0 : 1);
  w.put("IMAGE_FILE_LARGE_ADDRESS_AWARE", is64 || unit(rng) < 0.3);
  w.put("IMAGE_FILE_RELOCS_STRIPPED", !dll && unit(rng) < 0.4);
  w.put("IMAGE_FILE_DEBUG_STRIPPED", unit(rng) < 0.2);
  w.put("IMAGE_FILE_LINE_NUMS_STRIPPED", unit(rng) < 0.3);
  w.put("IMAGE_FILE_LOCAL_SYMS_STRIPPED", unit(rng) < 0.3);
  w.put("IMAGE_FILE_DLL", dll);

  w.put("Magic", is64 ? kMagicPe32Plus : kMagicPe32);
  w.put("MajorLinkerVersion", range(rng, 6, 14));
  w.put("MinorLinkerVersion", range(rng, 0, 40));
  w.put("SizeOfCode", 0x200 * range(rng, 1, 0x400));
  w.put("SizeOfInitializedData", 0x200 * range(rng, 1, 0x400));
  w.put("SizeOfUninitializedData", unit(rng) < 0.7 ? 0 : 0x200 * range(rng, 1, 0x40));
  w.put("AddressOfEntryPoint", 0x1000 + range(rng, 0, 0x80000));
  w.put("BaseOfCode", 0x1000);
  w.put("BaseOfData", 0x1000 * range(rng, 2, 0x100));
  w.put("ImageBase", is64 ? (dll ? 0x180000000ULL : 0x140000000ULL) : (dll ? 0x10000000 : 0x400000));
  w.put("SectionAlignment", 0x1000);
  w.put("FileAlignment", 0x200);
  w.put("MajorOperatingSystemVersion", range(rng, 4, 6));
  w.put("MinorOperatingSystemVersion", range(rng, 0, 2) == 2 ? 1 : 0);
  w.put("MajorImageVersion", unit(rng) < 0.7 ? 0 : range(rng, 1, 10));
  w.put("MinorImageVersion", unit(rng) < 0.8 ? 0 : range(rng, 1, 20));
  w.put("MajorSubsystemVersion", range(rng, 4, 6));
  w.put("MinorSubsystemVersion", range(rng, 0, 2) == 2 ? 1 : 0);
  w.put("SizeOfImage", 0x1000 * range(rng, 8, 0x800));
  w.put("SizeOfHeaders", 0x400);
  w.put("CheckSum", unit(rng) < 0.6 ? 0 : range(rng, 0x1000, 0xffffff));
  w.put("Subsystem", subsystem);
  w.put("IMAGE_DLLCHARACTERISTICS_DYNAMIC_BASE", unit(rng) < 0.6);
  w.put("IMAGE_DLLCHARACTERISTICS_NX_COMPAT", unit(rng) < 0.6);
  w.put("IMAGE_DLLCHARACTERISTICS_HIGH_ENTROPY_VA", is64 && unit(rng) < 0.5);
  w.put("IMAGE_DLLCHARACTERISTICS_NO_SEH", unit(rng) < 0.15);
  w.put("IMAGE_DLLCHARACTERISTICS_TERMINAL_SERVER_AWARE", !dll && unit(rng) < 0.5);
  w.put("IMAGE_DLLCHARACTERISTICS_GUARD_CF", unit(rng) < 0.2);
  w.put("SizeOfStackReserve", 0x100000);
  w.put("SizeOfStackCommit", 0x1000);
  w.put("SizeOfHeapReserve", 0x100000);
  w.put("SizeOfHeapCommit", 0x1000);
  w.put("NumberOfRvaAndSizes", 16);

  // Data directories: each present with a directory-specific probability.
  static const char* kDirs[] = {"Export", "Import", "Resource", "Exception", "Certificate",
                                "BaseRelocation", "Debug", "TLS", "LoadConfig", "IAT",
                                "DelayImport", "CLRRuntimeHeader"};
  static const double kPresence[] = {0.3, 0.95, 0.8, 0.3, 0.2, 0.6, 0.6, 0.15, 0.5, 0.9, 0.2, 0.05};
  for (std::size_t d = 0; d < std::size(kDirs); ++d) {
    if (unit(rng) >= kPresence[d]) continue;
    const std::string base = std::string("DataDirectory.") + kDirs[d];
    w.put(base + ".VirtualAddress", 0x1000 * range(rng, 1, 0x400));
    w.put(base + ".Size", 8 * range(rng, 1, 0x400));
  }

  // Section table names so the bytes after the Optional header look familiar.
  static const char* kNames[] = {".text", ".rdata", ".data", ".rsrc", ".reloc", ".pdata", ".idata", ".tls"};
  const std::size_t table = pe + 24 + opt_size;
  for (std::uint32_t k = 0; k < sections; ++k) {
    const char* name = kNames[k];
    for (std::size_t c = 0; name[c] != '\0'; ++c) buf[table + 40 * k + c] = static_cast<std::uint8_t>(name[c]);
  }
  return buf;
}

// Realistic raw values for a field, used both for the background
// distribution and to violate a condition.
std::uint64_t alternative_value(Rng& rng, const FeatureEntry& e, std::uint64_t avoid) {
  if (e.kind == FeatureKind::flag) return avoid ? 0 : 1;
  if (e.name == "Subsystem") {
    static const std::vector<std::uint64_t> pool = {1, 2, 2, 2, 2, 3, 3, 3, 3, 9, 10};
    std::uint64_t v;
    do v = pick(rng, pool); while (v == avoid);
    return v;
  }
  const std::size_t width = static_cast<std::size_t>(e.span32.hi - e.span32.lo);
  const std::uint64_t mask = width >= 8 ? ~0ULL : ((1ULL << (8 * width)) - 1);
  std::uint64_t v;
  do v = rng() & mask; while (v == avoid);
  return v;
}

}  // namespace

PlantedRule PlantedRule::default_rule() {
  return PlantedRule{{{"Subsystem", 3}, {"IMAGE_FILE_DLL", 1}}};
}

PlantedRule PlantedRule::parse(const std::string& spec) {
  PlantedRule rule;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw DataError("rule condition '" + item + "' lacks '='");
    Condition c{item.substr(0, eq), parse_number(item.substr(eq + 1))};
    const FeatureEntry& e = entry_named(c.field);
    if (e.kind == FeatureKind::flag && c.value > 1) {
      throw DataError("flag condition on " + c.field + " must compare with 0 or 1");
    }
    rule.conditions.push_back(std::move(c));
  }
  if (rule.conditions.empty()) throw DataError("empty rule");
  return rule;
}

std::string PlantedRule::to_string() const {
  std::string s;
  for (const auto& c : conditions) {
    if (!s.empty()) s += ',';
    s += c.field + "=" + std::to_string(c.value);
  }
  return s;
}

bool PlantedRule::holds(const HeaderRegion& region) const {
  const bool is64 = parse_features(region).is_64bit;
  return std::all_of(conditions.begin(), conditions.end(), [&](const Condition& c) {
    return read_field(region, entry_named(c.field), is64) == c.value;
  });
}

std::vector<SyntheticSample> generate_synthetic_corpus(const CorpusOptions& options) {
  if (!(options.noise >= 0.0 && options.noise < 0.5)) throw DataError("noise must lie in [0, 0.5)");
  if (options.n < 2) throw DataError("corpus needs at least 2 files");
  if (!(options.train_fraction > 0.0 && options.train_fraction < 1.0)) {
    throw DataError("train fraction must lie in (0, 1)");
  }
  if (options.rule.conditions.empty()) throw DataError("empty rule");
  Rng rng(derive_seed(options.seed, 0x636f72707573));

  std::vector<int> clean(options.n);
  for (std::size_t i = 0; i < options.n; ++i) clean[i] = i < options.n / 2 ? 1 : 0;
  for (std::size_t i = options.n; i > 1; --i) std::swap(clean[i - 1], clean[uniform_index(rng, i)]);

  std::vector<SyntheticSample> out(options.n);
  for (std::size_t i = 0; i < options.n; ++i) {
    const bool is64 = unit(rng) < options.pe32plus_fraction;
    const bool dll = unit(rng) < 0.5;
    const auto subsystem = static_cast<std::uint16_t>(alternative_value(rng, entry_named("Subsystem"), 0));
    std::vector<std::uint8_t> buf = build_file(rng, is64, dll, subsystem);
    const std::uint32_t pe = buf[60] | (buf[61] << 8) | (buf[62] << 16) | (static_cast<std::uint32_t>(buf[63]) << 24);
    PeWriter w(buf, pe, is64);

    std::vector<bool> satisfy(options.rule.conditions.size(), true);
    if (clean[i] == 0) {
      bool broken = false;
      while (!broken) {
        for (std::size_t c = 0; c < satisfy.size(); ++c) {
          satisfy[c] = unit(rng) < 0.5;
          broken = broken || !satisfy[c];
        }
      }
    }
    for (std::size_t c = 0; c < satisfy.size(); ++c) {
      const auto& cond = options.rule.conditions[c];
      const FeatureEntry& e = entry_named(cond.field);
      w.put(e, satisfy[c] ? cond.value : alternative_value(rng, e, cond.value));
    }
    out[i].bytes = std::move(buf);
    out[i].clean_label = clean[i];
    out[i].label = unit(rng) < options.noise ? 1 - clean[i] : clean[i];
  }

  const auto n_train = static_cast<std::size_t>(static_cast<double>(options.n) * options.train_fraction + 0.5);
  if (n_train + options.calibrate >= options.n) throw DataError("no files left for the test split");
  for (std::size_t i = 0; i < options.n; ++i) {
    out[i].split = i < n_train ? Split::train
                   : i < n_train + options.calibrate ? Split::calibrate
                                                      : Split::test;
  }
  return out;
}

DatasetManifest write_corpus(const std::vector<SyntheticSample>& corpus,
                             const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  DatasetManifest m;
  m.base_dir = dir;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "sample_%05zu.bin", i);
    std::ofstream f(dir / name, std::ios::binary);
    f.write(reinterpret_cast<const char*>(corpus[i].bytes.data()),
            static_cast<std::streamsize>(corpus[i].bytes.size()));
    if (!f) throw DataError("cannot write " + (dir / name).string());
    m.entries.push_back({name, corpus[i].label, corpus[i].split});
  }
  save_manifest(m, dir / "manifest.csv");
  return m;
}

}  // namespace pehl
