#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pehl/header_extract.hpp"
#include "json.hpp"

namespace pehl {

enum class FeatureKind { numeric, categorical, flag };

std::string_view to_string(FeatureKind kind);

/// Half-open byte range inside the 328-byte region. Empty when the field does
/// not exist in that layout (BaseOfData in PE32+).
struct ByteSpan {
  std::uint16_t lo = 0;
  std::uint16_t hi = 0;

  bool empty() const { return lo == hi; }
  bool contains(std::size_t pos) const { return pos >= lo && pos < hi; }
  bool operator==(const ByteSpan&) const = default;
};

struct FeatureEntry {
  std::string name;
  FeatureKind kind;
  ByteSpan span32;
  ByteSpan span64;
  std::uint8_t bit_mask = 0;  // flag entries only; mask within the single byte
};

inline constexpr std::size_t kFeatureCount = 115;
inline constexpr std::size_t kNumericFeatureCount = 112;
inline constexpr std::size_t kCategoricalFeatureCount = 3;

// Region offset where the Optional header starts: 64 DOS + 4 signature + 20 COFF.
inline constexpr std::size_t kOptionalHeaderOffset = 88;

inline constexpr std::uint16_t kMagicPe32 = 0x10B;
inline constexpr std::uint16_t kMagicPe32Plus = 0x20B;

// Category code reserved for raw values outside a categorical vocabulary.
inline constexpr std::uint16_t kUnknownCategory = 0;

const std::vector<FeatureEntry>& feature_schema();

// Index of a schema entry by name, if present.
std::optional<std::size_t> find_feature(std::string_view name);

/// Raw values recognised for one of the three categorical fields, in code
/// order; code k+1 corresponds to values()[k].
struct CategoricalVocabulary {
  std::string_view field;
  std::vector<std::uint16_t> values;
  std::uint16_t encode(std::uint64_t raw) const;
};

const std::array<CategoricalVocabulary, kCategoricalFeatureCount>& categorical_vocabularies();

struct FeatureVector {
  std::array<double, kNumericFeatureCount> numeric{};
  std::array<std::uint16_t, kCategoricalFeatureCount> categorical{};  // Machine, Magic, Subsystem
  bool is_64bit = false;

  // All 115 values in schema order, categorical codes as doubles.
  std::vector<double> as_row() const;
};

FeatureVector parse_features(const HeaderRegion& region);

// Raw unsigned little-endian value of a schema field as laid out for the
// given bitness (flags yield 0 or 1).
std::uint64_t read_field(const HeaderRegion& region, const FeatureEntry& entry, bool is_64bit);

// Names of the schema entries whose span covers a region offset, in schema order.
std::vector<std::string> fields_covering(std::size_t pos, bool is_64bit);

nlohmann::json schema_to_json();

// CRC-32 of the compact schema JSON, hex; stamped into model artifacts.
std::string schema_hash();

}  // namespace pehl
