#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pehl/header_extract.hpp"
#include "pehl/manifest.hpp"

namespace pehl {

/// Conjunction of equality tests on schema fields (flags compare against 0/1).
struct PlantedRule {
  struct Condition {
    std::string field;
    std::uint64_t value = 0;
    bool operator==(const Condition&) const = default;
  };
  std::vector<Condition> conditions;

  // Subsystem == 3 (console) AND IMAGE_FILE_DLL set.
  static PlantedRule default_rule();
  // "Field=value,Field=value"; values decimal or 0x-prefixed hex.
  static PlantedRule parse(const std::string& spec);
  std::string to_string() const;

  bool holds(const HeaderRegion& region) const;
};

struct CorpusOptions {
  std::size_t n = 2000;
  double noise = 0.05;  // label flip probability, in [0, 0.5)
  std::uint64_t seed = 0;
  double train_fraction = 0.7;
  std::size_t calibrate = 0;  // taken from the non-train share
  double pe32plus_fraction = 0.3;
  PlantedRule rule = PlantedRule::default_rule();
};

struct SyntheticSample {
  std::vector<std::uint8_t> bytes;
  int clean_label = 0;  // the rule's verdict
  int label = 0;        // after noise
  Split split = Split::train;
};

/// Balanced PE-shaped files: half satisfy the rule, half violate at least one
/// of its conditions; all other header fields are drawn from realistic ranges.
std::vector<SyntheticSample> generate_synthetic_corpus(const CorpusOptions& options);

// Writes sample_NNNNN.bin files and manifest.csv (relative paths) into dir.
DatasetManifest write_corpus(const std::vector<SyntheticSample>& corpus,
                             const std::filesystem::path& dir);

}  // namespace pehl
