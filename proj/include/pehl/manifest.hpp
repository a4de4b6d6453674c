#pragma once

#include <filesystem>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace pehl {

enum class Split { train, test, calibrate };

std::string_view to_string(Split split);
Split split_from_string(std::string_view s);  // throws DataError

struct ManifestEntry {
  std::string path;  // as written; relative paths resolve against base_dir
  int label = 0;     // 0 benign, 1 malicious
  Split split = Split::train;

  bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::filesystem::path base_dir;

  std::vector<std::size_t> indices(Split split) const;
  std::filesystem::path resolve(const ManifestEntry& entry) const;

  // Normalized CSV: header `path,label,split`, LF line endings, fields quoted
  // only when they contain a comma, quote or line break.
  void write_csv(std::ostream& out) const;
};

/// Parses the CSV form. Errors name the 1-based line: unknown split, label
/// other than 0/1, wrong field count, duplicate path, bad header.
DatasetManifest parse_manifest(std::istream& in, const std::string& source = "manifest");
DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

}  // namespace pehl
