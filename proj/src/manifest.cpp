#include "pehl/manifest.hpp"

#include <fstream>
#include <unordered_set>

#include "pehl/error.hpp"

namespace pehl {

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::test: return "test";
    case Split::calibrate: return "calibrate";
  }
  return "train";
}

Split split_from_string(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  if (s == "calibrate") return Split::calibrate;
  throw DataError("unknown split '" + std::string(s) + "'");
}

std::vector<std::size_t> DatasetManifest::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].split == split) out.push_back(i);
  }
  return out;
}

std::filesystem::path DatasetManifest::resolve(const ManifestEntry& entry) const {
  const std::filesystem::path p(entry.path);
  return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
}

namespace {

// One CSV record; quoted fields may span lines. Returns false at end of input.
bool read_record(std::istream& in, std::vector<std::string>& fields, std::size_t& line,
                 const std::string& source) {
  fields.clear();
  std::string field;
  bool quoted = false;
  bool any = false;
  char c;
  const std::size_t start_line = line + 1;
  while (in.get(c)) {
    any = true;
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get();
          field += '"';
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    if (c == '"' && field.empty()) {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      ++line;
      if (!field.empty() && field.back() == '\r') field.pop_back();
      fields.push_back(std::move(field));
      return true;
    } else {
      field += c;
    }
  }
  if (quoted) {
    throw DataError(source + " line " + std::to_string(start_line) + ": unterminated quote");
  }
  if (!any) return false;
  ++line;
  if (!field.empty() && field.back() == '\r') field.pop_back();
  fields.push_back(std::move(field));
  return true;
}

void write_field(std::ostream& out, const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) {
    out << s;
    return;
  }
  out << '"';
  for (char c : s) {
    if (c == '"') out << '"';
    out << c;
  }
  out << '"';
}

}  // namespace

DatasetManifest parse_manifest(std::istream& in, const std::string& source) {
  DatasetManifest m;
  std::vector<std::string> fields;
  std::size_t line = 0;
  if (!read_record(in, fields, line, source) ||
      fields != std::vector<std::string>{"path", "label", "split"}) {
    throw DataError(source + " line 1: header must be 'path,label,split'");
  }
  std::unordered_set<std::string> seen;
  while (read_record(in, fields, line, source)) {
    const std::string where = source + " line " + std::to_string(line);
    if (fields.size() == 1 && fields[0].empty()) continue;  // blank line
    if (fields.size() != 3) {
      throw DataError(where + ": expected 3 fields, got " + std::to_string(fields.size()));
    }
    ManifestEntry e;
    e.path = fields[0];
    if (e.path.empty()) throw DataError(where + ": empty path");
    if (fields[1] == "0") {
      e.label = 0;
    } else if (fields[1] == "1") {
      e.label = 1;
    } else {
      throw DataError(where + ": label must be 0 or 1, got '" + fields[1] + "'");
    }
    try {
      e.split = split_from_string(fields[2]);
    } catch (const DataError& err) {
      throw DataError(where + ": " + err.what());
    }
    if (!seen.insert(e.path).second) throw DataError(where + ": duplicate path '" + e.path + "'");
    m.entries.push_back(std::move(e));
  }
  return m;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open manifest " + path.string());
  DatasetManifest m = parse_manifest(in, path.string());
  m.base_dir = path.parent_path();
  return m;
}

void DatasetManifest::write_csv(std::ostream& out) const {
  out << "path,label,split\n";
  for (const auto& e : entries) {
    write_field(out, e.path);
    out << ',' << e.label << ',' << to_string(e.split) << '\n';
  }
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write manifest " + path.string());
  manifest.write_csv(out);
}

}  // namespace pehl
