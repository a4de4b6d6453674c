#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "pehl/nn/layers.hpp"

namespace pehl {

inline constexpr std::uint32_t kArtifactVersion = 1;

enum class ModelKind : std::uint32_t { forest = 1, linear = 2, fc = 3, attn_lstm = 4 };

std::string_view to_string(ModelKind kind);

// CRC-32 (zlib polynomial) of a byte string as 8 lowercase hex digits.
std::string crc32_hex(std::string_view text);

/// Container layout, all integers little-endian:
///   "PEHL" | u32 version | u32 kind | u64 n | n bytes JSON metadata
///   | u64 m | m bytes payload | u32 CRC-32 of every preceding byte
struct ArtifactBlob {
  ModelKind kind = ModelKind::forest;
  nlohmann::json metadata;
  std::vector<std::uint8_t> payload;
};

std::vector<std::uint8_t> encode_artifact(const ArtifactBlob& blob);
// Throws ArtifactError on bad magic, version, kind, lengths or checksum.
ArtifactBlob decode_artifact(std::span<const std::uint8_t> bytes);

void write_artifact_file(const std::filesystem::path& path, const ArtifactBlob& blob);
ArtifactBlob read_artifact_file(const std::filesystem::path& path);

class PayloadWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f64(double v);
  void matrix(const nn::Matrix& m);
  void row_vector(const nn::RowVector& v);

  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

// Every read is bounds-checked; running past the end throws ArtifactError.
class PayloadReader {
 public:
  explicit PayloadReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  double f64();
  // Shape must match the destination's current shape.
  void matrix_into(nn::Matrix& m);
  void row_vector_into(nn::RowVector& v);
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const;
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace pehl
