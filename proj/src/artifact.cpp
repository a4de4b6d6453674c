#include "pehl/artifact.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>

#include <zlib.h>

#include "pehl/error.hpp"

namespace pehl {

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::forest: return "forest";
    case ModelKind::linear: return "linear";
    case ModelKind::fc: return "fc";
    case ModelKind::attn_lstm: return "attn-lstm";
  }
  return "unknown";
}

std::string crc32_hex(std::string_view text) {
  const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(text.data()), static_cast<uInt>(text.size()));
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08lx", static_cast<unsigned long>(crc));
  return buf;
}

void PayloadWriter::u32(std::uint32_t v) {
  for (int k = 0; k < 4; ++k) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
}

void PayloadWriter::u64(std::uint64_t v) {
  for (int k = 0; k < 8; ++k) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
}

void PayloadWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void PayloadWriter::matrix(const nn::Matrix& m) {
  u64(static_cast<std::uint64_t>(m.rows()));
  u64(static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.size(); ++i) f64(m.data()[i]);
}

void PayloadWriter::row_vector(const nn::RowVector& v) {
  u64(static_cast<std::uint64_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) f64(v[i]);
}

void PayloadReader::need(std::size_t n) const {
  if (bytes_.size() - pos_ < n) throw ArtifactError("artifact payload truncated");
}

std::uint8_t PayloadReader::u8() {
  need(1);
  return bytes_[pos_++];
}

std::uint32_t PayloadReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * k);
  return v;
}

std::uint64_t PayloadReader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * k);
  return v;
}

double PayloadReader::f64() { return std::bit_cast<double>(u64()); }

void PayloadReader::matrix_into(nn::Matrix& m) {
  const std::uint64_t rows = u64();
  const std::uint64_t cols = u64();
  if (rows != static_cast<std::uint64_t>(m.rows()) || cols != static_cast<std::uint64_t>(m.cols())) {
    throw ArtifactError("artifact tensor shape does not match the model configuration");
  }
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = f64();
}

void PayloadReader::row_vector_into(nn::RowVector& v) {
  if (u64() != static_cast<std::uint64_t>(v.size())) {
    throw ArtifactError("artifact vector length does not match the model configuration");
  }
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = f64();
}

namespace {

constexpr char kMagic[4] = {'P', 'E', 'H', 'L'};

std::uint32_t crc_of(std::span<const std::uint8_t> bytes) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

}  // namespace

std::vector<std::uint8_t> encode_artifact(const ArtifactBlob& blob) {
  PayloadWriter w;
  for (char c : kMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u32(kArtifactVersion);
  w.u32(static_cast<std::uint32_t>(blob.kind));
  const std::string meta = blob.metadata.dump();
  w.u64(meta.size());
  for (char c : meta) w.u8(static_cast<std::uint8_t>(c));
  w.u64(blob.payload.size());
  for (std::uint8_t b : blob.payload) w.u8(b);
  std::vector<std::uint8_t> out = w.take();
  const std::uint32_t crc = crc_of(out);
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<std::uint8_t>(crc >> (8 * k)));
  return out;
}

ArtifactBlob decode_artifact(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 + 4 + 4 + 8 + 8 + 4) throw ArtifactError("artifact truncated");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw ArtifactError("not a model artifact (bad magic)");
  const auto body = bytes.first(bytes.size() - 4);
  PayloadReader tail(bytes.last(4));
  if (tail.u32() != crc_of(body)) throw ArtifactError("artifact checksum mismatch");

  PayloadReader r(body.subspan(4));
  const std::uint32_t version = r.u32();
  if (version != kArtifactVersion) {
    throw ArtifactError("unsupported artifact version " + std::to_string(version));
  }
  ArtifactBlob blob;
  const std::uint32_t kind = r.u32();
  if (kind < 1 || kind > 4) throw ArtifactError("unknown model kind " + std::to_string(kind));
  blob.kind = static_cast<ModelKind>(kind);
  const std::uint64_t meta_len = r.u64();
  if (meta_len > body.size()) throw ArtifactError("artifact truncated");
  std::string meta(meta_len, '\0');
  for (auto& c : meta) c = static_cast<char>(r.u8());
  try {
    blob.metadata = nlohmann::json::parse(meta);
  } catch (const nlohmann::json::exception&) {
    throw ArtifactError("artifact metadata is not valid JSON");
  }
  const std::uint64_t payload_len = r.u64();
  if (payload_len > body.size()) throw ArtifactError("artifact truncated");
  blob.payload.resize(payload_len);
  for (auto& b : blob.payload) b = r.u8();
  if (!r.at_end()) throw ArtifactError("trailing bytes in artifact");
  return blob;
}

void write_artifact_file(const std::filesystem::path& path, const ArtifactBlob& blob) {
  const auto bytes = encode_artifact(blob);
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("cannot write artifact " + path.string());
}

ArtifactBlob read_artifact_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArtifactError("cannot open artifact " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_artifact(bytes);
}

}  // namespace pehl
