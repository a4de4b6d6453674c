#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace pehl {

inline constexpr std::size_t kDosHeaderSize = 64;
inline constexpr std::size_t kPeTailSize = 264;
inline constexpr std::size_t kRegionSize = kDosHeaderSize + kPeTailSize;  // 328
inline constexpr std::size_t kPeOffsetField = 0x3C;

struct RawBinary {
  std::vector<std::uint8_t> bytes;
  std::string source_id;
};

/// The fixed 328-byte window every byte-level model consumes: the MS-DOS
/// header followed by the 264 bytes at the PE offset (signature, COFF header
/// and the largest Optional header).
struct HeaderRegion {
  std::array<std::uint8_t, kRegionSize> bytes{};
  // Value of the 32-bit little-endian field at 0x3C, or 0 when the file is
  // too short to contain it.
  std::uint32_t pe_offset = 0;
  // Length of the trailing run of region bytes that lie beyond end-of-file.
  std::uint32_t padded_tail = 0;
  // Offset field unreadable or pointing past end-of-file; the tail was then
  // taken from file offset 0.
  bool degenerate = false;

  std::span<const std::uint8_t> view() const { return bytes; }
  bool operator==(const HeaderRegion&) const = default;
};

// Total: every byte stream, however malformed, yields a region.
HeaderRegion extract_header_region(std::span<const std::uint8_t> file);

inline HeaderRegion extract_header_region(const RawBinary& file) {
  return extract_header_region(std::span<const std::uint8_t>(file.bytes));
}

// Lowercase hex, 16 bytes per line, no offsets.
std::string region_hex_dump(const HeaderRegion& region);

}  // namespace pehl
