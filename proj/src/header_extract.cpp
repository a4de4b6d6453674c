#include "pehl/header_extract.hpp"

#include <algorithm>

namespace pehl {

HeaderRegion extract_header_region(std::span<const std::uint8_t> file) {
  HeaderRegion region;
  const std::size_t size = file.size();

  const std::size_t dos_take = std::min(size, kDosHeaderSize);
  std::copy_n(file.begin(), dos_take, region.bytes.begin());

  std::size_t tail_start = 0;
  if (size < kPeOffsetField + 4) {
    region.degenerate = true;
  } else {
    region.pe_offset = static_cast<std::uint32_t>(file[kPeOffsetField]) |
                       static_cast<std::uint32_t>(file[kPeOffsetField + 1]) << 8 |
                       static_cast<std::uint32_t>(file[kPeOffsetField + 2]) << 16 |
                       static_cast<std::uint32_t>(file[kPeOffsetField + 3]) << 24;
    if (region.pe_offset > size) {
      region.degenerate = true;
    } else {
      tail_start = region.pe_offset;
    }
  }

  const std::size_t tail_take = std::min(kPeTailSize, size - tail_start);
  std::copy_n(file.begin() + static_cast<std::ptrdiff_t>(tail_start), tail_take,
              region.bytes.begin() + kDosHeaderSize);

  std::size_t padded = kPeTailSize - tail_take;
  if (tail_take == 0) {
    padded += kDosHeaderSize - dos_take;
  }
  region.padded_tail = static_cast<std::uint32_t>(padded);
  return region;
}

std::string region_hex_dump(const HeaderRegion& region) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(kRegionSize * 3 + kRegionSize / 16 + 1);
  for (std::size_t i = 0; i < kRegionSize; ++i) {
    out.push_back(kDigits[region.bytes[i] >> 4]);
    out.push_back(kDigits[region.bytes[i] & 0xF]);
    out.push_back((i % 16 == 15 || i + 1 == kRegionSize) ? '\n' : ' ');
  }
  return out;
}

}  // namespace pehl
