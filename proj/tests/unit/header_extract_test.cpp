#include <gtest/gtest.h>

#include "json.hpp"
#include "pehl/header_extract.hpp"
#include "test_support.hpp"

using namespace pehl;
using pehl::testing::parse_hex;
using pehl::testing::put_le;
using pehl::testing::random_bytes;
using pehl::testing::read_text;

namespace {

std::vector<std::uint8_t> slice(const std::vector<std::uint8_t>& b, std::size_t lo, std::size_t hi) {
  return {b.begin() + static_cast<std::ptrdiff_t>(lo), b.begin() + static_cast<std::ptrdiff_t>(hi)};
}

std::vector<std::uint8_t> region_bytes(const HeaderRegion& r) { return {r.bytes.begin(), r.bytes.end()}; }

}  // namespace

TEST(HeaderExtract, OffsetSelectsTail) {
  Rng rng(1);
  auto file = random_bytes(rng, 1000);
  put_le(file, 0x3C, 0x80, 4);
  const HeaderRegion r = extract_header_region(file);
  auto expected = slice(file, 0, 64);
  const auto tail = slice(file, 128, 392);
  expected.insert(expected.end(), tail.begin(), tail.end());
  EXPECT_EQ(region_bytes(r), expected);
  EXPECT_EQ(r.pe_offset, 0x80u);
  EXPECT_EQ(r.padded_tail, 0u);
  EXPECT_FALSE(r.degenerate);
}

TEST(HeaderExtract, SixtyFourByteFilePadsTail) {
  Rng rng(2);
  auto file = random_bytes(rng, 64);
  put_le(file, 0x3C, 64, 4);
  const HeaderRegion r = extract_header_region(file);
  auto expected = file;
  expected.resize(kRegionSize, 0);
  EXPECT_EQ(region_bytes(r), expected);
  EXPECT_EQ(r.padded_tail, 264u);
  EXPECT_FALSE(r.degenerate);
}

TEST(HeaderExtract, TenByteFileIsDegenerate) {
  std::vector<std::uint8_t> file{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  const HeaderRegion r = extract_header_region(file);
  std::vector<std::uint8_t> expected(kRegionSize, 0);
  std::copy(file.begin(), file.end(), expected.begin());
  std::copy(file.begin(), file.end(), expected.begin() + 64);
  EXPECT_EQ(region_bytes(r), expected);
  EXPECT_TRUE(r.degenerate);
  EXPECT_EQ(r.padded_tail, 254u);
}

TEST(HeaderExtract, GoldenFixtures) {
  const auto dir = pehl::testing::fixture_dir() / "golden";
  const auto index = nlohmann::json::parse(read_text(dir / "index.json"));
  ASSERT_GE(index.size(), 12u);
  for (const auto& c : index) {
    const std::string name = c["name"];
    SCOPED_TRACE(name);
    const auto input = parse_hex(read_text(dir / (name + ".input.hex")));
    ASSERT_EQ(input.size(), c["size"].get<std::size_t>());
    const HeaderRegion r = extract_header_region(input);
    EXPECT_EQ(region_hex_dump(r), read_text(dir / (name + ".region.hex")));
    EXPECT_EQ(r.pe_offset, c["pe_offset"].get<std::uint32_t>());
    EXPECT_EQ(r.padded_tail, c["padded_tail"].get<std::uint32_t>());
    EXPECT_EQ(r.degenerate, c["degenerate"].get<bool>());
  }
}

TEST(HeaderExtract, FuzzInvariants) {
  Rng rng(3);
  for (int trial = 0; trial < 100000; ++trial) {
    const std::size_t n = uniform_index(rng, 4097);
    auto file = random_bytes(rng, n);
    // Half the files get an in-range offset so both branches are exercised.
    if (n >= 0x40 && trial % 2 == 0) put_le(file, 0x3C, uniform_index(rng, n + 1), 4);
    const HeaderRegion r = extract_header_region(file);
    ASSERT_EQ(r.bytes.size(), kRegionSize);
    ASSERT_LE(r.padded_tail, kRegionSize);
    for (std::size_t i = 0; i < 64; ++i) ASSERT_EQ(r.bytes[i], i < n ? file[i] : 0);
    for (std::size_t i = kRegionSize - r.padded_tail; i < kRegionSize; ++i) ASSERT_EQ(r.bytes[i], 0);
    if (n >= 0x40 && r.pe_offset >= 0x40 && n >= std::size_t{r.pe_offset} + 264) {
      ASSERT_EQ(r.padded_tail, 0u);
      ASSERT_FALSE(r.degenerate);
    }
    if (trial % 1000 == 0) ASSERT_EQ(extract_header_region(file), r);
  }
}
