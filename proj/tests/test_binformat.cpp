#include "lsp2/binformat.hpp"
#include "lsp2/rng.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;
using namespace lsp2;

namespace {

fs::path temp_file(const std::string& name)
{
    const auto dir = fs::temp_directory_path() / "lsp2_test_binformat";
    fs::create_directories(dir);
    return dir / name;
}

FileHeader small_header(std::uint32_t cycles)
{
    FileHeader h;
    h.pixel_count = 16;
    h.tdc_count = 4;
    h.block_len = 8;
    h.cycle_count = cycles;
    return h;
}

}  // namespace

TEST(Word, EncodeFixedPatterns)
{
    EXPECT_EQ(encode_word(0, 0), 0x8000'0000u);
    EXPECT_EQ(encode_word(3, 1), 0xE000'0001u);

    // bits 30-29 = 0b10, low 29 bits carry the timestamp
    const std::uint32_t w = encode_word(2, 224'000'000u - 1);
    EXPECT_EQ(w >> 31, 1u);
    EXPECT_EQ((w >> 29) & 0x3u, 2u);
    EXPECT_EQ(w & 0x1FFF'FFFFu, 223'999'999u);
    EXPECT_EQ(w, 0x8000'0000u | (2u << 29) | 223'999'999u);
}

TEST(Word, EncodeRejectsOutOfRange)
{
    EXPECT_THROW(encode_word(4, 0), std::out_of_range);
    EXPECT_THROW(encode_word(0, 1u << 29), std::out_of_range);
}

TEST(Word, DecodeEmptyAndValid)
{
    EXPECT_FALSE(decode_word(0).has_value());
    const auto d = decode_word(0x8000'0000u);
    ASSERT_TRUE(d.has_value());
    EXPECT_EQ(d->pixel_in_tdc, 0u);
    EXPECT_EQ(d->raw_timestamp, 0u);
}

TEST(Word, DecodeCorrupt)
{
    // valid bit but beyond the 4 ms cycle
    EXPECT_THROW(decode_word(0x8000'0000u | 224'000'000u), CorruptWordError);
    // invalid word with stray bits
    EXPECT_THROW(decode_word(0x0000'0005u), CorruptWordError);
    try {
        decode_word(0x8000'0000u | 224'000'000u);
    } catch (const CorruptWordError& e) {
        EXPECT_EQ(e.word(), 0x8000'0000u | 224'000'000u);
    }
}

TEST(Word, RawLimit)
{
    EXPECT_EQ(raw_timestamp_limit(4'000'000), 224'000'000u);
    EXPECT_EQ(raw_timestamp_limit(1), 140u);  // 1 ns rounds up to one coarse period
}

TEST(Word, RandomRoundTrip)
{
    Rng rng(99);
    for (int i = 0; i < 200'000; ++i) {
        const unsigned p = unsigned(rng.below(4));
        const auto raw = std::uint32_t(rng.below(kDefaultRawLimit));
        const std::uint32_t w = encode_word(p, raw);
        const auto d = decode_word(w);
        ASSERT_TRUE(d);
        ASSERT_EQ(encode_word(d->pixel_in_tdc, d->raw_timestamp), w);
        ASSERT_EQ(d->raw_timestamp, raw);
    }
}

TEST(Header, SizeArithmetic)
{
    FileHeader h;
    h.block_len = 64;
    h.cycle_count = 1;
    EXPECT_EQ(h.file_bytes(), 32u + 128u * 64u * 4u);
    EXPECT_EQ(h.file_bytes(), 32'800u);
}

TEST(Header, SerializeParse)
{
    FileHeader h = small_header(7);
    h.cycle_period_ns = 1'000'000;
    const auto bytes = h.serialize();
    EXPECT_TRUE(std::equal(kMagic.begin(), kMagic.end(), bytes.begin()));
    EXPECT_EQ(FileHeader::parse(bytes), h);
}

TEST(Header, BadMagicAndVersion)
{
    auto bytes = small_header(1).serialize();
    auto bad = bytes;
    bad[0] = 'X';
    EXPECT_THROW(FileHeader::parse(bad), FormatError);
    bad = bytes;
    bad[8] = 99;
    EXPECT_THROW(FileHeader::parse(bad), FormatError);
}

TEST(File, EmptyFileIsHeaderOnly)
{
    const auto p = temp_file("empty.bin");
    const FileHeader h = small_header(0);
    EXPECT_EQ(write_file(p, h, {}), 32u);
    EXPECT_EQ(fs::file_size(p), 32u);
    const auto c = read_file(p);
    EXPECT_TRUE(c.hits.empty());
    EXPECT_EQ(c.header, h);
}

TEST(File, RoundTripHits)
{
    const auto p = temp_file("rt.bin");
    FileHeader h = small_header(3);
    std::vector<CycleBlocks> cycles(3, CycleBlocks(4));
    std::vector<HitRecord> expected;
    Rng rng(5);
    for (std::uint32_t c = 0; c < 3; ++c)
        for (std::uint32_t t = 0; t < 4; ++t) {
            const auto n = rng.below(9);
            std::vector<std::uint32_t> raws;
            for (std::uint64_t k = 0; k < n; ++k) raws.push_back(std::uint32_t(rng.below(kDefaultRawLimit)));
            std::sort(raws.begin(), raws.end());
            for (auto r : raws) {
                const unsigned pit = unsigned(rng.below(4));
                cycles[c][t].push_back(encode_word(pit, r));
                expected.push_back({t * 4 + pit, c, r, std::nullopt});
            }
        }
    EXPECT_EQ(write_file(p, h, cycles), h.file_bytes());
    EXPECT_EQ(fs::file_size(p), h.file_bytes());
    const auto got = read_file(p);
    EXPECT_EQ(got.hits, expected);
    EXPECT_EQ(got.corrupt_words, 0u);
}

TEST(File, OverflowAndUnsorted)
{
    const auto p = temp_file("ovf.bin");
    FileWriter w(p, small_header(1));
    CycleBlocks blocks(4);
    for (std::uint32_t i = 0; i < 11; ++i) blocks[2].push_back(encode_word(0, i));
    try {
        w.write_cycle(blocks);
        FAIL() << "expected overflow";
    } catch (const OverflowError& e) {
        EXPECT_EQ(e.dropped(), 3u);
    }
    CycleBlocks unsorted(4);
    unsorted[0] = {encode_word(0, 10), encode_word(0, 5)};
    EXPECT_THROW(w.write_cycle(unsorted), std::invalid_argument);
}

TEST(File, TruncationReportsOffset)
{
    const auto p = temp_file("trunc.bin");
    const FileHeader h = small_header(2);
    std::vector<CycleBlocks> cycles(2, CycleBlocks(4));
    write_file(p, h, cycles);
    fs::resize_file(p, h.file_bytes() - 10);
    FileReader r(p);
    std::vector<HitRecord> hits;
    EXPECT_TRUE(r.read_cycle(hits));
    try {
        r.read_cycle(hits);
        FAIL() << "expected truncation";
    } catch (const TruncationError& e) {
        EXPECT_EQ(e.offset(), h.file_bytes() - 10);  // where the data ran out
    }
}

TEST(File, CorruptWordSkippedAndCounted)
{
    const auto p = temp_file("corrupt.bin");
    const FileHeader h = small_header(1);
    std::vector<CycleBlocks> cycles(1, CycleBlocks(4));
    cycles[0][1] = {encode_word(1, 100)};
    write_file(p, h, cycles);
    {
        // overwrite slot 1 of TDC 1 with an out-of-cycle timestamp
        std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(32 + (1 * 8 + 1) * 4);
        const std::uint32_t bad = 0x8000'0000u | 224'000'000u;
        f.write(reinterpret_cast<const char*>(&bad), 4);
    }
    const auto c = read_file(p);
    ASSERT_EQ(c.hits.size(), 1u);
    EXPECT_EQ(c.hits[0].pixel, 5u);
    EXPECT_EQ(c.corrupt_words, 1u);
}
