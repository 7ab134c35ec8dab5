#pragma once

// Cycle-structured 32-bit word stream and its file container.
//
// Word layout (little-endian u32):
//   bit 31      valid
//   bits 30-29  pixel index within the TDC (0-3)
//   bits 28-0   raw timestamp, coarse * 140 + fine, in nominal TDC bins
//
// File layout:
//   offset  size  field
//        0     8  magic "LSP2SIM\0"
//        8     4  version (u32)
//       12     4  pixel_count (u32)
//       16     2  tdc_count (u16)
//       18     2  pixels_per_tdc (u16)
//       20     4  block_len (u32, words per TDC per cycle)
//       24     4  cycle_count (u32)
//       28     4  cycle_period_ns (u32)
//       32     -  payload: cycle-major, then TDC index, then slot;
//                 every block is block_len words, zero padded.

#include "lsp2/errors.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <vector>

namespace lsp2 {

inline constexpr std::uint32_t kFineBins = 140;
inline constexpr double kCoarsePeriodPs = 2500.0;
inline constexpr double kNominalBinPs = kCoarsePeriodPs / kFineBins;

inline constexpr std::uint32_t kValidBit = 0x8000'0000u;
inline constexpr std::uint32_t kTimestampBits = 29;
inline constexpr std::uint32_t kTimestampMask = (1u << kTimestampBits) - 1u;
inline constexpr unsigned kPixelShift = kTimestampBits;
inline constexpr unsigned kMaxPixelsPerTdc = 4;

inline constexpr std::array<char, 8> kMagic = {'L', 'S', 'P', '2', 'S', 'I', 'M', '\0'};
inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::size_t kHeaderBytes = 32;

/// Exclusive upper bound on raw timestamps for a cycle of the given length:
/// ceil(period / 2500 ps) * 140.
constexpr std::uint64_t raw_timestamp_limit(std::uint32_t cycle_period_ns)
{
    const std::uint64_t period_ps = std::uint64_t{cycle_period_ns} * 1000u;
    const std::uint64_t coarse_max = (period_ps + 2499u) / 2500u;
    return coarse_max * kFineBins;
}

inline constexpr std::uint32_t kDefaultCyclePeriodNs = 4'000'000;
inline constexpr std::uint64_t kDefaultRawLimit = raw_timestamp_limit(kDefaultCyclePeriodNs);
static_assert(kDefaultRawLimit == 224'000'000);

struct DecodedWord {
    unsigned pixel_in_tdc = 0;
    std::uint32_t raw_timestamp = 0;
    friend bool operator==(const DecodedWord&, const DecodedWord&) = default;
};

/// Throws std::out_of_range for pixel_in_tdc >= 4 or raw_timestamp >= 2^29.
std::uint32_t encode_word(unsigned pixel_in_tdc, std::uint32_t raw_timestamp);

/// Empty slot (all zero) decodes to nullopt. Throws CorruptWordError if the
/// valid bit is set but the timestamp is >= raw_limit, or if an invalid word
/// carries non-zero bits.
std::optional<DecodedWord> decode_word(std::uint32_t word,
                                       std::uint64_t raw_limit = kDefaultRawLimit);

struct FileHeader {
    std::uint32_t version = kFormatVersion;
    std::uint32_t pixel_count = 512;
    std::uint32_t tdc_count = 128;
    std::uint32_t pixels_per_tdc = 4;
    std::uint32_t block_len = 64;
    std::uint32_t cycle_count = 0;
    std::uint32_t cycle_period_ns = kDefaultCyclePeriodNs;

    std::uint64_t raw_limit() const { return raw_timestamp_limit(cycle_period_ns); }
    double cycle_period_ps() const { return double(cycle_period_ns) * 1000.0; }
    std::uint64_t cycle_payload_bytes() const { return std::uint64_t{tdc_count} * block_len * 4u; }
    std::uint64_t payload_bytes() const { return cycle_payload_bytes() * cycle_count; }
    std::uint64_t file_bytes() const { return kHeaderBytes + payload_bytes(); }

    /// Throws FormatError when the fields are inconsistent.
    void validate() const;

    std::array<std::uint8_t, kHeaderBytes> serialize() const;
    static FileHeader parse(std::span<const std::uint8_t, kHeaderBytes> bytes);

    friend bool operator==(const FileHeader&, const FileHeader&) = default;
};

/// One decoded detector hit.
struct HitRecord {
    std::uint32_t pixel = 0;
    std::uint32_t cycle = 0;
    std::uint32_t raw_timestamp = 0;
    std::optional<double> calibrated_ps;

    friend bool operator==(const HitRecord&, const HitRecord&) = default;
};

/// Valid words for one cycle, one vector per TDC. Words inside a block must
/// be sorted by raw timestamp.
using CycleBlocks = std::vector<std::vector<std::uint32_t>>;

/// Streaming writer. The header's cycle_count must equal the number of
/// write_cycle() calls made before finish().
class FileWriter {
public:
    FileWriter(const std::filesystem::path& path, const FileHeader& header);
    ~FileWriter();
    FileWriter(const FileWriter&) = delete;
    FileWriter& operator=(const FileWriter&) = delete;

    /// Throws OverflowError (with the number of excess words) if any block is
    /// longer than block_len, std::invalid_argument for unsorted blocks or a
    /// wrong block count.
    void write_cycle(const CycleBlocks& blocks);

    /// Flushes and returns the total byte count.
    std::uint64_t finish();

    const FileHeader& header() const { return header_; }

private:
    std::ofstream out_;
    FileHeader header_;
    std::uint32_t cycles_written_ = 0;
    std::uint64_t bytes_ = 0;
    std::vector<std::uint8_t> buffer_;
    bool finished_ = false;
};

std::uint64_t write_file(const std::filesystem::path& path, const FileHeader& header,
                         std::span<const CycleBlocks> cycles);

/// Streaming reader. Hits come out in storage order, one cycle at a time.
class FileReader {
public:
    explicit FileReader(const std::filesystem::path& path);

    const FileHeader& header() const { return header_; }

    /// Appends the next cycle's hits to `out`; false once all cycles are read.
    /// Throws TruncationError when the payload ends early.
    bool read_cycle(std::vector<HitRecord>& out);

    std::uint32_t cycles_read() const { return cycle_; }
    std::uint64_t corrupt_words() const { return corrupt_; }
    std::uint64_t valid_words() const { return valid_; }

private:
    std::ifstream in_;
    FileHeader header_;
    std::uint32_t cycle_ = 0;
    std::uint64_t offset_ = kHeaderBytes;
    std::uint64_t corrupt_ = 0;
    std::uint64_t valid_ = 0;
    std::vector<std::uint8_t> buffer_;
};

struct FileContents {
    FileHeader header;
    std::vector<HitRecord> hits;
    std::uint64_t corrupt_words = 0;
};

FileContents read_file(const std::filesystem::path& path);

/// Decode one cycle's payload (tdc_count * block_len words).
void decode_cycle(const FileHeader& header, std::span<const std::uint32_t> words,
                  std::uint32_t cycle, std::vector<HitRecord>& out, std::uint64_t& corrupt);

}  // namespace lsp2
