#include "lsp2/binformat.hpp"

#include <algorithm>
#include <cstring>

#include <fmt/format.h>

namespace lsp2 {

namespace {

void put_u32(std::uint8_t* p, std::uint32_t v)
{
    p[0] = std::uint8_t(v);
    p[1] = std::uint8_t(v >> 8);
    p[2] = std::uint8_t(v >> 16);
    p[3] = std::uint8_t(v >> 24);
}

void put_u16(std::uint8_t* p, std::uint32_t v)
{
    p[0] = std::uint8_t(v);
    p[1] = std::uint8_t(v >> 8);
}

std::uint32_t get_u32(const std::uint8_t* p)
{
    return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
           (std::uint32_t(p[3]) << 24);
}

std::uint32_t get_u16(const std::uint8_t* p)
{
    return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8);
}

}  // namespace

std::uint32_t encode_word(unsigned pixel_in_tdc, std::uint32_t raw_timestamp)
{
    if (pixel_in_tdc >= kMaxPixelsPerTdc)
        throw std::out_of_range(fmt::format("pixel_in_tdc {} out of range", pixel_in_tdc));
    if (raw_timestamp > kTimestampMask)
        throw std::out_of_range(fmt::format("raw timestamp {} does not fit 29 bits", raw_timestamp));
    return kValidBit | (std::uint32_t(pixel_in_tdc) << kPixelShift) | raw_timestamp;
}

std::optional<DecodedWord> decode_word(std::uint32_t word, std::uint64_t raw_limit)
{
    if ((word & kValidBit) == 0) {
        if (word != 0)
            throw CorruptWordError(fmt::format("invalid word {:#010x} has stray bits", word), word);
        return std::nullopt;
    }
    const std::uint32_t raw = word & kTimestampMask;
    if (raw >= raw_limit)
        throw CorruptWordError(
            fmt::format("timestamp {} beyond cycle bound {} in word {:#010x}", raw, raw_limit, word),
            word);
    return DecodedWord{(word >> kPixelShift) & 0x3u, raw};
}

void FileHeader::validate() const
{
    if (version != kFormatVersion)
        throw FormatError(fmt::format("unsupported format version {}", version));
    if (tdc_count == 0 || tdc_count > 0xffff)
        throw FormatError(fmt::format("tdc_count {} out of range", tdc_count));
    if (pixels_per_tdc == 0 || pixels_per_tdc > kMaxPixelsPerTdc)
        throw FormatError(fmt::format("pixels_per_tdc {} out of range", pixels_per_tdc));
    if (pixel_count != tdc_count * pixels_per_tdc)
        throw FormatError(fmt::format("pixel_count {} != tdc_count {} x pixels_per_tdc {}",
                                      pixel_count, tdc_count, pixels_per_tdc));
    if (block_len == 0) throw FormatError("block_len must be positive");
    if (cycle_period_ns == 0) throw FormatError("cycle_period_ns must be positive");
    if (raw_limit() > std::uint64_t{kTimestampMask} + 1)
        throw FormatError(fmt::format("cycle period {} ns overflows the 29-bit timestamp", cycle_period_ns));
}

std::array<std::uint8_t, kHeaderBytes> FileHeader::serialize() const
{
    std::array<std::uint8_t, kHeaderBytes> b{};
    std::memcpy(b.data(), kMagic.data(), kMagic.size());
    put_u32(&b[8], version);
    put_u32(&b[12], pixel_count);
    put_u16(&b[16], tdc_count);
    put_u16(&b[18], pixels_per_tdc);
    put_u32(&b[20], block_len);
    put_u32(&b[24], cycle_count);
    put_u32(&b[28], cycle_period_ns);
    return b;
}

FileHeader FileHeader::parse(std::span<const std::uint8_t, kHeaderBytes> b)
{
    if (std::memcmp(b.data(), kMagic.data(), kMagic.size()) != 0)
        throw FormatError("bad magic: not an LSP2SIM data file");
    FileHeader h;
    h.version = get_u32(&b[8]);
    h.pixel_count = get_u32(&b[12]);
    h.tdc_count = get_u16(&b[16]);
    h.pixels_per_tdc = get_u16(&b[18]);
    h.block_len = get_u32(&b[20]);
    h.cycle_count = get_u32(&b[24]);
    h.cycle_period_ns = get_u32(&b[28]);
    h.validate();
    return h;
}

FileWriter::FileWriter(const std::filesystem::path& path, const FileHeader& header)
    : out_(path, std::ios::binary | std::ios::trunc), header_(header)
{
    header_.validate();
    if (!out_) throw std::runtime_error(fmt::format("cannot open {} for writing", path.string()));
    const auto bytes = header_.serialize();
    out_.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    bytes_ = bytes.size();
    buffer_.resize(header_.cycle_payload_bytes());
}

FileWriter::~FileWriter()
{
    if (!finished_) out_.flush();
}

void FileWriter::write_cycle(const CycleBlocks& blocks)
{
    if (blocks.size() != header_.tdc_count)
        throw std::invalid_argument(
            fmt::format("cycle has {} blocks, header says {} TDCs", blocks.size(), header_.tdc_count));
    std::uint64_t overflow = 0;
    for (const auto& block : blocks)
        if (block.size() > header_.block_len) overflow += block.size() - header_.block_len;
    if (overflow > 0)
        throw OverflowError(fmt::format("cycle {}: {} words exceed block_len {}", cycles_written_,
                                        overflow, header_.block_len),
                            overflow);

    std::fill(buffer_.begin(), buffer_.end(), std::uint8_t{0});
    const std::uint64_t limit = header_.raw_limit();
    for (std::size_t t = 0; t < blocks.size(); ++t) {
        const auto& block = blocks[t];
        std::uint32_t prev = 0;
        for (std::size_t s = 0; s < block.size(); ++s) {
            const std::uint32_t w = block[s];
            const auto decoded = decode_word(w, limit);
            if (!decoded) throw std::invalid_argument("empty word inside a block");
            if (decoded->pixel_in_tdc >= header_.pixels_per_tdc)
                throw std::invalid_argument("pixel_in_tdc exceeds pixels_per_tdc");
            if (s > 0 && decoded->raw_timestamp < prev)
                throw std::invalid_argument(fmt::format("block {} not sorted by timestamp", t));
            prev = decoded->raw_timestamp;
            put_u32(&buffer_[(t * header_.block_len + s) * 4], w);
        }
    }
    if (cycles_written_ >= header_.cycle_count)
        throw std::logic_error("more cycles written than declared in the header");
    out_.write(reinterpret_cast<const char*>(buffer_.data()), std::streamsize(buffer_.size()));
    bytes_ += buffer_.size();
    ++cycles_written_;
}

std::uint64_t FileWriter::finish()
{
    if (cycles_written_ != header_.cycle_count)
        throw std::logic_error(fmt::format("wrote {} cycles, header declares {}", cycles_written_,
                                           header_.cycle_count));
    out_.flush();
    if (!out_) throw std::runtime_error("write failed");
    finished_ = true;
    return bytes_;
}

std::uint64_t write_file(const std::filesystem::path& path, const FileHeader& header,
                         std::span<const CycleBlocks> cycles)
{
    FileHeader h = header;
    h.cycle_count = static_cast<std::uint32_t>(cycles.size());
    FileWriter writer(path, h);
    for (const auto& c : cycles) writer.write_cycle(c);
    return writer.finish();
}

void decode_cycle(const FileHeader& header, std::span<const std::uint32_t> words,
                  std::uint32_t cycle, std::vector<HitRecord>& out, std::uint64_t& corrupt)
{
    const std::uint64_t limit = header.raw_limit();
    for (std::size_t i = 0; i < words.size(); ++i) {
        const auto tdc = static_cast<std::uint32_t>(i / header.block_len);
        try {
            const auto d = decode_word(words[i], limit);
            if (!d) continue;
            if (d->pixel_in_tdc >= header.pixels_per_tdc) {
                ++corrupt;
                continue;
            }
            out.push_back(HitRecord{tdc * header.pixels_per_tdc + d->pixel_in_tdc, cycle,
                                    d->raw_timestamp, std::nullopt});
        } catch (const CorruptWordError&) {
            ++corrupt;
        }
    }
}

FileReader::FileReader(const std::filesystem::path& path) : in_(path, std::ios::binary)
{
    if (!in_) throw FormatError(fmt::format("cannot open {}", path.string()));
    std::array<std::uint8_t, kHeaderBytes> bytes{};
    in_.read(reinterpret_cast<char*>(bytes.data()), std::streamsize(bytes.size()));
    if (in_.gcount() != std::streamsize(bytes.size()))
        throw TruncationError("file shorter than header", std::uint64_t(in_.gcount()));
    header_ = FileHeader::parse(bytes);
    buffer_.resize(header_.cycle_payload_bytes());
}

bool FileReader::read_cycle(std::vector<HitRecord>& out)
{
    if (cycle_ >= header_.cycle_count) return false;
    in_.read(reinterpret_cast<char*>(buffer_.data()), std::streamsize(buffer_.size()));
    const auto got = std::uint64_t(in_.gcount());
    if (got != buffer_.size())
        throw TruncationError(
            fmt::format("payload truncated in cycle {} at byte offset {}", cycle_, offset_ + got),
            offset_ + got);
    offset_ += got;

    std::vector<std::uint32_t> words(buffer_.size() / 4);
    for (std::size_t i = 0; i < words.size(); ++i) words[i] = get_u32(&buffer_[i * 4]);
    const std::size_t before = out.size();
    decode_cycle(header_, words, cycle_, out, corrupt_);
    valid_ += out.size() - before;
    ++cycle_;
    return true;
}

FileContents read_file(const std::filesystem::path& path)
{
    FileReader reader(path);
    FileContents c;
    c.header = reader.header();
    while (reader.read_cycle(c.hits)) {
    }
    c.corrupt_words = reader.corrupt_words();
    return c;
}

}  // namespace lsp2
