#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace lsp2 {

/// Invalid scenario or configuration value.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed data file (bad magic, version or header fields).
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Payload ended before the header said it would.
class TruncationError : public FormatError {
public:
    TruncationError(const std::string& what, std::uint64_t offset)
        : FormatError(what), offset_(offset) {}
    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

/// A word with the valid bit set whose timestamp lies outside the cycle.
class CorruptWordError : public FormatError {
public:
    CorruptWordError(const std::string& what, std::uint32_t word)
        : FormatError(what), word_(word) {}
    std::uint32_t word() const noexcept { return word_; }

private:
    std::uint32_t word_;
};

/// More hits in a TDC block than block_len slots.
class OverflowError : public std::runtime_error {
public:
    OverflowError(const std::string& what, std::uint64_t dropped)
        : std::runtime_error(what), dropped_(dropped) {}
    std::uint64_t dropped() const noexcept { return dropped_; }

private:
    std::uint64_t dropped_;
};

/// Hit on a pixel the calibration table does not cover.
class CalibrationCoverageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Analysis could not produce a result (failed fit, degenerate regression,
/// window too narrow, empty selection).
class AnalysisError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace lsp2
