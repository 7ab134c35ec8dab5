#pragma once

// Scenario files are plain "key = value" text, one setting per line, '#'
// starting a comment. Keys are dotted (source.*, detector.*, acquisition.*,
// analysis.*); see README.md for the full schema. Unknown keys are errors.

#include "lsp2/binformat.hpp"
#include "lsp2/detector.hpp"
#include "lsp2/histogram.hpp"
#include "lsp2/thermal.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace lsp2 {

inline constexpr std::string_view kToolVersion = "0.1.0";

struct Acquisition {
    std::uint32_t cycle_count = 2000;
    std::uint32_t cycle_period_ns = kDefaultCyclePeriodNs;
    std::uint32_t block_len = 64;
    std::uint32_t pixels_per_tdc = 4;

    double cycle_period_ps() const { return double(cycle_period_ns) * 1000.0; }
    double duration_s() const { return double(cycle_count) * double(cycle_period_ns) * 1e-9; }
};

struct AnalysisDefaults {
    std::array<std::uint32_t, 2> pair{170, 174};
    double window_ps = 25000.0;
    double bin_width_ps = kDefaultBinWidthPs;
    double expected_delay_ps = 0.0;
    double fit_half_range_ps = 2500.0;
    double dcr_threshold_cps = 4000.0;
    std::int32_t ct_span = 20;
    std::uint32_t mask_top = 14;
    double readout_budget_cps = 0.0;  // 0: block capacity of the file format
    double timeline_slice_s = 1.0;
};

struct Scenario {
    std::string name = "scenario";
    std::uint64_t seed = 1;
    unsigned workers = 0;  // 0: hardware concurrency

    SourceConfig source;
    DetectorConfig detector;  // tdc_widths / offsets filled by materialize()
    Acquisition acquisition;
    AnalysisDefaults analysis;

    std::string tdc_widths_spec = "nominal";  // nominal | dirichlet:<concentration>
    std::string offsets_spec = "zero";        // zero | gauss:<sigma_ps> | list of values

    /// Copies the seed into the source and detector and builds the TDC width
    /// and offset tables. Throws ConfigError.
    void materialize();

    void validate() const;

    FileHeader file_header() const;
};

Scenario parse_scenario(std::string_view text);
Scenario load_scenario(const std::filesystem::path& path);

/// Apply one "key=value" override.
void set_scenario_value(Scenario& s, std::string_view key, std::string_view value);

/// Canonical text form; parse_scenario(to_text(s)) reproduces s.
std::string to_text(const Scenario& s);

/// FNV-1a 64 of the canonical text, as 16 hex digits.
std::string scenario_hash(const Scenario& s);

/// "# lsp2sim <version> scenario=<hash>" provenance line for output files.
std::string provenance_line(std::string_view hash);

}  // namespace lsp2
