#pragma once

// TDC bin-width calibration from flood data and per-pixel skew offsets from
// pairwise coincidence peaks.

#include "lsp2/binformat.hpp"
#include "lsp2/fit.hpp"
#include "lsp2/histogram.hpp"
#include "lsp2/tdc.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace lsp2 {

enum CalibrationFlag : std::uint8_t {
    kCalOk = 0,
    kCalLowStats = 1,  // fewer than the minimum average counts per bin
    kCalNoData = 2,    // no counts at all, nominal widths substituted
    kCalOffsetUnresolved = 4,
};

struct TdcCalibration {
    TdcBinWidths widths;
    std::vector<std::uint64_t> bin_counts;  // pixel * 140 + bin
    std::vector<std::uint64_t> total_counts;
    std::vector<std::uint8_t> flags;

    std::uint32_t reference_pixel = 0;
    bool offsets_enabled = false;
    std::vector<double> offsets_ps;
    std::vector<double> offset_errors_ps;

    std::string source;  // flood run identifier

    static TdcCalibration nominal(std::size_t pixel_count);

    std::size_t pixel_count() const { return widths.pixel_count(); }
    bool covers(std::uint32_t pixel) const { return pixel < pixel_count(); }

    /// Statistical relative error of a width estimate, 1/sqrt(counts); inf
    /// for empty bins.
    double relative_error(std::uint32_t pixel, unsigned bin) const;
};

/// Streaming fine-bin histogram per pixel.
class FineBinAccumulator {
public:
    explicit FineBinAccumulator(std::size_t pixel_count = 512)
        : counts_(pixel_count * kFineBins, 0), pixel_count_(pixel_count) {}

    void add(const HitRecord& hit);
    void add(std::span<const HitRecord> hits)
    {
        for (const auto& h : hits) add(h);
    }

    std::size_t pixel_count() const { return pixel_count_; }
    std::span<const std::uint64_t> counts() const { return counts_; }
    std::uint64_t count(std::uint32_t pixel, unsigned bin) const { return counts_[pixel * kFineBins + bin]; }

private:
    std::vector<std::uint64_t> counts_;
    std::size_t pixel_count_;
};

struct WidthEstimateOptions {
    double min_mean_counts_per_bin = 100.0;
    std::string source;
};

/// width_i = 2500 ps * n_i / sum(n). Pixels without counts keep nominal
/// widths and are flagged kCalNoData; thin pixels are flagged kCalLowStats.
TdcCalibration estimate_tdc_widths(const FineBinAccumulator& counts, const WidthEstimateOptions& options = {});
TdcCalibration estimate_tdc_widths(std::span<const HitRecord> flood, std::size_t pixel_count = 512,
                                   const WidthEstimateOptions& options = {});

/// coarse * 2500 + left edge + w/2, minus the pixel offset when enabled.
/// Throws CalibrationCoverageError for pixels outside the table.
double apply_tdc_calibration(const HitRecord& hit, const TdcCalibration& cal);

/// Fills calibrated_ps on every hit.
void apply_tdc_calibration(std::span<HitRecord> hits, const TdcCalibration& cal);

/// A measured coincidence peak between two pixels, Delta t = t_b - t_a.
struct PairPeak {
    std::uint32_t pixel_a = 0;
    std::uint32_t pixel_b = 0;
    double center_ps = 0.0;
    double center_error_ps = 0.0;
    double physical_delay_ps = 0.0;  // known true delay of the peak (CT: ct_delay)
};

struct OffsetEstimate {
    std::uint32_t reference_pixel = 0;
    std::vector<double> offsets_ps;  // NaN where unresolved
    std::vector<double> errors_ps;
    std::vector<bool> resolved;
    std::vector<std::uint32_t> unresolved;
};

/// offset[b] - offset[a] = center - physical_delay for every peak. Offsets
/// are chained outward from the reference pixel (offset 0) by breadth-first
/// search with errors added in quadrature.
OffsetEstimate estimate_offsets(std::span<const PairPeak> peaks, std::uint32_t reference_pixel,
                                std::size_t pixel_count = 512);

/// Histograms and fits every pair; pairs whose fit fails are left out.
std::vector<PairPeak> measure_pair_peaks(std::span<const DeltaTHistogram> hists, double physical_delay_ps,
                                         double fit_half_range_ps);

void set_offsets(TdcCalibration& cal, const OffsetEstimate& est);

// CSV persistence: "pixel,bin_index,width_ps" and "pixel,offset_ps".
void write_widths_csv(std::ostream& out, const TdcCalibration& cal, std::string_view header_comment);
void write_offsets_csv(std::ostream& out, const TdcCalibration& cal, std::string_view header_comment);
void write_widths_csv(const std::filesystem::path& path, const TdcCalibration& cal, std::string_view header_comment);
void write_offsets_csv(const std::filesystem::path& path, const TdcCalibration& cal, std::string_view header_comment);

/// Reads a widths CSV and, optionally, an offsets CSV (offsets are enabled
/// when one is given). Throws FormatError on malformed input.
TdcCalibration read_calibration(const std::filesystem::path& widths_csv,
                                const std::optional<std::filesystem::path>& offsets_csv = std::nullopt);

}  // namespace lsp2
