#pragma once

// DCR statistics, coincidence peak counting, cross-talk probabilities, HBT
// contrast and intensity scaling.

#include "lsp2/binformat.hpp"
#include "lsp2/fit.hpp"
#include "lsp2/histogram.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lsp2 {

inline constexpr double kSpeedOfLight = 299'792'458.0;  // m/s

// ---- occupancy / DCR ------------------------------------------------------

std::vector<std::uint64_t> occupancy(std::span<const HitRecord> hits, std::size_t pixel_count = 512);

struct DcrStats {
    std::vector<double> cps;            // per pixel
    double median_cps = 0.0;
    double total_cps = 0.0;
    std::vector<std::uint32_t> order;   // pixels by descending DCR
    std::vector<double> sorted_cps;     // descending
    std::vector<double> cumulative_cps; // running sum of sorted_cps
};

/// Throws std::invalid_argument when duration_s <= 0.
DcrStats dcr_stats(std::span<const std::uint64_t> counts, double duration_s);

struct MaskingResult {
    std::vector<std::uint32_t> masked;
    double budget_cps = 0.0;
    double share_before = 0.0;  // total DCR / budget
    double share_after = 0.0;   // without the masked pixels
    double reduction_factor = 0.0;
};

MaskingResult mask_hottest(const DcrStats& stats, std::uint32_t top_n, double budget_cps);

/// Words per second the container can carry: tdc_count * block_len / period.
double readout_capacity_cps(const FileHeader& header);

struct TimelinePoint {
    double t_start_s = 0.0;
    double t_end_s = 0.0;
    std::uint32_t cycles = 0;
    std::uint64_t hits = 0;
    std::optional<double> median_cps;  // absent for a slice without hits
};

/// Median DCR per time slice. Slices shorter than one second are rejected
/// (AnalysisError).
std::vector<TimelinePoint> dcr_timeline(std::span<const HitRecord> hits, const FileHeader& header,
                                        double slice_s);

/// Pixels whose DCR exceeds the threshold. Throws AnalysisError when none do.
std::vector<std::uint32_t> select_aggressors(const DcrStats& stats, double threshold_cps);

// ---- peak counting and cross-talk -----------------------------------------

struct PeakCounts {
    double n_peak = 0.0;
    double n_bckg = 0.0;  // sideband counts scaled to the peak window width
    double n_bckg_variance = 0.0;
    std::size_t peak_bins = 0;
    std::size_t sideband_bins = 0;
    std::string sideband;  // "right", "left" or "both"
    double coverage = 0.0; // Gaussian mass inside the summed peak bins

    double excess() const { return n_peak - n_bckg; }
    double excess_error() const;
};

/// Counts within +-2 sigma of the fitted center and in an equal-width
/// sideband centered 10 sigma away. Throws AnalysisError if the fit did not
/// converge or no sideband fits in the window.
PeakCounts peak_counts(const DeltaTHistogram& hist, const GaussianFit& fit);

/// Percent: (N_peak - N_bckg) / (I1 + I2) * 100. Throws std::invalid_argument
/// when I1 + I2 == 0.
double ct_probability(double n_peak, double n_bckg, std::uint64_t i1, std::uint64_t i2);

struct CtEstimate {
    double percent = 0.0;
    double error_percent = 0.0;
};

/// Same as above with the window coverage correction and Poisson errors.
CtEstimate ct_probability(const PeakCounts& pc, std::uint64_t i1, std::uint64_t i2, bool correct_coverage = true);

/// (aggressor, victim) pairs for every aggressor and every victim within
/// `span` pixels on the sensor.
std::vector<std::pair<std::uint32_t, std::uint32_t>> ct_scan_pairs(std::span<const std::uint32_t> aggressors,
                                                                   std::int32_t span, std::size_t pixel_count = 512);

struct CtScanOptions {
    std::int32_t span = 20;
    double fit_half_range_ps = 2500.0;
    double min_fit_significance = 5.0;  // A / sigma_A for a pair's own fit to be used
    double default_center_ps = 0.0;     // used when no fit is available
    double default_sigma_ps = 300.0;
};

struct CtPairResult {
    std::uint32_t aggressor = 0;
    std::uint32_t victim = 0;
    std::int32_t distance = 0;
    double center_ps = 0.0;
    double sigma_ps = 0.0;
    std::string peak_from;  // "pair", "neighbour" or "default"
    PeakCounts counts;
    std::uint64_t i1 = 0;
    std::uint64_t i2 = 0;
    CtEstimate probability;
};

struct CtDistance {
    std::int32_t distance = 0;
    double mean_percent = 0.0;  // pooled (count weighted)
    double error_percent = 0.0;
    double min_percent = 0.0;
    double max_percent = 0.0;
    std::size_t pairs = 0;
};

struct CtScanResult {
    std::vector<std::uint32_t> aggressors;
    std::vector<CtDistance> distances;  // d = 1..span
    std::vector<CtPairResult> pairs;
};

/// `hists` must hold the histograms for ct_scan_pairs(aggressors, span).
CtScanResult ct_distance_scan(std::span<const DeltaTHistogram> hists, std::span<const std::uint32_t> aggressors,
                              const CtScanOptions& options = {});

struct CtModelFit {
    double p1 = 0.0;
    double p1_error = 0.0;
    std::vector<std::int32_t> used;
};

/// Weighted least squares of ln(mean_d) = d ln p1 over distances whose mean
/// is positive and at least `min_significance` standard errors. Throws
/// AnalysisError when no distance qualifies.
CtModelFit fit_ct_model(const CtScanResult& scan, double min_significance = 3.0);

// ---- HBT ------------------------------------------------------------------

/// lambda^2 / (c * delta_lambda), in ps.
double coherence_time(double lambda_nm, double delta_lambda_nm);

/// Expected zero-delay contrast of a Gaussian-resolution detector for a
/// Lorentzian line: pol * (1 / 2x^2) (exp(-2x) - 1 + 2x), x = tau_det / tau_c.
double expected_contrast(double tau_det_ps, double tau_c_ps, bool polarized);

struct HbtMetrics {
    double contrast = 0.0;  // A / b
    double contrast_error = 0.0;
    double g2_peak = 1.0;   // 1 + A / b
    double peak_shift_ps = 0.0;
    double shift_error_ps = 0.0;
    double measured_sigma_ps = 0.0;
    double significance = 0.0;  // A / sigma_A
    bool is_hbt = false;
};

/// Shift is measured from `reference_ps` (CT peak center, or 0). Throws
/// AnalysisError for a failed fit or zero background.
HbtMetrics hbt_metrics(const GaussianFit& fit, double expected_delay_ps, double reference_ps = 0.0,
                       double reference_error_ps = 0.0);

struct JointOptions {
    double expected_delay_ps = 0.0;
    double fit_half_range_ps = 2500.0;
    double ct_center_ps = 0.0;      // where to look for the CT peak
    double template_sigma_ps = 100.0;  // for the fixed-shape fallback at the HBT position
};

struct JointAnalysis {
    GaussianFit ct_fit;
    std::optional<PeakCounts> ct_counts;
    GaussianFit hbt_fit;
    bool hbt_template = false;  // hbt_fit came from the fixed-shape fallback
    std::optional<PeakCounts> hbt_counts;
    std::optional<HbtMetrics> hbt;
    double reference_ps = 0.0;
};

/// Fits the CT peak near ct_center and the HBT peak near reference +
/// expected_delay. When the free HBT fit fails or is insignificant the
/// amplitude is refit with center and sigma held fixed.
JointAnalysis analyze_joint(const DeltaTHistogram& hist, const JointOptions& options);

// ---- intensity scaling ----------------------------------------------------

struct LogSlope {
    double slope = 0.0;
    double error = 0.0;
    double intercept = 0.0;
    std::size_t points = 0;
};

/// Weighted least squares of ln(y) against ln(x), weights (y / sigma_y)^2.
/// Throws AnalysisError with fewer than three distinct x or non-positive y.
LogSlope log_log_slope(std::span<const double> x, std::span<const double> y, std::span<const double> sigma_y);

struct ScalingRun {
    double scale = 1.0;
    DeltaTHistogram hist;
};

struct ScalingPoint {
    double scale = 1.0;
    double intensity = 0.0;  // (I1 + I2) / 2
    double ct_excess = 0.0;
    double ct_error = 0.0;
    double hbt_excess = 0.0;
    double hbt_error = 0.0;
    bool ct_ok = false;
    bool hbt_ok = false;
    std::string note;
};

struct ScalingResult {
    std::vector<ScalingPoint> points;
    std::optional<LogSlope> ct;
    std::optional<LogSlope> hbt;
    std::vector<std::string> excluded;
};

ScalingResult scaling_study(std::span<const ScalingRun> runs, const JointOptions& options);

}  // namespace lsp2
