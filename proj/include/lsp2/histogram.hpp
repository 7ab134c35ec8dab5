#pragma once

#include "lsp2/binformat.hpp"

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace lsp2 {

// Three nominal TDC bins. Uncalibrated differences sit on a lattice of
// 17.857 ps, and with an even multiple the bin edges land on lattice points
// (the zero bin then collects five lattice values and the others four).
inline constexpr double kDefaultBinWidthPs = 3.0 * kNominalBinPs;

struct HistogramSpec {
    double window_lo_ps = -25000.0;
    double window_hi_ps = 25000.0;
    double bin_width_ps = kDefaultBinWidthPs;
    bool calibrated = false;  // use HitRecord::calibrated_ps instead of raw * nominal bin

    static HistogramSpec symmetric(double half_window_ps, double bin_width_ps, bool calibrated = false)
    {
        return {-half_window_ps, half_window_ps, bin_width_ps, calibrated};
    }
};

/// Distribution of t_b - t_a over same-cycle cross pairs of two pixels.
///
/// Bins are centered on integer multiples of the bin width and a difference
/// goes to round-half-away-from-zero(dt / width), so H(a,b) and H(b,a) are
/// exact mirror images. Only bins lying entirely inside the requested window
/// are kept.
struct DeltaTHistogram {
    std::uint32_t pixel_a = 0;
    std::uint32_t pixel_b = 0;
    double bin_width_ps = kDefaultBinWidthPs;
    bool calibrated = false;
    std::int64_t first_index = 0;  // center of bin i is (first_index + i) * bin_width_ps
    std::vector<std::uint64_t> counts;

    std::uint64_t total_pairs = 0;    // all same-cycle cross pairs seen
    std::uint64_t out_of_window = 0;  // pairs not landing in any kept bin
    std::uint64_t cycles = 0;
    std::uint64_t hits_a = 0;  // I1
    std::uint64_t hits_b = 0;  // I2

    static DeltaTHistogram empty(std::uint32_t a, std::uint32_t b, const HistogramSpec& spec);

    std::size_t size() const { return counts.size(); }
    std::int64_t last_index() const { return first_index + std::int64_t(counts.size()) - 1; }
    double center(std::size_t i) const { return double(first_index + std::int64_t(i)) * bin_width_ps; }
    double lo_edge() const { return (double(first_index) - 0.5) * bin_width_ps; }
    double hi_edge() const { return (double(last_index()) + 0.5) * bin_width_ps; }
    std::uint64_t in_window() const;

    /// The same data seen as H(b, a).
    DeltaTHistogram mirrored() const;

    /// Bin-wise sum with exposure addition; binning must match.
    void merge(const DeltaTHistogram& other);
};

/// Accumulates histograms for several pixel pairs cycle by cycle.
class CoincidenceAccumulator {
public:
    CoincidenceAccumulator(std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs,
                           const HistogramSpec& spec);

    /// All hits of a single cycle. Throws std::invalid_argument if the spec
    /// asks for calibrated times and a relevant hit has none.
    void add_cycle(std::span<const HitRecord> hits);

    /// Hits from consecutive cycles in storage order (grouped by cycle).
    void add_hits(std::span<const HitRecord> hits);

    const std::vector<DeltaTHistogram>& histograms() const { return hists_; }
    std::vector<DeltaTHistogram> take() { return std::move(hists_); }

private:
    HistogramSpec spec_;
    std::vector<DeltaTHistogram> hists_;
    std::vector<std::uint32_t> pixels_;           // distinct pixels involved
    std::vector<std::int32_t> slot_of_pixel_;     // pixel -> index into times_, -1 if unused
    std::vector<std::vector<double>> times_;
};

/// Throws std::invalid_argument when a == b.
DeltaTHistogram delta_t_histogram(std::span<const HitRecord> hits, std::uint32_t pixel_a,
                                  std::uint32_t pixel_b, const HistogramSpec& spec = {});

}  // namespace lsp2
