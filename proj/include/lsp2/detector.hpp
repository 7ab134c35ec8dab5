#pragma once

#include "lsp2/binformat.hpp"
#include "lsp2/rng.hpp"
#include "lsp2/tdc.hpp"
#include "lsp2/thermal.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace lsp2 {

struct HotPixel {
    std::uint32_t pixel = 0;
    double cps = 0.0;
};

enum class BeamProfile { gaussian, flat };

struct DetectorConfig {
    std::uint32_t pixel_count = 512;
    double jitter_sigma_ps = 40.0;
    double pde = 0.13;
    std::array<std::int32_t, 2> beam_centers{170, 174};
    double beam_sigma_px = 1.25;
    BeamProfile beam_profile = BeamProfile::gaussian;

    double dcr_median_cps = 125.0;
    double dcr_log_sigma = 0.35;  // shape of the log-normal bulk
    std::vector<HotPixel> hot_pixels;

    double ct_p1 = 0.0022;
    double ct_floor = 1e-6;
    std::int32_t ct_max_distance = 20;
    double ct_delay_ps = 0.0;
    double ct_sigma_ps = 300.0;
    bool ct_chain = false;

    double dead_time_ps = 0.0;
    std::vector<double> pixel_offsets_ps;  // empty means all zero
    TdcBinWidths tdc_widths;               // empty means nominal
    std::uint64_t rng_seed = 1;

    /// Throws ConfigError.
    void validate() const;

    /// p(d) = ct_p1^d + ct_floor for 1 <= d <= ct_max_distance, else 0.
    double crosstalk_probability(std::int32_t distance) const;
};

/// Why an avalanche does or does not show up as a hit.
enum class Fate : std::uint8_t { detected, dead_time, overflow };

std::string_view to_string(Fate f);

/// A hit together with its simulation provenance.
struct SimHit {
    HitRecord record;
    double observed_ps = 0.0;       // jittered, skewed, clamped time
    std::uint32_t truth_index = 0;  // into the cycle's truth list
};

struct CycleDetection {
    std::vector<SimHit> hits;  // file storage order: TDC, then slot
    CycleBlocks blocks;        // encoded words per TDC
    std::vector<Fate> fate;    // parallel to the truth list
    std::uint64_t dropped_dead = 0;
    std::uint64_t dropped_overflow = 0;
};

/// Prepared detector: validated config plus lookup tables.
class Detector {
public:
    explicit Detector(DetectorConfig cfg);

    const DetectorConfig& config() const { return cfg_; }
    const TdcBinWidths& widths() const { return widths_; }
    double offset_ps(std::uint32_t pixel) const
    {
        return cfg_.pixel_offsets_ps.empty() ? 0.0 : cfg_.pixel_offsets_ps[pixel];
    }

    /// Discrete-Gaussian profile weight for `offset` pixels from the beam
    /// center (truncated at 3 sigma, normalized).
    double profile_weight(std::int32_t offset) const;

    /// Spatial draw then PDE thinning. nullopt when the photon misses the
    /// sensor or is not detected. `event` must be a beam photon.
    std::optional<std::uint32_t> assign_pixel(const TruthEvent& event, Rng& rng) const;

    /// Per-pixel dark rates (cps): log-normal bulk with the configured median,
    /// hot pixels override.
    const std::vector<double>& dark_rates() const { return dark_rates_; }

    /// Homogeneous Poisson dark events on every pixel for one cycle, sorted.
    std::vector<TruthEvent> generate_cycle_dark(double cycle_period_ps, std::uint32_t cycle) const;

    /// Appends crosstalk events for every avalanche in `events` (and, with
    /// ct_chain, for crosstalk events too). Returns the number appended.
    std::size_t apply_crosstalk(std::vector<TruthEvent>& events, Rng& rng) const;

    /// Jitter, skew, clamping, dead time, quantization and block packing.
    CycleDetection detect_and_quantize(std::span<const TruthEvent> events, double cycle_period_ps,
                                       std::uint32_t block_len, std::uint32_t pixels_per_tdc,
                                       Rng& rng) const;

    /// Raw timestamp for an observed time on `pixel`.
    std::uint32_t quantize(std::uint32_t pixel, double observed_ps) const;

private:
    DetectorConfig cfg_;
    TdcBinWidths widths_;
    std::vector<double> dark_rates_;

    std::int32_t profile_half_width_ = 0;
    std::vector<double> profile_weights_;     // offsets -K..K
    std::vector<double> profile_cumulative_;  // same length

    struct Victim {
        std::int32_t offset;
        double p;
    };
    std::vector<Victim> victims_;
    std::vector<double> first_hit_cdf_;  // P(first crosstalk at victim <= k)
    double any_crosstalk_ = 0.0;
};

/// All dark events over `cycle_count` cycles (cycle-major).
std::vector<TruthEvent> generate_dark(const Detector& det, std::uint32_t cycle_count,
                                      double cycle_period_ps);

}  // namespace lsp2
