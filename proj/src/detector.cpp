#include "lsp2/detector.hpp"

#include "lsp2/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

namespace lsp2 {

std::string_view to_string(Fate f)
{
    switch (f) {
    case Fate::detected: return "detected";
    case Fate::dead_time: return "dead_time";
    case Fate::overflow: return "overflow";
    }
    return "unknown";
}

void DetectorConfig::validate() const
{
    if (pixel_count == 0) throw ConfigError("pixel_count must be positive");
    if (!(jitter_sigma_ps >= 0.0)) throw ConfigError("jitter_sigma_ps must be >= 0");
    if (!(pde >= 0.0 && pde <= 1.0)) throw ConfigError("pde must lie in [0, 1]");
    if (!(beam_sigma_px >= 0.0)) throw ConfigError("beam_sigma_px must be >= 0");
    if (!(dcr_median_cps >= 0.0)) throw ConfigError("dcr_median_cps must be >= 0");
    if (!(dcr_log_sigma >= 0.0)) throw ConfigError("dcr_log_sigma must be >= 0");
    for (const auto& h : hot_pixels) {
        if (h.pixel >= pixel_count) throw ConfigError(fmt::format("hot pixel {} outside sensor", h.pixel));
        if (!(h.cps >= 0.0)) throw ConfigError("hot pixel rate must be >= 0");
    }
    if (!(ct_p1 >= 0.0) || !(ct_floor >= 0.0) || !(ct_p1 + ct_floor < 1.0))
        throw ConfigError("crosstalk requires ct_p1, ct_floor >= 0 and ct_p1 + ct_floor < 1");
    if (ct_max_distance < 0) throw ConfigError("ct_max_distance must be >= 0");
    if (!(ct_sigma_ps >= 0.0)) throw ConfigError("ct_sigma_ps must be >= 0");
    if (!(dead_time_ps >= 0.0)) throw ConfigError("dead_time_ps must be >= 0");
    if (!pixel_offsets_ps.empty() && pixel_offsets_ps.size() != pixel_count)
        throw ConfigError("pixel_offsets_ps must be empty or have one entry per pixel");
    if (tdc_widths.pixel_count() != 0 && tdc_widths.pixel_count() != pixel_count)
        throw ConfigError("tdc_widths must cover every pixel");
}

double DetectorConfig::crosstalk_probability(std::int32_t distance) const
{
    if (distance < 1 || distance > ct_max_distance) return 0.0;
    return std::pow(ct_p1, distance) + ct_floor;
}

Detector::Detector(DetectorConfig cfg) : cfg_(std::move(cfg))
{
    cfg_.validate();
    widths_ = cfg_.tdc_widths.pixel_count() ? cfg_.tdc_widths : TdcBinWidths::nominal(cfg_.pixel_count);

    // Spatial profile.
    if (cfg_.beam_sigma_px > 1e-9) {
        profile_half_width_ = static_cast<std::int32_t>(std::floor(3.0 * cfg_.beam_sigma_px));
    }
    const std::int32_t k = profile_half_width_;
    profile_weights_.resize(std::size_t(2 * k + 1));
    for (std::int32_t off = -k; off <= k; ++off) {
        profile_weights_[std::size_t(off + k)] =
            k == 0 ? 1.0 : std::exp(-double(off) * off / (2.0 * cfg_.beam_sigma_px * cfg_.beam_sigma_px));
    }
    const double total = std::accumulate(profile_weights_.begin(), profile_weights_.end(), 0.0);
    for (auto& w : profile_weights_) w /= total;
    profile_cumulative_.resize(profile_weights_.size());
    std::partial_sum(profile_weights_.begin(), profile_weights_.end(), profile_cumulative_.begin());
    profile_cumulative_.back() = 1.0;

    // Dark rates.
    dark_rates_.assign(cfg_.pixel_count, 0.0);
    if (cfg_.dcr_median_cps > 0.0) {
        Rng rng(cfg_.rng_seed, 0, Stream::dark_rates);
        for (auto& r : dark_rates_) r = cfg_.dcr_median_cps * std::exp(cfg_.dcr_log_sigma * rng.normal());
    }
    for (const auto& h : cfg_.hot_pixels) dark_rates_[h.pixel] = h.cps;

    // Crosstalk victims ordered by distance, left before right.
    double none = 1.0;
    for (std::int32_t d = 1; d <= cfg_.ct_max_distance; ++d) {
        const double p = cfg_.crosstalk_probability(d);
        if (p <= 0.0) continue;
        for (std::int32_t side : {-1, 1}) {
            victims_.push_back({side * d, p});
            none *= 1.0 - p;
            first_hit_cdf_.push_back(1.0 - none);
        }
    }
    any_crosstalk_ = first_hit_cdf_.empty() ? 0.0 : first_hit_cdf_.back();
}

double Detector::profile_weight(std::int32_t offset) const
{
    if (offset < -profile_half_width_ || offset > profile_half_width_) return 0.0;
    return profile_weights_[std::size_t(offset + profile_half_width_)];
}

std::optional<std::uint32_t> Detector::assign_pixel(const TruthEvent& event, Rng& rng) const
{
    std::int64_t pixel;
    if (cfg_.beam_profile == BeamProfile::flat) {
        pixel = static_cast<std::int64_t>(rng.below(cfg_.pixel_count));
    } else {
        const std::int32_t center =
            event.kind == EventKind::photon_beam2 ? cfg_.beam_centers[1] : cfg_.beam_centers[0];
        std::int32_t offset = 0;
        if (profile_half_width_ > 0) {
            const double u = rng.uniform();
            const auto it = std::upper_bound(profile_cumulative_.begin(), profile_cumulative_.end(), u);
            const auto idx = std::min<std::size_t>(std::size_t(it - profile_cumulative_.begin()),
                                                   profile_cumulative_.size() - 1);
            offset = static_cast<std::int32_t>(idx) - profile_half_width_;
        }
        pixel = std::int64_t{center} + offset;
    }
    const bool detected = cfg_.pde >= 1.0 || rng.uniform() < cfg_.pde;
    if (!detected || pixel < 0 || pixel >= std::int64_t{cfg_.pixel_count}) return std::nullopt;
    return static_cast<std::uint32_t>(pixel);
}

std::vector<TruthEvent> Detector::generate_cycle_dark(double cycle_period_ps, std::uint32_t cycle) const
{
    std::vector<TruthEvent> out;
    Rng rng(cfg_.rng_seed, cycle, Stream::dark);
    for (std::uint32_t p = 0; p < cfg_.pixel_count; ++p) {
        const double rate = dark_rates_[p] * 1e-12;
        if (!(rate > 0.0)) continue;
        for (double t = rng.exponential(rate); t < cycle_period_ps; t += rng.exponential(rate))
            out.push_back(TruthEvent{EventKind::dark, t, cycle, std::nullopt, std::int32_t(p)});
    }
    std::sort(out.begin(), out.end(), [](const TruthEvent& a, const TruthEvent& b) {
        return a.true_time_ps < b.true_time_ps ||
               (a.true_time_ps == b.true_time_ps && a.pixel < b.pixel);
    });
    return out;
}

std::size_t Detector::apply_crosstalk(std::vector<TruthEvent>& events, Rng& rng) const
{
    if (victims_.empty()) return 0;
    const std::size_t original = events.size();
    const auto pixels = std::int64_t{cfg_.pixel_count};

    auto emit = [&](std::size_t parent, std::size_t victim) {
        const auto& src = events[parent];
        const std::int64_t pix = std::int64_t{src.pixel} + victims_[victim].offset;
        const double t = src.true_time_ps + cfg_.ct_delay_ps +
                         (cfg_.ct_sigma_ps > 0.0 ? cfg_.ct_sigma_ps * rng.normal() : 0.0);
        if (pix < 0 || pix >= pixels) return;
        events.push_back(TruthEvent{EventKind::crosstalk, t, src.cycle,
                                    static_cast<std::uint32_t>(parent), std::int32_t(pix)});
    };

    for (std::size_t i = 0; i < (cfg_.ct_chain ? events.size() : original); ++i) {
        if (events[i].pixel < 0) continue;
        // Sample the first victim hit by inverting the cumulative "any hit
        // so far" probability; later victims are independent Bernoullis.
        const double u = rng.uniform();
        if (u >= any_crosstalk_) continue;
        const auto first = std::size_t(std::upper_bound(first_hit_cdf_.begin(), first_hit_cdf_.end(), u) -
                                       first_hit_cdf_.begin());
        emit(i, first);
        for (std::size_t v = first + 1; v < victims_.size(); ++v)
            if (rng.uniform() < victims_[v].p) emit(i, v);
    }
    return events.size() - original;
}

std::uint32_t Detector::quantize(std::uint32_t pixel, double observed_ps) const
{
    double coarse = std::floor(observed_ps / kCoarsePeriodPs);
    double rem = observed_ps - coarse * kCoarsePeriodPs;
    if (rem < 0.0) {
        coarse -= 1.0;
        rem += kCoarsePeriodPs;
    } else if (rem >= kCoarsePeriodPs) {
        coarse += 1.0;
        rem -= kCoarsePeriodPs;
    }
    const unsigned fine = widths_.fine_bin(pixel, rem);
    return static_cast<std::uint32_t>(coarse) * kFineBins + fine;
}

CycleDetection Detector::detect_and_quantize(std::span<const TruthEvent> events, double cycle_period_ps,
                                             std::uint32_t block_len, std::uint32_t pixels_per_tdc,
                                             Rng& rng) const
{
    CycleDetection out;
    out.fate.assign(events.size(), Fate::detected);
    const double t_max = std::nextafter(cycle_period_ps, 0.0);

    std::vector<double> observed(events.size());
    for (std::size_t i = 0; i < events.size(); ++i) {
        const auto& e = events[i];
        double t = e.true_time_ps;
        if (cfg_.jitter_sigma_ps > 0.0) t += cfg_.jitter_sigma_ps * rng.normal();
        t += offset_ps(std::uint32_t(e.pixel));
        observed[i] = std::clamp(t, 0.0, t_max);
    }

    std::vector<std::uint32_t> order(events.size());
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::uint32_t a, std::uint32_t b) { return observed[a] < observed[b]; });

    const std::uint32_t tdc_count = (cfg_.pixel_count + pixels_per_tdc - 1) / pixels_per_tdc;
    std::vector<std::vector<SimHit>> per_tdc(tdc_count);
    std::vector<double> last_hit(cfg_.pixel_count, -std::numeric_limits<double>::infinity());

    for (std::uint32_t idx : order) {
        const auto pixel = std::uint32_t(events[idx].pixel);
        const double t = observed[idx];
        if (cfg_.dead_time_ps > 0.0 && t - last_hit[pixel] < cfg_.dead_time_ps) {
            out.fate[idx] = Fate::dead_time;
            ++out.dropped_dead;
            continue;
        }
        last_hit[pixel] = t;
        SimHit h;
        h.record = HitRecord{pixel, events[idx].cycle, quantize(pixel, t), std::nullopt};
        h.observed_ps = t;
        h.truth_index = idx;
        per_tdc[pixel / pixels_per_tdc].push_back(h);
    }

    out.blocks.resize(tdc_count);
    for (std::uint32_t tdc = 0; tdc < tdc_count; ++tdc) {
        auto& block = per_tdc[tdc];
        std::stable_sort(block.begin(), block.end(), [](const SimHit& a, const SimHit& b) {
            return a.record.raw_timestamp < b.record.raw_timestamp;
        });
        if (block.size() > block_len) {
            for (std::size_t s = block_len; s < block.size(); ++s) out.fate[block[s].truth_index] = Fate::overflow;
            out.dropped_overflow += block.size() - block_len;
            block.resize(block_len);
        }
        auto& words = out.blocks[tdc];
        words.reserve(block.size());
        for (const auto& h : block) {
            words.push_back(encode_word(h.record.pixel % pixels_per_tdc, h.record.raw_timestamp));
            out.hits.push_back(h);
        }
    }
    return out;
}

std::vector<TruthEvent> generate_dark(const Detector& det, std::uint32_t cycle_count, double cycle_period_ps)
{
    std::vector<TruthEvent> all;
    for (std::uint32_t c = 0; c < cycle_count; ++c) {
        auto ev = det.generate_cycle_dark(cycle_period_ps, c);
        all.insert(all.end(), ev.begin(), ev.end());
    }
    return all;
}

}  // namespace lsp2
