#include "lsp2/histogram.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>

namespace lsp2 {

DeltaTHistogram DeltaTHistogram::empty(std::uint32_t a, std::uint32_t b, const HistogramSpec& spec)
{
    if (!(spec.bin_width_ps > 0.0)) throw std::invalid_argument("bin width must be positive");
    constexpr double eps = 1e-9;
    const auto first = static_cast<std::int64_t>(std::ceil(spec.window_lo_ps / spec.bin_width_ps + 0.5 - eps));
    const auto last = static_cast<std::int64_t>(std::floor(spec.window_hi_ps / spec.bin_width_ps - 0.5 + eps));
    if (last < first) throw std::invalid_argument("window narrower than one bin");
    DeltaTHistogram h;
    h.pixel_a = a;
    h.pixel_b = b;
    h.bin_width_ps = spec.bin_width_ps;
    h.calibrated = spec.calibrated;
    h.first_index = first;
    h.counts.assign(std::size_t(last - first + 1), 0);
    return h;
}

std::uint64_t DeltaTHistogram::in_window() const
{
    return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

DeltaTHistogram DeltaTHistogram::mirrored() const
{
    DeltaTHistogram m = *this;
    std::swap(m.pixel_a, m.pixel_b);
    std::swap(m.hits_a, m.hits_b);
    m.first_index = -last_index();
    std::reverse(m.counts.begin(), m.counts.end());
    return m;
}

void DeltaTHistogram::merge(const DeltaTHistogram& o)
{
    if (o.pixel_a != pixel_a || o.pixel_b != pixel_b || o.bin_width_ps != bin_width_ps ||
        o.first_index != first_index || o.counts.size() != counts.size() || o.calibrated != calibrated)
        throw std::invalid_argument("cannot merge histograms with different binning or pixels");
    for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += o.counts[i];
    total_pairs += o.total_pairs;
    out_of_window += o.out_of_window;
    cycles += o.cycles;
    hits_a += o.hits_a;
    hits_b += o.hits_b;
}

CoincidenceAccumulator::CoincidenceAccumulator(std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs,
                                               const HistogramSpec& spec)
    : spec_(spec)
{
    std::uint32_t max_pixel = 0;
    for (const auto& [a, b] : pairs) {
        if (a == b) throw std::invalid_argument(fmt::format("pixel pair ({}, {}) is a self-pair", a, b));
        hists_.push_back(DeltaTHistogram::empty(a, b, spec));
        pixels_.push_back(a);
        pixels_.push_back(b);
        max_pixel = std::max({max_pixel, a, b});
    }
    std::sort(pixels_.begin(), pixels_.end());
    pixels_.erase(std::unique(pixels_.begin(), pixels_.end()), pixels_.end());
    slot_of_pixel_.assign(std::size_t(max_pixel) + 1, -1);
    for (std::size_t i = 0; i < pixels_.size(); ++i) slot_of_pixel_[pixels_[i]] = std::int32_t(i);
    times_.resize(pixels_.size());
}

void CoincidenceAccumulator::add_cycle(std::span<const HitRecord> hits)
{
    for (auto& t : times_) t.clear();
    for (const auto& h : hits) {
        if (h.pixel >= slot_of_pixel_.size()) continue;
        const auto slot = slot_of_pixel_[h.pixel];
        if (slot < 0) continue;
        double t;
        if (spec_.calibrated) {
            if (!h.calibrated_ps) throw std::invalid_argument("calibrated histogram requested for uncalibrated hits");
            t = *h.calibrated_ps;
        } else {
            t = double(h.raw_timestamp) * kNominalBinPs;
        }
        times_[std::size_t(slot)].push_back(t);
    }
    for (auto& t : times_) std::sort(t.begin(), t.end());

    for (auto& hist : hists_) {
        const auto& ta = times_[std::size_t(slot_of_pixel_[hist.pixel_a])];
        const auto& tb = times_[std::size_t(slot_of_pixel_[hist.pixel_b])];
        ++hist.cycles;
        hist.hits_a += ta.size();
        hist.hits_b += tb.size();
        const std::uint64_t pairs = std::uint64_t(ta.size()) * tb.size();
        hist.total_pairs += pairs;
        if (pairs == 0) continue;

        const double w = hist.bin_width_ps;
        const double lo = hist.lo_edge() - w;
        const double hi = hist.hi_edge() + w;
        const std::int64_t first = hist.first_index;
        const std::int64_t last = hist.last_index();
        std::uint64_t inside = 0;
        std::size_t start = 0;
        for (const double x : ta) {
            while (start < tb.size() && tb[start] - x < lo) ++start;
            for (std::size_t k = start; k < tb.size(); ++k) {
                const double dt = tb[k] - x;
                if (dt > hi) break;
                const std::int64_t idx = std::llround(dt / w);
                if (idx >= first && idx <= last) {
                    ++hist.counts[std::size_t(idx - first)];
                    ++inside;
                }
            }
        }
        hist.out_of_window += pairs - inside;
    }
}

void CoincidenceAccumulator::add_hits(std::span<const HitRecord> hits)
{
    std::size_t begin = 0;
    while (begin < hits.size()) {
        std::size_t end = begin + 1;
        while (end < hits.size() && hits[end].cycle == hits[begin].cycle) ++end;
        add_cycle(hits.subspan(begin, end - begin));
        begin = end;
    }
}

DeltaTHistogram delta_t_histogram(std::span<const HitRecord> hits, std::uint32_t pixel_a,
                                  std::uint32_t pixel_b, const HistogramSpec& spec)
{
    if (pixel_a == pixel_b) throw std::invalid_argument("delta_t_histogram: identical pixels requested");
    CoincidenceAccumulator acc({{pixel_a, pixel_b}}, spec);
    acc.add_hits(hits);
    return acc.take().front();
}

}  // namespace lsp2
