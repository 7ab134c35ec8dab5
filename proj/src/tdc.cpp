#include "lsp2/tdc.hpp"

#include "lsp2/rng.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lsp2 {

TdcBinWidths TdcBinWidths::nominal(std::size_t pixel_count)
{
    TdcBinWidths t;
    t.widths_.resize(pixel_count * kFineBins);
    t.edges_.resize(pixel_count * (kFineBins + 1));
    FineWidths w;
    w.fill(kNominalBinPs);
    for (std::size_t p = 0; p < pixel_count; ++p) t.set_pixel(p, w);
    return t;
}

TdcBinWidths TdcBinWidths::dirichlet(std::size_t pixel_count, double concentration,
                                     std::uint64_t seed)
{
    if (!(concentration > 0.0)) throw std::invalid_argument("Dirichlet concentration must be > 0");
    TdcBinWidths t = nominal(pixel_count);
    for (std::size_t p = 0; p < pixel_count; ++p) {
        Rng rng(seed, p, Stream::tdc_widths);
        FineWidths w;
        for (auto& x : w) x = rng.gamma(concentration);
        t.set_pixel(p, w);
    }
    return t;
}

void TdcBinWidths::set_pixel(std::size_t pixel, const FineWidths& w)
{
    if (pixel >= pixel_count()) throw std::out_of_range("pixel outside width table");
    double total = 0.0;
    for (double x : w) {
        if (!(x >= 0.0) || !std::isfinite(x)) throw std::invalid_argument("bin widths must be finite and >= 0");
        total += x;
    }
    if (!(total > 0.0)) throw std::invalid_argument("bin widths sum to zero");

    double* row = widths_.data() + pixel * kFineBins;
    double* edge = edges_.data() + pixel * (kFineBins + 1);
    const double scale = kCoarsePeriodPs / total;
    double acc = 0.0;
    edge[0] = 0.0;
    for (std::size_t i = 0; i + 1 < kFineBins; ++i) {
        row[i] = w[i] * scale;
        acc += row[i];
        edge[i + 1] = acc;
    }
    // The last width absorbs rounding so the sequential sum is exact.
    row[kFineBins - 1] = std::max(0.0, kCoarsePeriodPs - acc);
    edge[kFineBins] = kCoarsePeriodPs;
}

unsigned TdcBinWidths::fine_bin(std::size_t pixel, double t_in_coarse) const
{
    const auto e = edges(pixel);
    const auto it = std::upper_bound(e.begin() + 1, e.end(), t_in_coarse);
    const auto idx = static_cast<unsigned>(it - (e.begin() + 1));
    return std::min(idx, kFineBins - 1);
}

double TdcBinWidths::max_width() const
{
    return widths_.empty() ? 0.0 : *std::max_element(widths_.begin(), widths_.end());
}

}  // namespace lsp2
