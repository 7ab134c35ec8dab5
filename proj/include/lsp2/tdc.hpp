#pragma once

#include "lsp2/binformat.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace lsp2 {

using FineWidths = std::array<double, kFineBins>;

/// Per-pixel table of the 140 fine-bin widths of a TDC coarse period.
/// Every row is kept normalized so its sequential sum is exactly 2500 ps.
class TdcBinWidths {
public:
    TdcBinWidths() = default;

    static TdcBinWidths nominal(std::size_t pixel_count);

    /// Symmetric Dirichlet(concentration) draw per pixel, scaled to 2500 ps.
    static TdcBinWidths dirichlet(std::size_t pixel_count, double concentration,
                                  std::uint64_t seed);

    std::size_t pixel_count() const { return widths_.size() / kFineBins; }

    /// Rescales `w` to sum to 2500 ps and stores it. Widths must be >= 0 with a
    /// positive sum.
    void set_pixel(std::size_t pixel, const FineWidths& w);

    std::span<const double, kFineBins> widths(std::size_t pixel) const
    {
        return std::span<const double, kFineBins>(widths_.data() + pixel * kFineBins, kFineBins);
    }

    /// Cumulative edges, edges[0] = 0 and edges[140] = 2500.
    std::span<const double, kFineBins + 1> edges(std::size_t pixel) const
    {
        return std::span<const double, kFineBins + 1>(edges_.data() + pixel * (kFineBins + 1),
                                                      kFineBins + 1);
    }

    /// Fine-bin index whose interval [edge_i, edge_{i+1}) contains `t` (ps
    /// within the coarse period).
    unsigned fine_bin(std::size_t pixel, double t_in_coarse) const;

    /// Time of the bin midpoint within the coarse period.
    double midpoint(std::size_t pixel, unsigned fine) const
    {
        const auto e = edges(pixel);
        return 0.5 * (e[fine] + e[fine + 1]);
    }

    double max_width() const;

private:
    std::vector<double> widths_;
    std::vector<double> edges_;
};

}  // namespace lsp2
