#pragma once

// Tiny static SVG line/point plotter for the CLI figures.

#include <string>
#include <string_view>
#include <vector>

namespace lsp2::svg {

enum class Style { line, points, step, errorbars };

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
    std::vector<double> yerr;  // only for Style::errorbars
    Style style = Style::line;
    std::string color = "#1f77b4";
    bool autoscale = true;  // false: drawn but ignored for the axis range
};

/// Filled region between lo(x) and hi(x).
struct Band {
    std::string label;
    std::vector<double> x, lo, hi;
    std::string color = "#1f77b4";
};

struct Plot {
    std::string title;
    std::string xlabel;
    std::string ylabel;
    bool log_y = false;
    std::vector<Series> series;
    std::vector<Band> bands;
    int width = 720;
    int height = 440;
};

/// `provenance` goes into an XML comment at the top of the document.
std::string render(const Plot& plot, std::string_view provenance);

/// Throws std::runtime_error when the file cannot be written.
void write(const std::string& path, const Plot& plot, std::string_view provenance);

}  // namespace lsp2::svg
