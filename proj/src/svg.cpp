#include "lsp2/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <fmt/format.h>

namespace lsp2::svg {

namespace {

constexpr double kLeft = 78, kRight = 20, kTop = 36, kBottom = 52;

std::string escape(std::string_view s)
{
    std::string out;
    for (char c : s) {
        switch (c) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

// 1, 2, 5 times a power of ten
double nice_step(double span, int target)
{
    const double raw = span / std::max(target, 1);
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    for (double m : {1.0, 2.0, 5.0, 10.0})
        if (m * mag >= raw) return m * mag;
    return 10.0 * mag;
}

struct Axis {
    double lo = 0, hi = 1;
    bool log = false;
    double px_lo = 0, px_hi = 1;

    double map(double v) const
    {
        const double a = log ? std::log10(lo) : lo;
        const double b = log ? std::log10(hi) : hi;
        const double x = log ? std::log10(v) : v;
        return px_lo + (x - a) / (b - a) * (px_hi - px_lo);
    }
};

std::string tick_label(double v)
{
    if (v == 0.0) return "0";
    const double a = std::abs(v);
    if (a >= 1e5 || a < 1e-3) return fmt::format("{:.0e}", v);
    return fmt::format("{:g}", v);
}

}  // namespace

std::string render(const Plot& plot, std::string_view provenance)
{
    double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo;
    double ylo = xlo, yhi = -xlo;
    auto take_y = [&](double y) {
        if (!std::isfinite(y) || (plot.log_y && y <= 0.0)) return;
        ylo = std::min(ylo, y);
        yhi = std::max(yhi, y);
    };
    for (const auto& s : plot.series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !s.autoscale) continue;
            xlo = std::min(xlo, s.x[i]);
            xhi = std::max(xhi, s.x[i]);
            take_y(s.y[i]);
            if (!s.yerr.empty()) {
                take_y(s.y[i] + s.yerr[i]);
                if (!plot.log_y) take_y(s.y[i] - s.yerr[i]);
            }
        }
    for (const auto& b : plot.bands)
        for (std::size_t i = 0; i < b.x.size(); ++i) {
            xlo = std::min(xlo, b.x[i]);
            xhi = std::max(xhi, b.x[i]);
            take_y(b.lo[i]);
            take_y(b.hi[i]);
        }
    if (!std::isfinite(xlo)) xlo = 0, xhi = 1;
    if (!std::isfinite(ylo)) ylo = plot.log_y ? 1.0 : 0.0, yhi = plot.log_y ? 10.0 : 1.0;
    if (xhi == xlo) xlo -= 0.5, xhi += 0.5;
    if (plot.log_y) {
        ylo = std::pow(10.0, std::floor(std::log10(ylo)));
        yhi = std::pow(10.0, std::ceil(std::log10(yhi)));
        if (yhi == ylo) yhi *= 10.0;
    } else {
        if (yhi == ylo) ylo -= 0.5, yhi += 0.5;
        const double pad = 0.05 * (yhi - ylo);
        ylo -= pad;
        yhi += pad;
    }

    const double W = plot.width, H = plot.height;
    Axis ax{xlo, xhi, false, kLeft, W - kRight};
    Axis ay{ylo, yhi, plot.log_y, H - kBottom, kTop};

    std::string o;
    o += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    o += fmt::format("<!-- {} -->\n", escape(provenance));
    o += fmt::format("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\" "
                     "font-family=\"sans-serif\" font-size=\"12\">\n",
                     W, H, W, H);
    o += fmt::format("<desc>{}</desc>\n", escape(provenance));
    o += fmt::format("<rect width=\"{}\" height=\"{}\" fill=\"white\"/>\n", W, H);
    o += fmt::format("<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n", W / 2,
                     escape(plot.title));

    // ticks and grid
    const double xs = nice_step(xhi - xlo, 6);
    for (double v = std::ceil(xlo / xs) * xs; v <= xhi + 1e-9 * xs; v += xs) {
        const double px = ax.map(v);
        o += fmt::format("<line x1=\"{0:.1f}\" y1=\"{1:.1f}\" x2=\"{0:.1f}\" y2=\"{2:.1f}\" stroke=\"#ddd\"/>\n", px,
                         kTop, H - kBottom);
        o += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{}</text>\n", px, H - kBottom + 16,
                         tick_label(std::abs(v) < 1e-12 * xs ? 0.0 : v));
    }
    std::vector<double> yt;
    if (plot.log_y) {
        const int decades = int(std::lround(std::log10(yhi / ylo)));
        const int every = std::max(1, (decades + 7) / 8);
        for (int k = 0; k <= decades; k += every) yt.push_back(ylo * std::pow(10.0, k));
    } else {
        const double ys = nice_step(yhi - ylo, 5);
        for (double v = std::ceil(ylo / ys) * ys; v <= yhi + 1e-9 * ys; v += ys)
            yt.push_back(std::abs(v) < 1e-12 * ys ? 0.0 : v);
    }
    for (double v : yt) {
        const double py = ay.map(v);
        o += fmt::format("<line x1=\"{1:.1f}\" y1=\"{0:.1f}\" x2=\"{2:.1f}\" y2=\"{0:.1f}\" stroke=\"#ddd\"/>\n", py,
                         kLeft, W - kRight);
        o += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\">{}</text>\n", kLeft - 6, py + 4,
                         tick_label(v));
    }
    o += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n", kLeft,
                     kTop, W - kLeft - kRight, H - kTop - kBottom);
    o += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{}</text>\n", (kLeft + W - kRight) / 2,
                     H - 12, escape(plot.xlabel));
    o += fmt::format("<text transform=\"translate(16,{:.1f}) rotate(-90)\" text-anchor=\"middle\">{}</text>\n",
                     (kTop + H - kBottom) / 2, escape(plot.ylabel));

    o += fmt::format("<clipPath id=\"area\"><rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\"/></clipPath>\n", kLeft,
                     kTop, W - kLeft - kRight, H - kTop - kBottom);
    o += "<g clip-path=\"url(#area)\">\n";
    auto ok = [&](double y) { return std::isfinite(y) && !(plot.log_y && y <= 0.0); };
    for (const auto& b : plot.bands) {
        std::string pts;
        for (std::size_t i = 0; i < b.x.size(); ++i)
            if (ok(b.hi[i])) pts += fmt::format("{:.1f},{:.1f} ", ax.map(b.x[i]), ay.map(b.hi[i]));
        for (std::size_t i = b.x.size(); i-- > 0;)
            pts += fmt::format("{:.1f},{:.1f} ", ax.map(b.x[i]), ok(b.lo[i]) ? ay.map(b.lo[i]) : H - kBottom);
        o += fmt::format("<polygon points=\"{}\" fill=\"{}\" fill-opacity=\"0.2\" stroke=\"none\"/>\n", pts, b.color);
    }
    for (const auto& s : plot.series) {
        if (s.style == Style::line || s.style == Style::step) {
            std::string pts;
            for (std::size_t i = 0; i < s.x.size(); ++i) {
                if (!ok(s.y[i])) continue;
                if (s.style == Style::step && i + 1 < s.x.size()) {
                    const double half = 0.5 * (s.x[i + 1] - s.x[i]);
                    pts += fmt::format("{:.1f},{:.1f} {:.1f},{:.1f} ", ax.map(s.x[i] - half), ay.map(s.y[i]),
                                       ax.map(s.x[i] + half), ay.map(s.y[i]));
                } else {
                    pts += fmt::format("{:.1f},{:.1f} ", ax.map(s.x[i]), ay.map(s.y[i]));
                }
            }
            o += fmt::format("<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.3\"/>\n", pts,
                             s.color);
        } else {
            for (std::size_t i = 0; i < s.x.size(); ++i) {
                if (!ok(s.y[i])) continue;
                const double px = ax.map(s.x[i]), py = ay.map(s.y[i]);
                if (s.style == Style::errorbars && i < s.yerr.size()) {
                    const double lo = s.y[i] - s.yerr[i], hi = s.y[i] + s.yerr[i];
                    const double plo = ok(lo) ? ay.map(lo) : H - kBottom;
                    o += fmt::format("<line x1=\"{0:.1f}\" y1=\"{1:.1f}\" x2=\"{0:.1f}\" y2=\"{2:.1f}\" "
                                     "stroke=\"{3}\"/>\n",
                                     px, plo, ay.map(hi), s.color);
                }
                o += fmt::format("<circle cx=\"{:.1f}\" cy=\"{:.1f}\" r=\"3\" fill=\"{}\"/>\n", px, py, s.color);
            }
        }
    }
    o += "</g>\n";

    // legend
    int entries = 0;
    for (const auto& b : plot.bands) entries += !b.label.empty();
    for (const auto& s : plot.series) entries += !s.label.empty();
    if (entries)
        o += fmt::format("<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"186\" height=\"{}\" fill=\"white\" "
                         "fill-opacity=\"0.85\" stroke=\"#ccc\"/>\n",
                         W - kRight - 196, kTop + 4, 16 * entries + 6);
    double ly = kTop + 18;
    auto legend = [&](const std::string& label, const std::string& color) {
        if (label.empty()) return;
        o += fmt::format("<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"12\" height=\"3\" fill=\"{}\"/>\n", W - kRight - 190,
                         ly - 5, color);
        o += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\">{}</text>\n", W - kRight - 172, ly, escape(label));
        ly += 16;
    };
    for (const auto& b : plot.bands) legend(b.label, b.color);
    for (const auto& s : plot.series) legend(s.label, s.color);
    o += "</svg>\n";
    return o;
}

void write(const std::string& path, const Plot& plot, std::string_view provenance)
{
    std::ofstream out(path);
    if (!out) throw std::runtime_error(fmt::format("cannot write {}", path));
    out << render(plot, provenance);
}

}  // namespace lsp2::svg
