#include "lsp2/calibration.hpp"

#include "lsp2/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <queue>
#include <sstream>

#include <fmt/format.h>

namespace lsp2 {

TdcCalibration TdcCalibration::nominal(std::size_t pixel_count)
{
    TdcCalibration cal;
    cal.widths = TdcBinWidths::nominal(pixel_count);
    cal.bin_counts.assign(pixel_count * kFineBins, 0);
    cal.total_counts.assign(pixel_count, 0);
    cal.flags.assign(pixel_count, kCalOk);
    cal.offsets_ps.assign(pixel_count, 0.0);
    cal.offset_errors_ps.assign(pixel_count, 0.0);
    return cal;
}

double TdcCalibration::relative_error(std::uint32_t pixel, unsigned bin) const
{
    const auto n = bin_counts.empty() ? 0 : bin_counts[pixel * kFineBins + bin];
    return n ? 1.0 / std::sqrt(double(n)) : std::numeric_limits<double>::infinity();
}

void FineBinAccumulator::add(const HitRecord& hit)
{
    if (hit.pixel >= pixel_count_) throw std::out_of_range(fmt::format("pixel {} outside flood table", hit.pixel));
    ++counts_[hit.pixel * kFineBins + hit.raw_timestamp % kFineBins];
}

TdcCalibration estimate_tdc_widths(const FineBinAccumulator& acc, const WidthEstimateOptions& options)
{
    const std::size_t n_pix = acc.pixel_count();
    TdcCalibration cal = TdcCalibration::nominal(n_pix);
    cal.source = options.source;
    const auto counts = acc.counts();
    std::copy(counts.begin(), counts.end(), cal.bin_counts.begin());

    for (std::size_t p = 0; p < n_pix; ++p) {
        std::uint64_t total = 0;
        FineWidths w;
        for (unsigned i = 0; i < kFineBins; ++i) {
            const auto n = counts[p * kFineBins + i];
            total += n;
            w[i] = double(n);
        }
        cal.total_counts[p] = total;
        if (total == 0) {
            cal.flags[p] |= kCalNoData;
            continue;
        }
        if (double(total) / kFineBins < options.min_mean_counts_per_bin) cal.flags[p] |= kCalLowStats;
        cal.widths.set_pixel(p, w);
    }
    return cal;
}

TdcCalibration estimate_tdc_widths(std::span<const HitRecord> flood, std::size_t pixel_count,
                                   const WidthEstimateOptions& options)
{
    FineBinAccumulator acc(pixel_count);
    acc.add(flood);
    return estimate_tdc_widths(acc, options);
}

double apply_tdc_calibration(const HitRecord& hit, const TdcCalibration& cal)
{
    if (!cal.covers(hit.pixel))
        throw CalibrationCoverageError(fmt::format("calibration has no entry for pixel {}", hit.pixel));
    const std::uint32_t coarse = hit.raw_timestamp / kFineBins;
    const unsigned fine = hit.raw_timestamp % kFineBins;
    double t = double(coarse) * kCoarsePeriodPs + cal.widths.midpoint(hit.pixel, fine);
    if (cal.offsets_enabled) t -= cal.offsets_ps[hit.pixel];
    return t;
}

void apply_tdc_calibration(std::span<HitRecord> hits, const TdcCalibration& cal)
{
    for (auto& h : hits) h.calibrated_ps = apply_tdc_calibration(h, cal);
}

OffsetEstimate estimate_offsets(std::span<const PairPeak> peaks, std::uint32_t reference_pixel,
                                std::size_t pixel_count)
{
    if (reference_pixel >= pixel_count) throw std::invalid_argument("reference pixel outside the sensor");
    struct Edge {
        std::uint32_t to;
        double shift;  // offset[to] - offset[from]
        double error;
    };
    std::vector<std::vector<Edge>> graph(pixel_count);
    for (const auto& pk : peaks) {
        if (pk.pixel_a >= pixel_count || pk.pixel_b >= pixel_count || pk.pixel_a == pk.pixel_b) continue;
        if (!std::isfinite(pk.center_ps) || !std::isfinite(pk.center_error_ps)) continue;
        const double shift = pk.center_ps - pk.physical_delay_ps;
        graph[pk.pixel_a].push_back({pk.pixel_b, shift, pk.center_error_ps});
        graph[pk.pixel_b].push_back({pk.pixel_a, -shift, pk.center_error_ps});
    }

    OffsetEstimate est;
    est.reference_pixel = reference_pixel;
    est.offsets_ps.assign(pixel_count, std::numeric_limits<double>::quiet_NaN());
    est.errors_ps.assign(pixel_count, std::numeric_limits<double>::quiet_NaN());
    est.resolved.assign(pixel_count, false);
    std::vector<double> var(pixel_count, 0.0);

    std::queue<std::uint32_t> todo;
    est.offsets_ps[reference_pixel] = 0.0;
    est.errors_ps[reference_pixel] = 0.0;
    est.resolved[reference_pixel] = true;
    todo.push(reference_pixel);
    while (!todo.empty()) {
        const auto u = todo.front();
        todo.pop();
        for (const auto& e : graph[u]) {
            if (est.resolved[e.to]) continue;
            est.resolved[e.to] = true;
            est.offsets_ps[e.to] = est.offsets_ps[u] + e.shift;
            var[e.to] = var[u] + e.error * e.error;
            est.errors_ps[e.to] = std::sqrt(var[e.to]);
            todo.push(e.to);
        }
    }
    for (std::uint32_t p = 0; p < pixel_count; ++p)
        if (!est.resolved[p]) est.unresolved.push_back(p);
    return est;
}

std::vector<PairPeak> measure_pair_peaks(std::span<const DeltaTHistogram> hists, double physical_delay_ps,
                                         double fit_half_range_ps)
{
    std::vector<PairPeak> out;
    for (const auto& h : hists) {
        const auto fit = fit_gaussian(h, FitOptions::around(physical_delay_ps, fit_half_range_ps));
        if (!fit) continue;
        out.push_back({h.pixel_a, h.pixel_b, fit.params.center, fit.errors.center, physical_delay_ps});
    }
    return out;
}

void set_offsets(TdcCalibration& cal, const OffsetEstimate& est)
{
    const std::size_t n = std::min(cal.pixel_count(), est.offsets_ps.size());
    cal.reference_pixel = est.reference_pixel;
    cal.offsets_enabled = true;
    for (std::size_t p = 0; p < n; ++p) {
        if (est.resolved[p]) {
            cal.offsets_ps[p] = est.offsets_ps[p];
            cal.offset_errors_ps[p] = est.errors_ps[p];
            cal.flags[p] &= std::uint8_t(~kCalOffsetUnresolved);
        } else {
            cal.offsets_ps[p] = 0.0;
            cal.offset_errors_ps[p] = std::numeric_limits<double>::infinity();
            cal.flags[p] |= kCalOffsetUnresolved;
        }
    }
}

void write_widths_csv(std::ostream& out, const TdcCalibration& cal, std::string_view header_comment)
{
    if (!header_comment.empty()) out << header_comment << "\n";
    out << "pixel,bin_index,width_ps\n";
    for (std::size_t p = 0; p < cal.pixel_count(); ++p) {
        const auto w = cal.widths.widths(p);
        // 17 significant digits so a reload reproduces the table exactly
        for (unsigned i = 0; i < kFineBins; ++i) out << fmt::format("{},{},{:.17g}\n", p, i, w[i]);
    }
}

void write_offsets_csv(std::ostream& out, const TdcCalibration& cal, std::string_view header_comment)
{
    if (!header_comment.empty()) out << header_comment << "\n";
    out << fmt::format("# reference_pixel={}\n", cal.reference_pixel);
    out << "pixel,offset_ps\n";
    for (std::size_t p = 0; p < cal.pixel_count(); ++p) {
        if (cal.flags[p] & kCalOffsetUnresolved) continue;
        out << fmt::format("{},{:.17g}\n", p, cal.offsets_ps[p]);
    }
}

void write_widths_csv(const std::filesystem::path& path, const TdcCalibration& cal, std::string_view header_comment)
{
    std::ofstream out(path);
    if (!out) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
    write_widths_csv(out, cal, header_comment);
}

void write_offsets_csv(const std::filesystem::path& path, const TdcCalibration& cal, std::string_view header_comment)
{
    std::ofstream out(path);
    if (!out) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
    write_offsets_csv(out, cal, header_comment);
}

namespace {

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path, std::string_view expect_header,
                                               std::vector<std::string>* comments)
{
    std::ifstream in(path);
    if (!in) throw FormatError(fmt::format("cannot open {}", path.string()));
    std::vector<std::vector<std::string>> rows;
    std::string line;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            if (comments) comments->push_back(line);
            continue;
        }
        if (!header_seen) {
            if (line != expect_header)
                throw FormatError(fmt::format("{}: expected header '{}'", path.string(), expect_header));
            header_seen = true;
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        rows.push_back(std::move(cells));
    }
    if (!header_seen) throw FormatError(fmt::format("{}: missing header", path.string()));
    return rows;
}

template <typename T>
T parse_number(const std::string& s, const std::filesystem::path& path)
{
    T v{};
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw FormatError(fmt::format("{}: bad number '{}'", path.string(), s));
    return v;
}

}  // namespace

TdcCalibration read_calibration(const std::filesystem::path& widths_csv,
                                const std::optional<std::filesystem::path>& offsets_csv)
{
    const auto rows = read_csv(widths_csv, "pixel,bin_index,width_ps", nullptr);
    std::map<std::uint32_t, FineWidths> table;
    std::map<std::uint32_t, unsigned> seen;
    for (const auto& r : rows) {
        if (r.size() != 3) throw FormatError(fmt::format("{}: expected 3 columns", widths_csv.string()));
        const auto p = parse_number<std::uint32_t>(r[0], widths_csv);
        const auto i = parse_number<unsigned>(r[1], widths_csv);
        const auto w = parse_number<double>(r[2], widths_csv);
        if (i >= kFineBins) throw FormatError(fmt::format("{}: bin index {} out of range", widths_csv.string(), i));
        table[p][i] = w;
        ++seen[p];
    }
    if (table.empty()) throw FormatError(fmt::format("{}: no rows", widths_csv.string()));
    const std::size_t n_pix = std::size_t(table.rbegin()->first) + 1;
    TdcCalibration cal = TdcCalibration::nominal(n_pix);
    cal.source = widths_csv.filename().string();
    for (std::uint32_t p = 0; p < n_pix; ++p) {
        const auto it = table.find(p);
        if (it == table.end()) {
            cal.flags[p] |= kCalNoData;
            continue;
        }
        if (seen[p] != kFineBins) throw FormatError(fmt::format("{}: pixel {} has {} bins", widths_csv.string(), p, seen[p]));
        try {
            cal.widths.set_pixel(p, it->second);
        } catch (const std::invalid_argument& e) {
            throw FormatError(fmt::format("{}: pixel {}: {}", widths_csv.string(), p, e.what()));
        }
    }

    if (offsets_csv) {
        std::vector<std::string> comments;
        const auto orows = read_csv(*offsets_csv, "pixel,offset_ps", &comments);
        for (const auto& c : comments) {
            const auto pos = c.find("reference_pixel=");
            if (pos != std::string::npos)
                cal.reference_pixel = parse_number<std::uint32_t>(c.substr(pos + 16), *offsets_csv);
        }
        cal.offsets_enabled = true;
        std::vector<bool> have(n_pix, false);
        for (const auto& r : orows) {
            if (r.size() != 2) throw FormatError(fmt::format("{}: expected 2 columns", offsets_csv->string()));
            const auto p = parse_number<std::uint32_t>(r[0], *offsets_csv);
            if (p >= n_pix) throw FormatError(fmt::format("{}: pixel {} not in width table", offsets_csv->string(), p));
            cal.offsets_ps[p] = parse_number<double>(r[1], *offsets_csv);
            have[p] = true;
        }
        for (std::size_t p = 0; p < n_pix; ++p)
            if (!have[p]) cal.flags[p] |= kCalOffsetUnresolved;
    }
    return cal;
}

}  // namespace lsp2
