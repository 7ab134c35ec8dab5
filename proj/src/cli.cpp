#include "lsp2/cli.hpp"

#include "lsp2/analysis.hpp"
#include "lsp2/calibration.hpp"
#include "lsp2/errors.hpp"
#include "lsp2/scenario.hpp"
#include "lsp2/simulation.hpp"
#include "lsp2/svg.hpp"
#include "lsp2/verify.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <fmt/ostream.h>

namespace fs = std::filesystem;

namespace lsp2 {

namespace {

class NoData : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Fit or analysis failure that should still leave the outputs written so far.
class FitFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string num(double v) { return fmt::format("{:.10g}", v); }

/// Output files are collected in memory and only written once the command
/// has succeeded, so failing commands leave nothing behind.
class Outputs {
public:
    explicit Outputs(fs::path dir) : dir_(std::move(dir)) {}

    std::ostringstream& text(const std::string& name)
    {
        files_.emplace_back(name, std::make_unique<std::ostringstream>());
        return *files_.back().second;
    }

    void plot(const std::string& name, const svg::Plot& p, std::string_view provenance)
    {
        text(name) << svg::render(p, provenance);
    }

    std::vector<fs::path> commit(std::ostream& log)
    {
        fs::create_directories(dir_);
        std::vector<fs::path> written;
        for (const auto& [name, body] : files_) {
            const auto path = dir_ / name;
            std::ofstream out(path, std::ios::binary);
            if (!out) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
            out << body->str();
            written.push_back(path);
            fmt::print(log, "wrote {}\n", path.string());
        }
        files_.clear();
        return written;
    }

private:
    fs::path dir_;
    std::vector<std::pair<std::string, std::unique_ptr<std::ostringstream>>> files_;
};

fs::path default_out_dir()
{
    if (const char* env = std::getenv(kOutputDirEnv); env && *env) return env;
    return "lsp2sim-out";
}

// ---- scenarios -------------------------------------------------------------

Scenario scenario_from(const std::optional<std::string>& file, const std::vector<std::string>& sets)
{
    Scenario s = file ? load_scenario(*file) : Scenario{};
    for (const auto& kv : sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError(fmt::format("--set expects key=value, got '{}'", kv));
        set_scenario_value(s, kv.substr(0, eq), kv.substr(eq + 1));
    }
    s.materialize();
    return s;
}

// ---- data files ------------------------------------------------------------

struct DataSource {
    fs::path path;
    FileHeader header;
    std::string hash = "unknown";
    std::string stem;
    std::optional<Scenario> scenario;  // from the sidecar, if present

    std::string provenance() const { return provenance_line(hash); }
};

DataSource open_data(const fs::path& path)
{
    if (!fs::exists(path)) throw FormatError(fmt::format("{}: no such file", path.string()));
    if (fs::file_size(path) == 0) throw NoData(fmt::format("{} is empty", path.string()));
    DataSource d;
    d.path = path;
    d.stem = path.stem().string();
    d.header = FileReader(path).header();
    if (d.header.cycle_count == 0) throw NoData(fmt::format("{} holds no cycles", path.string()));
    const auto sidecar = path.parent_path() / (d.stem + ".scenario.txt");
    if (fs::exists(sidecar)) {
        try {
            d.scenario = load_scenario(sidecar);
            d.hash = scenario_hash(*d.scenario);
        } catch (const ConfigError&) {
            d.scenario.reset();
        }
    }
    return d;
}

/// Streams the file cycle by cycle. Returns the number of hits seen.
template <typename F>
std::uint64_t for_each_cycle(const DataSource& d, F&& fn)
{
    FileReader reader(d.path);
    std::vector<HitRecord> hits;
    std::uint64_t total = 0;
    while (true) {
        hits.clear();
        if (!reader.read_cycle(hits)) break;
        total += hits.size();
        fn(hits);
    }
    return total;
}

double duration_s(const FileHeader& h) { return double(h.cycle_count) * h.cycle_period_ns * 1e-9; }

std::optional<TdcCalibration> load_cal(const std::optional<std::string>& widths, const std::optional<std::string>& offsets)
{
    if (!widths) {
        if (offsets) throw ConfigError("--offsets needs --cal");
        return std::nullopt;
    }
    return read_calibration(*widths, offsets ? std::optional<fs::path>(*offsets) : std::nullopt);
}

std::vector<DeltaTHistogram> histograms_from(const DataSource& d, const std::vector<std::pair<std::uint32_t, std::uint32_t>>& pairs,
                                             const HistogramSpec& spec, const std::optional<TdcCalibration>& cal)
{
    for (const auto& [a, b] : pairs)
        if (a >= d.header.pixel_count || b >= d.header.pixel_count)
            throw ConfigError(fmt::format("pair {},{} outside the {}-pixel sensor", a, b, d.header.pixel_count));
    CoincidenceAccumulator acc(pairs, spec);
    const auto total = for_each_cycle(d, [&](std::vector<HitRecord>& hits) {
        if (cal) apply_tdc_calibration(hits, *cal);
        acc.add_cycle(hits);
    });
    if (total == 0) throw NoData(fmt::format("{} holds no hits", d.path.string()));
    return acc.take();
}

// ---- shared writers ----------------------------------------------------------

void write_histogram_csv(std::ostream& o, const DeltaTHistogram& h, std::string_view prov)
{
    o << prov << "\n";
    fmt::print(o, "# pixel_a={} pixel_b={} bin_width_ps={} calibrated={} cycles={} hits_a={} hits_b={} "
                  "total_pairs={} out_of_window={}\n",
               h.pixel_a, h.pixel_b, num(h.bin_width_ps), h.calibrated, h.cycles, h.hits_a, h.hits_b, h.total_pairs,
               h.out_of_window);
    o << "bin_center_ps,counts\n";
    for (std::size_t i = 0; i < h.size(); ++i) fmt::print(o, "{},{}\n", num(h.center(i)), h.counts[i]);
}

void write_fit(std::ostream& o, std::string_view prefix, const GaussianFit& f)
{
    fmt::print(o, "{}converged = {}\n", prefix, f.converged);
    if (!f.converged) {
        fmt::print(o, "{}failure = {}\n", prefix, f.failure);
        return;
    }
    const auto& p = f.params;
    const auto& e = f.errors;
    fmt::print(o, "{}amplitude = {} +- {}\n", prefix, num(p.amplitude), num(e.amplitude));
    fmt::print(o, "{}center_ps = {} +- {}\n", prefix, num(p.center), num(e.center));
    fmt::print(o, "{}sigma_ps = {} +- {}\n", prefix, num(p.sigma), num(e.sigma));
    fmt::print(o, "{}background = {} +- {}\n", prefix, num(p.background), num(e.background));
    fmt::print(o, "{}chi2_per_dof = {} ({} dof)\n", prefix, num(f.chi2_per_dof), f.dof);
    fmt::print(o, "{}range_ps = {},{}\n", prefix, num(f.range_lo_ps), num(f.range_hi_ps));
}

void write_counts(std::ostream& o, std::string_view prefix, const PeakCounts& c)
{
    fmt::print(o, "{}n_peak = {}\n", prefix, num(c.n_peak));
    fmt::print(o, "{}n_bckg = {} ({} sideband)\n", prefix, num(c.n_bckg), c.sideband);
    fmt::print(o, "{}excess = {} +- {}\n", prefix, num(c.excess()), num(c.excess_error()));
    fmt::print(o, "{}coverage = {}\n", prefix, num(c.coverage));
}

svg::Plot histogram_plot(const DeltaTHistogram& h, const std::vector<std::pair<const GaussianFit*, std::string>>& fits,
                         std::string title)
{
    svg::Plot p;
    p.title = std::move(title);
    p.xlabel = "t_b - t_a [ps]";
    p.ylabel = "coincidences per bin";
    svg::Series s{"data", {}, {}, {}, svg::Style::step, "#333333"};
    for (std::size_t i = 0; i < h.size(); ++i) {
        s.x.push_back(h.center(i));
        s.y.push_back(double(h.counts[i]));
    }
    p.series.push_back(std::move(s));
    const char* colors[] = {"#d62728", "#1f77b4"};
    int k = 0;
    for (const auto& [f, label] : fits) {
        if (!f || !f->converged) continue;
        svg::Series m{label, {}, {}, {}, svg::Style::line, colors[k % 2]};
        for (double t = f->range_lo_ps; t <= f->range_hi_ps; t += h.bin_width_ps / 4) {
            m.x.push_back(t);
            m.y.push_back(gaussian_model(f->params, t));
        }
        p.series.push_back(std::move(m));
        ++k;
    }
    return p;
}

// ---- commands --------------------------------------------------------------

struct Common {
    std::string out_dir;
    unsigned workers = 0;
};

struct ScenarioArgs {
    std::optional<std::string> file;
    std::vector<std::string> sets;
};

int cmd_simulate(const Common& c, const ScenarioArgs& sa, std::optional<std::string> stem, bool no_truth,
                 std::ostream& out)
{
    const auto s = scenario_from(sa.file, sa.sets);
    const auto res = simulate_run(s, c.out_dir, stem.value_or(s.name), c.workers ? c.workers : s.workers, !no_truth);
    const auto& r = res.report;
    fmt::print(out, "{}\n", provenance_line(r.scenario_hash));
    fmt::print(out, "cycles {} hits {} (photon {}, dark {}, crosstalk {}), dropped: dead {} overflow {}\n", r.cycles,
               r.total_hits, r.photon_avalanches, r.dark_avalanches, r.crosstalk_avalanches, r.dropped_dead,
               r.dropped_overflow);
    fmt::print(out, "wrote {}\n", res.data_file.string());
    if (!no_truth) fmt::print(out, "wrote {}\n", res.truth_file.string());
    fmt::print(out, "wrote {}\nwrote {}\n", res.report_file.string(), res.scenario_file.string());
    return kExitOk;
}

void apply_flood_settings(Scenario& s, double cps_per_pixel)
{
    s.source.mode = SourceMode::coherent;
    s.source.mean_rate_beam1 = cps_per_pixel * s.detector.pixel_count;
    s.source.mean_rate_beam2 = 0.0;
    s.detector.beam_profile = BeamProfile::flat;
    s.detector.pde = 1.0;
    s.detector.dcr_median_cps = 0.0;
    s.detector.hot_pixels.clear();
    s.detector.ct_p1 = 0.0;
    s.detector.ct_floor = 0.0;
}

int cmd_flood(const Common& c, const ScenarioArgs& sa, double cps, bool truth, std::ostream& out)
{
    Scenario s = sa.file ? load_scenario(*sa.file) : Scenario{};
    if (!sa.file) {
        s.name = "flood";
        s.tdc_widths_spec = "dirichlet:200";
        s.acquisition.block_len = 512;
    }
    apply_flood_settings(s, cps);
    for (const auto& kv : sa.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError(fmt::format("--set expects key=value, got '{}'", kv));
        set_scenario_value(s, kv.substr(0, eq), kv.substr(eq + 1));
    }
    s.materialize();
    const auto res = simulate_run(s, c.out_dir, s.name, c.workers ? c.workers : s.workers, truth);
    const auto& r = res.report;
    fmt::print(out, "{}\n", provenance_line(r.scenario_hash));
    fmt::print(out, "flood: {} cycles, {:.0f} hits/pixel, {} overflow drops\n", r.cycles,
               double(r.total_hits) / s.detector.pixel_count, r.dropped_overflow);
    fmt::print(out, "wrote {}\n", res.data_file.string());
    return kExitOk;
}

struct CalibrateArgs {
    std::string flood;
    double min_counts = 100.0;
    std::optional<std::string> offset_data;
    std::vector<std::string> offset_pairs;
    std::uint32_t reference = 0;
    double physical_delay = 0.0;
    double fit_half_range = 2500.0;
    std::uint32_t plot_pixel = 0;
};

int cmd_calibrate(const Common& c, const CalibrateArgs& a, std::ostream& out)
{
    const auto d = open_data(a.flood);
    FineBinAccumulator acc(d.header.pixel_count);
    const auto total = for_each_cycle(d, [&](std::vector<HitRecord>& hits) { acc.add(hits); });
    if (total == 0) throw NoData(fmt::format("{} holds no hits", d.path.string()));
    auto cal = estimate_tdc_widths(acc, {a.min_counts, d.path.filename().string()});
    const auto prov = d.provenance();

    Outputs o(c.out_dir);
    std::string summary;
    std::size_t low = 0, none = 0;
    for (std::size_t p = 0; p < cal.pixel_count(); ++p) {
        low += (cal.flags[p] & kCalLowStats) != 0;
        none += (cal.flags[p] & kCalNoData) != 0;
    }

    std::optional<OffsetEstimate> est;
    if (a.offset_data) {
        if (a.offset_pairs.empty()) throw ConfigError("--offset-data needs --offset-pairs a:b,...");
        std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
        for (const auto& item : a.offset_pairs) {
            const auto colon = item.find(':');
            if (colon == std::string::npos) throw ConfigError(fmt::format("offset pair '{}' is not a:b", item));
            try {
                pairs.emplace_back(std::stoul(item.substr(0, colon)), std::stoul(item.substr(colon + 1)));
            } catch (const std::exception&) {
                throw ConfigError(fmt::format("offset pair '{}' is not a:b", item));
            }
        }
        const auto od = open_data(*a.offset_data);
        auto width_only = cal;
        width_only.offsets_enabled = false;
        const auto hists = histograms_from(od, pairs, HistogramSpec::symmetric(25000.0, kDefaultBinWidthPs, true),
                                           width_only);
        const auto peaks = measure_pair_peaks(hists, a.physical_delay, a.fit_half_range);
        est = estimate_offsets(peaks, a.reference, cal.pixel_count());
        set_offsets(cal, *est);
    }

    write_widths_csv(o.text(d.stem + ".tdc_widths.csv"), cal, prov);
    if (est) write_offsets_csv(o.text(d.stem + ".offsets.csv"), cal, prov);

    auto& rep = o.text(d.stem + ".calibration.txt");
    rep << prov << "\n";
    fmt::print(rep, "flood_file = {}\npixels = {}\nflood_hits = {}\nmean_counts_per_pixel = {}\n",
               d.path.filename().string(), cal.pixel_count(), total, num(double(total) / cal.pixel_count()));
    fmt::print(rep, "min_mean_counts_per_bin = {}\nlow_stats_pixels = {}\nno_data_pixels = {}\n", num(a.min_counts),
               low, none);
    if (est) {
        fmt::print(rep, "offset_reference_pixel = {}\nunresolved_offsets = {}\n", est->reference_pixel,
                   est->unresolved.size());
    }

    if (a.plot_pixel < cal.pixel_count()) {
        svg::Plot p;
        p.title = fmt::format("TDC fine-bin widths, pixel {}", a.plot_pixel);
        p.xlabel = "fine bin";
        p.ylabel = "width [ps]";
        svg::Series s{"estimated", {}, {}, {}, svg::Style::errorbars, "#1f77b4"};
        svg::Series nominal{"nominal", {0.0, double(kFineBins - 1)}, {kNominalBinPs, kNominalBinPs}, {},
                            svg::Style::line, "#999999"};
        const auto w = cal.widths.widths(a.plot_pixel);
        for (unsigned i = 0; i < kFineBins; ++i) {
            s.x.push_back(i);
            s.y.push_back(w[i]);
            const double rel = cal.relative_error(a.plot_pixel, i);
            s.yerr.push_back(std::isfinite(rel) ? rel * w[i] : 0.0);
        }
        p.series = {s, nominal};
        o.plot(fmt::format("{}.tdc_widths_px{}.svg", d.stem, a.plot_pixel), p, prov);
    }
    fmt::print(out, "{}\ncalibrated {} pixels from {} flood hits ({} low-statistics, {} without data)\n", prov,
               cal.pixel_count(), total, low, none);
    o.commit(out);
    return kExitOk;
}

struct DcrArgs {
    std::string data;
    std::optional<std::uint32_t> mask_top;
    std::optional<double> timeline;
    std::optional<double> budget;
};

int cmd_dcr(const Common& c, const DcrArgs& a, std::ostream& out)
{
    const auto d = open_data(a.data);
    const auto contents = read_file(d.path);
    if (contents.hits.empty()) throw NoData(fmt::format("{} holds no hits", d.path.string()));
    const auto counts = occupancy(contents.hits, d.header.pixel_count);
    const auto stats = dcr_stats(counts, duration_s(d.header));
    const auto defaults = d.scenario ? d.scenario->analysis : AnalysisDefaults{};
    const std::uint32_t top = a.mask_top.value_or(defaults.mask_top);
    double budget = a.budget.value_or(defaults.readout_budget_cps);
    if (!(budget > 0.0)) budget = readout_capacity_cps(d.header);
    const auto m = mask_hottest(stats, top, budget);
    const auto prov = d.provenance();

    std::vector<TimelinePoint> timeline;
    if (a.timeline) timeline = dcr_timeline(contents.hits, d.header, *a.timeline);

    Outputs o(c.out_dir);
    {
        auto& f = o.text(d.stem + ".dcr.csv");
        f << prov << "\npixel,counts,dcr_cps\n";
        for (std::size_t p = 0; p < counts.size(); ++p) fmt::print(f, "{},{},{}\n", p, counts[p], num(stats.cps[p]));
    }
    {
        auto& f = o.text(d.stem + ".dcr_sorted.csv");
        f << prov << "\nrank,pixel,dcr_cps,cumulative_cps,cumulative_share_of_budget\n";
        for (std::size_t i = 0; i < stats.order.size(); ++i)
            fmt::print(f, "{},{},{},{},{}\n", i + 1, stats.order[i], num(stats.sorted_cps[i]),
                       num(stats.cumulative_cps[i]), num(stats.cumulative_cps[i] / budget));
    }
    {
        auto& f = o.text(d.stem + ".dcr.txt");
        f << prov << "\n";
        fmt::print(f, "data_file = {}\nduration_s = {}\nmedian_dcr_cps = {}\ntotal_dcr_cps = {}\n",
                   d.path.filename().string(), num(duration_s(d.header)), num(stats.median_cps),
                   num(stats.total_cps));
        fmt::print(f, "readout_budget_cps = {}\ndark_share_of_budget = {}\n", num(budget), num(m.share_before));
        std::string masked;
        for (auto p : m.masked) masked += (masked.empty() ? "" : ",") + std::to_string(p);
        fmt::print(f, "masked_pixels = {}\n", masked);
        fmt::print(f, "masked throughput fraction: top {} pixels masked, dark share {:.4f}% -> {:.4f}% (factor {:.2f})\n",
                   top, 100.0 * m.share_before, 100.0 * m.share_after, m.reduction_factor);
    }
    {
        svg::Plot p;
        p.title = "Dark count rate per pixel";
        p.xlabel = "pixel";
        p.ylabel = "DCR [cps]";
        p.log_y = true;
        svg::Series s{"DCR", {}, {}, {}, svg::Style::points, "#1f77b4"};
        for (std::size_t i = 0; i < stats.cps.size(); ++i) {
            s.x.push_back(double(i));
            s.y.push_back(stats.cps[i]);
        }
        svg::Series med{fmt::format("median {:.0f} cps", stats.median_cps), {0.0, double(stats.cps.size() - 1)},
                        {stats.median_cps, stats.median_cps}, {}, svg::Style::line, "#d62728"};
        p.series = {s, med};
        o.plot(d.stem + ".dcr.svg", p, prov);

        svg::Plot q;
        q.title = "Cumulative dark throughput share (hottest first)";
        q.xlabel = "number of pixels";
        q.ylabel = "share of readout budget";
        q.log_y = true;
        svg::Series cum{"cumulative", {}, {}, {}, svg::Style::line, "#1f77b4"};
        for (std::size_t i = 0; i < stats.cumulative_cps.size(); ++i) {
            cum.x.push_back(double(i + 1));
            cum.y.push_back(stats.cumulative_cps[i] / budget);
        }
        q.series = {cum};
        o.plot(d.stem + ".dcr_sorted.svg", q, prov);
    }
    if (a.timeline) {
        auto& f = o.text(d.stem + ".dcr_timeline.csv");
        f << prov << "\nt_start_s,t_end_s,cycles,hits,median_dcr_cps\n";
        svg::Plot p;
        p.title = "Median DCR over time";
        p.xlabel = "time [s]";
        p.ylabel = "median DCR [cps]";
        svg::Series s{"median", {}, {}, {}, svg::Style::points, "#1f77b4"};
        for (const auto& t : timeline) {
            fmt::print(f, "{},{},{},{},{}\n", num(t.t_start_s), num(t.t_end_s), t.cycles, t.hits,
                       t.median_cps ? num(*t.median_cps) : "");
            if (t.median_cps) {
                s.x.push_back(0.5 * (t.t_start_s + t.t_end_s));
                s.y.push_back(*t.median_cps);
            }
        }
        p.series = {s};
        o.plot(d.stem + ".dcr_timeline.svg", p, prov);
    }
    fmt::print(out, "{}\nmedian DCR {:.1f} cps, total {:.0f} cps\n", prov, stats.median_cps, stats.total_cps);
    fmt::print(out, "masked throughput fraction: top {} pixels masked, dark share {:.4f}% -> {:.4f}% (factor {:.2f})\n",
               top, 100.0 * m.share_before, 100.0 * m.share_after, m.reduction_factor);
    o.commit(out);
    return kExitOk;
}

struct HistArgs {
    std::string data;
    std::vector<std::uint32_t> pair;
    std::optional<double> window;
    std::optional<double> bin;
    std::optional<std::string> cal;
    std::optional<std::string> offsets;
    std::optional<double> fit_center;
    double fit_half_range = 2500.0;
};

struct PreparedHist {
    DataSource d;
    DeltaTHistogram hist;
    std::string tag;
};

PreparedHist prepare_histogram(const HistArgs& a)
{
    PreparedHist ph{open_data(a.data), {}, {}};
    const auto defaults = ph.d.scenario ? ph.d.scenario->analysis : AnalysisDefaults{};
    std::uint32_t pa = defaults.pair[0], pb = defaults.pair[1];
    if (!a.pair.empty()) {
        if (a.pair.size() != 2) throw ConfigError("--pair takes two pixel indices");
        pa = a.pair[0];
        pb = a.pair[1];
    }
    if (pa == pb) throw ConfigError("--pair needs two different pixels");
    const auto cal = load_cal(a.cal, a.offsets);
    const double window = a.window.value_or(defaults.window_ps);
    const double bin = a.bin.value_or(defaults.bin_width_ps);
    if (!(bin > 0.0) || !(window > bin)) throw ConfigError("need 0 < --bin < --window");
    auto hists = histograms_from(ph.d, {{pa, pb}}, HistogramSpec::symmetric(window, bin, cal.has_value()), cal);
    ph.hist = std::move(hists.at(0));
    ph.tag = fmt::format("{}_{}", pa, pb);
    return ph;
}

int cmd_coincide(const Common& c, const HistArgs& a, std::ostream& out)
{
    const auto ph = prepare_histogram(a);
    const auto& h = ph.hist;
    const auto prov = ph.d.provenance();
    double center = 0.0;
    if (a.fit_center) {
        center = *a.fit_center;
    } else if (h.size()) {
        const auto it = std::max_element(h.counts.begin(), h.counts.end());
        center = h.center(std::size_t(it - h.counts.begin()));
    }
    const auto fit = fit_gaussian(h, FitOptions::around(center, a.fit_half_range));
    std::optional<PeakCounts> pc;
    if (fit) {
        try {
            pc = peak_counts(h, fit);
        } catch (const AnalysisError&) {
        }
    }

    Outputs o(c.out_dir);
    const std::string base = fmt::format("{}.hist_{}", ph.d.stem, ph.tag);
    write_histogram_csv(o.text(base + ".csv"), h, prov);
    auto& rep = o.text(base + ".fit.txt");
    rep << prov << "\n";
    fmt::print(rep, "pair = {},{}\nbin_width_ps = {}\ncalibrated = {}\ncycles = {}\nhits_a = {}\nhits_b = {}\n",
               h.pixel_a, h.pixel_b, num(h.bin_width_ps), h.calibrated, h.cycles, h.hits_a, h.hits_b);
    fmt::print(rep, "pairs_in_window = {}\nfit_center_guess_ps = {}\n", h.in_window(), num(center));
    write_fit(rep, "fit.", fit);
    if (pc) {
        write_counts(rep, "peak.", *pc);
        const auto p = ct_probability(*pc, h.hits_a, h.hits_b);
        fmt::print(rep, "peak.probability_percent = {} +- {}\n", num(p.percent), num(p.error_percent));
    }
    o.plot(base + ".svg", histogram_plot(h, {{&fit, "Gaussian fit"}}, fmt::format("Delta t histogram, pixels {} and {}", h.pixel_a, h.pixel_b)),
           prov);
    fmt::print(out, "{}\n{} pairs in window over {} cycles\n", prov, h.in_window(), h.cycles);
    if (fit)
        fmt::print(out, "peak: center {:.1f} +- {:.1f} ps, sigma {:.1f} ps, amplitude {:.1f}, background {:.2f}\n",
                   fit.params.center, fit.errors.center, fit.params.sigma, fit.params.amplitude, fit.params.background);
    o.commit(out);
    if (!fit) throw FitFailure("peak fit failed: " + fit.failure);
    return kExitOk;
}

struct HbtArgs {
    HistArgs hist;
    std::optional<double> expected_delay;
    double ct_center = 0.0;
    double template_sigma = 100.0;
};

int cmd_hbt(const Common& c, const HbtArgs& a, std::ostream& out)
{
    const auto ph = prepare_histogram(a.hist);
    const auto& h = ph.hist;
    const auto prov = ph.d.provenance();
    const auto defaults = ph.d.scenario ? ph.d.scenario->analysis : AnalysisDefaults{};
    JointOptions jo;
    jo.expected_delay_ps = a.expected_delay.value_or(defaults.expected_delay_ps);
    jo.fit_half_range_ps = a.hist.fit_half_range;
    jo.ct_center_ps = a.ct_center;
    jo.template_sigma_ps = a.template_sigma;
    const auto ja = analyze_joint(h, jo);

    Outputs o(c.out_dir);
    const std::string base = fmt::format("{}.hbt_{}", ph.d.stem, ph.tag);
    write_histogram_csv(o.text(base + ".csv"), h, prov);
    auto& rep = o.text(base + ".txt");
    rep << prov << "\n";
    fmt::print(rep, "pair = {},{}\nbin_width_ps = {}\ncalibrated = {}\ncycles = {}\nhits_a = {}\nhits_b = {}\n",
               h.pixel_a, h.pixel_b, num(h.bin_width_ps), h.calibrated, h.cycles, h.hits_a, h.hits_b);
    fmt::print(rep, "expected_delay_ps = {}\n", num(jo.expected_delay_ps));
    write_fit(rep, "ct.", ja.ct_fit);
    if (ja.ct_counts) write_counts(rep, "ct.", *ja.ct_counts);
    fmt::print(rep, "hbt.template_fit = {}\n", ja.hbt_template);
    write_fit(rep, "hbt.", ja.hbt_fit);
    if (ja.hbt_counts) write_counts(rep, "hbt.", *ja.hbt_counts);
    if (ja.hbt) {
        const auto& m = *ja.hbt;
        fmt::print(rep, "contrast = {} +- {}\ng2_peak = {}\npeak_shift_ps = {} +- {}\nmeasured_sigma_ps = {}\n",
                   num(m.contrast), num(m.contrast_error), num(m.g2_peak), num(m.peak_shift_ps),
                   num(m.shift_error_ps), num(m.measured_sigma_ps));
        fmt::print(rep, "significance = {}\nis_hbt = {}\n", num(m.significance), m.is_hbt);
    }
    o.plot(base + ".svg",
           histogram_plot(h, {{&ja.ct_fit, "CT fit"}, {&ja.hbt_fit, "HBT fit"}},
                          fmt::format("CT and HBT peaks, pixels {} and {}", h.pixel_a, h.pixel_b)),
           prov);
    fmt::print(out, "{}\n", prov);
    if (ja.hbt) {
        const auto& m = *ja.hbt;
        fmt::print(out, "contrast {:.4f} +- {:.4f} (g2 {:.4f}), shift {:.1f} +- {:.1f} ps, sigma {:.1f} ps, {:.1f} sigma, "
                        "is_hbt {}{}\n",
                   m.contrast, m.contrast_error, m.g2_peak, m.peak_shift_ps, m.shift_error_ps, m.measured_sigma_ps,
                   m.significance, m.is_hbt, ja.hbt_template ? " (fixed-shape fit)" : "");
    }
    o.commit(out);
    if (!ja.hbt) throw FitFailure("no HBT metrics: the fit at the expected delay failed");
    return kExitOk;
}

struct CtArgs {
    std::string data;
    std::optional<double> threshold;
    std::optional<std::int32_t> span;
    std::optional<double> window;
    std::optional<double> bin;
};

int cmd_ct_scan(const Common& c, const CtArgs& a, std::ostream& out)
{
    const auto d = open_data(a.data);
    const auto defaults = d.scenario ? d.scenario->analysis : AnalysisDefaults{};
    std::vector<std::uint64_t> counts(d.header.pixel_count, 0);
    const auto total = for_each_cycle(d, [&](std::vector<HitRecord>& hits) {
        for (const auto& h : hits) ++counts[h.pixel];
    });
    if (total == 0) throw NoData(fmt::format("{} holds no hits", d.path.string()));
    const auto stats = dcr_stats(counts, duration_s(d.header));
    const auto aggr = select_aggressors(stats, a.threshold.value_or(defaults.dcr_threshold_cps));
    CtScanOptions so;
    so.span = a.span.value_or(defaults.ct_span);
    if (so.span <= 0) throw ConfigError("--span must be positive");
    const auto spec = HistogramSpec::symmetric(a.window.value_or(defaults.window_ps), a.bin.value_or(defaults.bin_width_ps));
    const auto hists = histograms_from(d, ct_scan_pairs(aggr, so.span, d.header.pixel_count), spec, std::nullopt);
    const auto scan = ct_distance_scan(hists, aggr, so);
    std::optional<CtModelFit> model;
    try {
        model = fit_ct_model(scan);
    } catch (const AnalysisError&) {
    }
    const auto prov = d.provenance();

    Outputs o(c.out_dir);
    {
        auto& f = o.text(d.stem + ".ct_scan.csv");
        f << prov << "\ndistance,mean_percent,error_percent,min_percent,max_percent,pairs,model_percent\n";
        for (const auto& cd : scan.distances)
            fmt::print(f, "{},{},{},{},{},{},{}\n", cd.distance, num(cd.mean_percent), num(cd.error_percent),
                       num(cd.min_percent), num(cd.max_percent), cd.pairs,
                       model ? num(100.0 * std::pow(model->p1, cd.distance)) : "");
    }
    {
        auto& f = o.text(d.stem + ".ct_pairs.csv");
        f << prov << "\naggressor,victim,distance,center_ps,sigma_ps,peak_from,n_peak,n_bckg,coverage,i1,i2,"
                     "percent,error_percent\n";
        for (const auto& p : scan.pairs)
            fmt::print(f, "{},{},{},{},{},{},{},{},{},{},{},{},{}\n", p.aggressor, p.victim, p.distance,
                       num(p.center_ps), num(p.sigma_ps), p.peak_from, num(p.counts.n_peak), num(p.counts.n_bckg),
                       num(p.counts.coverage), p.i1, p.i2, num(p.probability.percent),
                       num(p.probability.error_percent));
    }
    {
        auto& f = o.text(d.stem + ".ct_scan.txt");
        f << prov << "\n";
        std::string list;
        for (auto p : scan.aggressors) list += (list.empty() ? "" : ",") + std::to_string(p);
        fmt::print(f, "aggressors = {}\nspan = {}\n", list, so.span);
        if (model) {
            std::string used;
            for (auto u : model->used) used += (used.empty() ? "" : ",") + std::to_string(u);
            fmt::print(f, "fitted_p1 = {} +- {}\nfit_distances = {}\n", num(model->p1), num(model->p1_error), used);
        } else {
            f << "fitted_p1 = n/a (no distance with a significant positive mean)\n";
        }
    }
    {
        svg::Plot p;
        p.title = "Average cross-talk probability vs distance";
        p.xlabel = "distance [pixels]";
        p.ylabel = "P_CT [%]";
        p.log_y = true;
        svg::Band band{"min-max over aggressors", {}, {}, {}, "#1f77b4"};
        svg::Series mean{"mean", {}, {}, {}, svg::Style::errorbars, "#1f77b4"};
        svg::Series fit{model ? fmt::format("{:.5f}^d", model->p1) : "", {}, {}, {}, svg::Style::line, "#d62728", false};
        for (const auto& cd : scan.distances) {
            band.x.push_back(cd.distance);
            band.lo.push_back(cd.min_percent);
            band.hi.push_back(cd.max_percent);
            mean.x.push_back(cd.distance);
            mean.y.push_back(cd.mean_percent);
            mean.yerr.push_back(cd.error_percent);
            if (model) {
                fit.x.push_back(cd.distance);
                fit.y.push_back(100.0 * std::pow(model->p1, cd.distance));
            }
        }
        p.bands = {band};
        p.series = {mean};
        if (model) p.series.push_back(fit);
        o.plot(d.stem + ".ct_scan.svg", p, prov);
    }
    fmt::print(out, "{}\n{} aggressors above threshold\n", prov, scan.aggressors.size());
    for (const auto& cd : scan.distances)
        if (cd.distance <= 3) fmt::print(out, "d={}: {:.4f} +- {:.4f} %\n", cd.distance, cd.mean_percent, cd.error_percent);
    if (model) fmt::print(out, "fitted p1 = {:.5f} +- {:.5f}\n", model->p1, model->p1_error);
    o.commit(out);
    return kExitOk;
}

int cmd_scaling(const Common& c, const ScenarioArgs& sa, const std::vector<double>& scales, std::ostream& out)
{
    const auto s = scenario_from(sa.file, sa.sets);
    for (double x : scales)
        if (!(x > 0.0)) throw ConfigError("--scales must be positive");
    const auto& ana = s.analysis;
    const auto spec = HistogramSpec::symmetric(ana.window_ps, ana.bin_width_ps);
    std::vector<ScalingRun> runs;
    for (double x : scales) {
        Scenario r = s;
        r.source.mean_rate_beam1 *= x;
        r.source.mean_rate_beam2 *= x;
        fmt::print(out, "scale {}: simulating {} cycles\n", x, r.acquisition.cycle_count);
        auto h = simulate_histograms(r, c.workers ? c.workers : s.workers, {{ana.pair[0], ana.pair[1]}}, spec);
        runs.push_back({x, std::move(h.at(0))});
    }
    JointOptions jo;
    jo.expected_delay_ps = ana.expected_delay_ps;
    jo.fit_half_range_ps = ana.fit_half_range_ps;
    const auto res = scaling_study(runs, jo);
    const auto prov = provenance_line(scenario_hash(s));

    Outputs o(c.out_dir);
    {
        auto& f = o.text(s.name + ".scaling.csv");
        f << prov << "\nscale,intensity,ct_excess,ct_error,hbt_excess,hbt_error,ct_used,hbt_used,note\n";
        for (const auto& p : res.points)
            fmt::print(f, "{},{},{},{},{},{},{},{},{}\n", num(p.scale), num(p.intensity), num(p.ct_excess),
                       num(p.ct_error), num(p.hbt_excess), num(p.hbt_error), p.ct_ok, p.hbt_ok, p.note);
    }
    {
        auto& f = o.text(s.name + ".scaling.txt");
        f << prov << "\n";
        if (res.ct) fmt::print(f, "slope_ct = {} +- {}\n", num(res.ct->slope), num(res.ct->error));
        else f << "slope_ct = n/a\n";
        if (res.hbt) fmt::print(f, "slope_hbt = {} +- {}\n", num(res.hbt->slope), num(res.hbt->error));
        else f << "slope_hbt = n/a\n";
        for (const auto& e : res.excluded) fmt::print(f, "excluded: {}\n", e);
    }
    {
        svg::Plot p;
        p.title = "Peak excess vs mean intensity";
        p.xlabel = "mean hits per pixel";
        p.ylabel = "excess coincidences";
        p.log_y = true;
        svg::Series ct{"CT", {}, {}, {}, svg::Style::errorbars, "#1f77b4"};
        svg::Series hbt{"HBT", {}, {}, {}, svg::Style::errorbars, "#d62728"};
        for (const auto& pt : res.points) {
            if (pt.ct_ok) {
                ct.x.push_back(pt.intensity);
                ct.y.push_back(pt.ct_excess);
                ct.yerr.push_back(pt.ct_error);
            }
            if (pt.hbt_ok) {
                hbt.x.push_back(pt.intensity);
                hbt.y.push_back(pt.hbt_excess);
                hbt.yerr.push_back(pt.hbt_error);
            }
        }
        auto line = [&](const std::optional<LogSlope>& l, const svg::Series& pts, std::string label, std::string color) {
            svg::Series s{std::move(label), {}, {}, {}, svg::Style::line, std::move(color)};
            if (!l || pts.x.empty()) return s;
            const auto [lo, hi] = std::minmax_element(pts.x.begin(), pts.x.end());
            for (double x : {*lo, *hi}) {
                s.x.push_back(x);
                s.y.push_back(std::exp(l->intercept + l->slope * std::log(x)));
            }
            return s;
        };
        p.series = {ct, hbt};
        if (res.ct) p.series.push_back(line(res.ct, ct, fmt::format("CT slope {:.2f}", res.ct->slope), "#1f77b4"));
        if (res.hbt) p.series.push_back(line(res.hbt, hbt, fmt::format("HBT slope {:.2f}", res.hbt->slope), "#d62728"));
        o.plot(s.name + ".scaling.svg", p, prov);
    }
    fmt::print(out, "{}\n", prov);
    if (res.ct) fmt::print(out, "slope_ct = {:.3f} +- {:.3f}\n", res.ct->slope, res.ct->error);
    if (res.hbt) fmt::print(out, "slope_hbt = {:.3f} +- {:.3f}\n", res.hbt->slope, res.hbt->error);
    o.commit(out);
    if (!res.ct || !res.hbt) throw FitFailure("slope fit failed for CT or HBT");
    return kExitOk;
}

int cmd_verify(const Common& c, const ScenarioArgs& sa, const std::vector<int>& only, bool quiet, std::ostream& out,
               std::ostream& err)
{
    const auto s = scenario_from(sa.file, sa.sets);
    for (int id : only)
        if (id < 1 || id > 10) throw ConfigError(fmt::format("no acceptance criterion {}", id));
    VerifyOptions vo;
    vo.workers = c.workers ? c.workers : s.workers;
    vo.only = only;
    if (!quiet) vo.log = [&err](const std::string& m) { err << m << "\n"; };
    vo.on_result = [&out](const CriterionResult& r) { out << format_result_line(r) << std::endl; };
    const auto prov = provenance_line(scenario_hash(s));
    out << prov << "\n";
    const auto results = run_acceptance(s, vo);
    int failed = 0;
    for (const auto& r : results) failed += !r.pass;
    fmt::print(out, "{} of {} criteria passed\n", results.size() - failed, results.size());

    Outputs o(c.out_dir);
    auto& f = o.text(s.name + ".verify.txt");
    f << prov << "\n";
    // no timings: the file must not change between identical runs
    for (auto r : results) fmt::print(f, "{:>2} {} {:<25} {}\n", r.id, r.pass ? "PASS" : "FAIL", r.title, r.detail);
    o.commit(out);
    return failed ? kExitAcceptance : kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"lsp2sim: LinoSPAD2-style SPAD array simulator and HBT / cross-talk analysis", "lsp2sim"};
    app.set_version_flag("--version", std::string(kToolVersion));
    app.require_subcommand(1);

    Common common;
    common.out_dir = default_out_dir().string();
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("-o,--out", common.out_dir, "output directory")
            ->envname(kOutputDirEnv)
            ->default_str("lsp2sim-out");
        sub->add_option("-j,--workers", common.workers, "worker threads (0: scenario value or all cores)");
    };
    ScenarioArgs sa;
    auto add_scenario = [&](CLI::App* sub, bool required) {
        auto* opt = sub->add_option("scenario", sa.file, "scenario file (key = value lines)");
        if (required) opt->required();
        sub->add_option("--set", sa.sets, "override a scenario key, e.g. --set acquisition.cycle_count=100");
    };

    // simulate
    auto* sim = app.add_subcommand("simulate", "simulate a scenario and write the data file with sidecars");
    add_common(sim);
    add_scenario(sim, true);
    std::optional<std::string> stem;
    bool no_truth = false;
    sim->add_option("--stem", stem, "output file stem (default: scenario name)");
    sim->add_flag("--no-truth", no_truth, "skip the truth CSV");

    // flood
    auto* flood = app.add_subcommand("flood", "simulate a flood-illumination dataset for TDC calibration");
    add_common(flood);
    add_scenario(flood, false);
    double flood_cps = 13000.0;
    bool flood_truth = false;
    flood->add_option("--cps-per-pixel", flood_cps, "flood rate per pixel")->default_val(13000.0);
    flood->add_flag("--truth", flood_truth, "also write the truth CSV");

    // calibrate
    auto* calib = app.add_subcommand("calibrate", "estimate TDC fine-bin widths (and optionally pixel offsets)");
    add_common(calib);
    CalibrateArgs ca;
    calib->add_option("flood", ca.flood, "flood data file")->required();
    calib->add_option("--min-counts", ca.min_counts, "flag pixels with fewer mean counts per bin")->default_val(100.0);
    calib->add_option("--offset-data", ca.offset_data, "data file with correlated pairs for offset estimation");
    calib->add_option("--offset-pairs", ca.offset_pairs, "pairs a:b measured in --offset-data")->delimiter(',');
    calib->add_option("--reference", ca.reference, "offset reference pixel")->default_val(0);
    calib->add_option("--physical-delay", ca.physical_delay, "true delay of the correlated peak, ps")->default_val(0.0);
    calib->add_option("--fit-half-range", ca.fit_half_range, "ps")->default_val(2500.0);
    calib->add_option("--plot-pixel", ca.plot_pixel, "pixel whose widths are plotted")->default_val(0);

    // dcr
    auto* dcr = app.add_subcommand("dcr", "dark count statistics, hot-pixel masking and timeline");
    add_common(dcr);
    DcrArgs da;
    dcr->add_option("data", da.data, "data file")->required();
    dcr->add_option("--mask-top", da.mask_top, "mask the N hottest pixels (default: scenario value, 14)");
    dcr->add_option("--timeline", da.timeline, "median DCR per slice of S seconds (S >= 1)");
    dcr->add_option("--budget", da.budget, "readout budget in cps (default: format capacity)");

    // coincide
    auto* coin = app.add_subcommand("coincide", "Delta t histogram of a pixel pair with a Gaussian peak fit");
    add_common(coin);
    HistArgs ha;
    auto add_hist = [](CLI::App* sub, HistArgs& h) {
        sub->add_option("data", h.data, "data file")->required();
        sub->add_option("--pair", h.pair, "pixels A B (t_B - t_A)")->expected(2);
        sub->add_option("--window", h.window, "half window, ps (default 25000)");
        sub->add_option("--bin", h.bin, "bin width, ps (default 3 nominal TDC bins)");
        sub->add_option("--cal", h.cal, "TDC widths CSV from `calibrate`");
        sub->add_option("--offsets", h.offsets, "pixel offsets CSV from `calibrate`");
        sub->add_option("--fit-half-range", h.fit_half_range, "ps")->default_val(2500.0);
    };
    add_hist(coin, ha);
    coin->add_option("--fit-center", ha.fit_center, "peak position guess, ps (default: highest bin)");

    // ct-scan
    auto* ct = app.add_subcommand("ct-scan", "cross-talk probability vs distance from hot aggressor pixels");
    add_common(ct);
    CtArgs cta;
    ct->add_option("data", cta.data, "dark data file")->required();
    ct->add_option("--dcr-threshold", cta.threshold, "aggressor DCR threshold, cps (default 4000)");
    ct->add_option("--span", cta.span, "victims on each side (default 20)");
    ct->add_option("--window", cta.window, "half window, ps");
    ct->add_option("--bin", cta.bin, "bin width, ps");

    // hbt
    auto* hbt = app.add_subcommand("hbt", "HBT contrast, g2 and peak shift for a pixel pair");
    add_common(hbt);
    HbtArgs hb;
    add_hist(hbt, hb.hist);
    hbt->add_option("--expected-delay", hb.expected_delay, "configured path delay, ps (default: scenario value)");
    hbt->add_option("--ct-center", hb.ct_center, "where to look for the CT peak, ps")->default_val(0.0);
    hbt->add_option("--template-sigma", hb.template_sigma, "sigma of the fixed-shape fallback fit, ps")
        ->default_val(100.0);

    // scaling
    auto* scal = app.add_subcommand("scaling", "CT and HBT excess vs intensity (simulated in memory)");
    add_common(scal);
    add_scenario(scal, true);
    std::vector<double> scales{1.0, 0.5, 0.25};
    scal->add_option("--scales", scales, "intensity scale factors")->delimiter(',');

    // verify
    auto* ver = app.add_subcommand("verify", "run the closed-loop acceptance suite");
    add_common(ver);
    add_scenario(ver, true);
    std::vector<int> only;
    bool quiet = false;
    ver->add_option("--only", only, "criterion numbers to run")->delimiter(',');
    ver->add_flag("-q,--quiet", quiet, "no progress messages");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*sim) return cmd_simulate(common, sa, stem, no_truth, out);
        if (*flood) return cmd_flood(common, sa, flood_cps, flood_truth, out);
        if (*calib) return cmd_calibrate(common, ca, out);
        if (*dcr) return cmd_dcr(common, da, out);
        if (*coin) return cmd_coincide(common, ha, out);
        if (*ct) return cmd_ct_scan(common, cta, out);
        if (*hbt) return cmd_hbt(common, hb, out);
        if (*scal) return cmd_scaling(common, sa, scales, out);
        if (*ver) return cmd_verify(common, sa, only, quiet, out, err);
    } catch (const NoData& e) {
        fmt::print(err, "no data: {}\n", e.what());
        return kExitData;
    } catch (const ConfigError& e) {
        fmt::print(err, "config error: {}\n", e.what());
        return kExitConfig;
    } catch (const FormatError& e) {
        fmt::print(err, "data error: {}\n", e.what());
        return kExitData;
    } catch (const CalibrationCoverageError& e) {
        fmt::print(err, "data error: {}\n", e.what());
        return kExitData;
    } catch (const FitFailure& e) {
        fmt::print(err, "fit failure: {}\n", e.what());
        return kExitFit;
    } catch (const AnalysisError& e) {
        fmt::print(err, "fit failure: {}\n", e.what());
        return kExitFit;
    } catch (const std::exception& e) {
        fmt::print(err, "error: {}\n", e.what());
        return kExitInternal;
    }
    return kExitInternal;
}

}  // namespace lsp2
