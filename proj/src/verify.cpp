#include "lsp2/verify.hpp"

#include "lsp2/errors.hpp"
#include "lsp2/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <numeric>
#include <optional>

#include <fmt/format.h>
#include <fmt/ranges.h>

namespace lsp2 {

std::vector<HitRecord> cycle_records(const CycleOutput& c)
{
    std::vector<HitRecord> out;
    out.reserve(c.detection.hits.size());
    for (const auto& h : c.detection.hits) out.push_back(h.record);
    return out;
}

RunReport run_in_memory(const Scenario& scenario, std::uint32_t first, std::uint32_t count, unsigned workers,
                        const CycleSink& sink)
{
    Scenario s = scenario;
    s.materialize();
    Simulation sim(s);
    RunReport rep;
    rep.scenario_name = s.name;
    rep.scenario_hash = scenario_hash(s);
    rep.duration_s = double(count) * s.acquisition.cycle_period_ns * 1e-9;
    rep.pixel_hits.assign(s.detector.pixel_count, 0);
    std::vector<HitRecord> recs;
    sim.run(first, count, workers, [&](CycleOutput&& c) {
        rep.add(c);
        recs.clear();
        for (const auto& h : c.detection.hits) recs.push_back(h.record);
        sink(c, recs);
    });
    return rep;
}

RunReport run_in_memory(const Scenario& scenario, unsigned workers, const CycleSink& sink)
{
    return run_in_memory(scenario, 0, scenario.acquisition.cycle_count, workers, sink);
}

std::vector<DeltaTHistogram> simulate_histograms(const Scenario& scenario, unsigned workers,
                                                 const std::vector<std::pair<std::uint32_t, std::uint32_t>>& pairs,
                                                 const HistogramSpec& spec, RunReport* report)
{
    CoincidenceAccumulator acc(pairs, spec);
    auto rep = run_in_memory(scenario, workers, [&](const CycleOutput&, std::span<const HitRecord> hits) {
        acc.add_cycle(hits);
    });
    if (report) *report = std::move(rep);
    return acc.take();
}

// ---- contrast oracle --------------------------------------------------------

namespace {

// exp(-2|x - D| / tau) convolved with N(0, sigma), Simpson over +-8 sigma.
double smeared_bunching(double x, double delay, double tau, double sigma)
{
    auto f = [&](double u) { return std::exp(-2.0 * std::abs(u - delay) / tau); };
    if (sigma <= 0.0) return f(x);
    constexpr int n = 640;  // even
    const double h = 16.0 * sigma / n;
    const double norm = 1.0 / (std::sqrt(2.0 * M_PI) * sigma);
    double acc = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double s = -8.0 * sigma + i * h;
        const double wgt = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        acc += wgt * norm * std::exp(-0.5 * s * s / (sigma * sigma)) * f(x - s);
    }
    return acc * h / 3.0;
}

}  // namespace

ContrastOracle thermal_peak_oracle(double delay_ps, double tau_f_ps, double pol_factor, double sigma_ps,
                                   double bin_width_ps, double lo_ps, double hi_ps)
{
    constexpr double q = kNominalBinPs;
    // triangular kernel of the lattice rounding, Simpson on [-1, 1]
    constexpr int nu = 40;
    auto lattice_value = [&](std::int64_t m) {
        double acc = 0.0;
        for (int i = 0; i <= nu; ++i) {
            const double u = -1.0 + 2.0 * i / nu;
            const double wgt = (i == 0 || i == nu) ? 1.0 : (i % 2 ? 4.0 : 2.0);
            acc += wgt * (1.0 - std::abs(u)) * smeared_bunching(double(m) * q + u * q, delay_ps, tau_f_ps, sigma_ps);
        }
        return 1.0 + pol_factor * acc * (2.0 / nu) / 3.0;
    };

    const auto j_lo = static_cast<std::int64_t>(std::ceil(lo_ps / bin_width_ps));
    const auto j_hi = static_cast<std::int64_t>(std::floor(hi_ps / bin_width_ps));
    ContrastOracle out;
    if (j_hi < j_lo) return out;
    std::map<std::int64_t, std::pair<double, int>> bins;
    const auto m_lo = static_cast<std::int64_t>(std::floor((double(j_lo) - 0.5) * bin_width_ps / q)) - 1;
    const auto m_hi = static_cast<std::int64_t>(std::ceil((double(j_hi) + 0.5) * bin_width_ps / q)) + 1;
    for (std::int64_t m = m_lo; m <= m_hi; ++m) {
        const auto j = std::llround(double(m) * q / bin_width_ps);
        if (j < j_lo || j > j_hi) continue;
        auto& b = bins[j];
        b.first += lattice_value(m);
        ++b.second;
    }
    for (const auto& [j, b] : bins) {
        if (b.second == 0) continue;
        out.centers.push_back(double(j) * bin_width_ps);
        out.values.push_back(b.first / b.second);
    }
    return out;
}

double oracle_contrast(double delay_ps, double tau_f_ps, double pol_factor, double sigma_ps, double bin_width_ps,
                       double fit_half_range_ps, double background)
{
    const auto o = thermal_peak_oracle(delay_ps, tau_f_ps, pol_factor, sigma_ps, bin_width_ps,
                                       delay_ps - fit_half_range_ps - bin_width_ps,
                                       delay_ps + fit_half_range_ps + bin_width_ps);
    std::vector<double> y(o.values.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = background * o.values[i];
    const auto fit = fit_gaussian(o.centers, y, bin_width_ps, FitOptions::around(delay_ps, fit_half_range_ps));
    if (!fit) throw AnalysisError("oracle fit failed: " + fit.failure);
    return fit.params.amplitude / fit.params.background;
}

// ---- property checks --------------------------------------------------------

PropertyOutcome check_mirror_antisymmetry(std::uint64_t seed)
{
    Rng rng(seed);
    std::vector<HitRecord> hits;
    for (std::uint32_t cycle = 0; cycle < 400; ++cycle) {
        for (int k = 0; k < 25; ++k) {
            const auto raw = std::uint32_t(rng.below(140 * 4000));
            hits.push_back({0, cycle, raw, std::nullopt});
            if (rng.bernoulli(0.5)) {
                const auto lag = std::llround(40.0 + 6.0 * rng.normal());
                hits.push_back({1, cycle, std::uint32_t(std::max<std::int64_t>(0, raw + lag)), std::nullopt});
            }
            hits.push_back({1, cycle, std::uint32_t(rng.below(140 * 4000)), std::nullopt});
        }
    }
    const auto spec = HistogramSpec::symmetric(5000.0, kDefaultBinWidthPs);
    const auto ab = delta_t_histogram(hits, 0, 1, spec);
    const auto ba = delta_t_histogram(hits, 1, 0, spec);
    const auto m = ab.mirrored();
    if (m.first_index != ba.first_index || m.counts != ba.counts || m.total_pairs != ba.total_pairs ||
        m.hits_a != ba.hits_a || m.hits_b != ba.hits_b)
        return {false, "H(b,a) differs from the mirror of H(a,b)"};

    const double lag_ps = 40.0 * kNominalBinPs;
    const auto fa = fit_gaussian(ab, FitOptions::around(lag_ps, 1500.0));
    const auto fb = fit_gaussian(ba, FitOptions::around(-lag_ps, 1500.0));
    if (!fa || !fb) return {false, "peak fit failed"};
    const double dmu = fa.params.center + fb.params.center;
    const double dsig = fa.params.sigma - fb.params.sigma;
    const double damp = (fa.params.amplitude - fb.params.amplitude) / fa.params.amplitude;
    const bool ok = std::abs(dmu) < 1e-3 && std::abs(dsig) < 1e-3 && std::abs(damp) < 1e-6;
    return {ok, fmt::format("bins={} pairs={} mu_ab={:.4f} mu_ba={:.4f} sum={:.2e}", ab.size(), ab.total_pairs,
                            fa.params.center, fb.params.center, dmu)};
}

PropertyOutcome check_fit_gradient(std::uint64_t seed, int points, double rel_tol)
{
    Rng rng(seed);
    const double w = kDefaultBinWidthPs;
    std::vector<double> t;
    for (int i = -60; i <= 60; ++i) t.push_back(i * w);
    double worst = 0.0;
    int checked = 0;
    for (int n = 0; n < points; ++n) {
        GaussianParams truth{50.0 + 1950.0 * rng.uniform(), -300.0 + 600.0 * rng.uniform(),
                             40.0 + 360.0 * rng.uniform(), 5.0 + 195.0 * rng.uniform()};
        std::vector<double> y(t.size());
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double mu = gaussian_model(truth, t[i]);
            y[i] = std::max(0.0, std::round(mu + std::sqrt(mu) * rng.normal()));
        }
        const auto wt = neyman_weights(y);
        GaussianParams p = truth;
        p.amplitude *= 0.8 + 0.4 * rng.uniform();
        p.center += 100.0 * (rng.uniform() - 0.5);
        p.sigma *= 0.8 + 0.4 * rng.uniform();
        p.background *= 0.8 + 0.4 * rng.uniform();

        const auto g = fit_objective_gradient(p, t, y, wt);
        const double loss = fit_objective(p, t, y, wt);
        std::array<double*, 4> field{&p.amplitude, &p.center, &p.sigma, &p.background};
        for (int k = 0; k < 4; ++k) {
            const double x0 = *field[k];
            const double h = 1e-3 * std::max(std::abs(x0), 1.0);
            auto at = [&](double x) {
                *field[k] = x;
                const double v = fit_objective(p, t, y, wt);
                *field[k] = x0;
                return v;
            };
            const double fd = (8.0 * (at(x0 + h) - at(x0 - h)) - (at(x0 + 2 * h) - at(x0 - 2 * h))) / (12.0 * h);
            const double scale = std::max(std::abs(g[k]), std::abs(fd));
            // components that vanish relative to the loss carry no information
            if (scale < 1e-9 * loss / std::max(std::abs(x0), 1.0)) continue;
            worst = std::max(worst, std::abs(g[k] - fd) / scale);
            ++checked;
        }
    }
    return {worst <= rel_tol, fmt::format("{} points, {} components, max rel error {:.2e} (tol {:.0e})", points,
                                          checked, worst, rel_tol)};
}

namespace {

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

PropertyOutcome check_parallel_reproducibility(const Scenario& base, const std::filesystem::path& dir, unsigned workers)
{
    Scenario s = base;
    s.acquisition.cycle_count = 12;
    s.materialize();
    const auto one = simulate_run(s, dir / "w1", "run", 1);
    const auto many = simulate_run(s, dir / "wn", "run", std::max(2u, workers));
    const std::array<std::pair<std::filesystem::path, std::filesystem::path>, 4> files{{
        {one.data_file, many.data_file},
        {one.truth_file, many.truth_file},
        {one.report_file, many.report_file},
        {one.scenario_file, many.scenario_file},
    }};
    std::uint64_t bytes = 0;
    for (const auto& [a, b] : files) {
        const auto x = slurp(a), y = slurp(b);
        if (x != y) return {false, fmt::format("{} differs between 1 and {} workers", a.filename().string(), workers)};
        bytes += x.size();
    }
    return {true, fmt::format("4 files, {} bytes identical at 1 and {} workers", bytes, std::max(2u, workers))};
}

// ---- acceptance suite -------------------------------------------------------

namespace {

using PairList = std::vector<std::pair<std::uint32_t, std::uint32_t>>;

constexpr std::uint32_t kCycles = 2000;
constexpr std::uint32_t kPooledRuns = 8;
constexpr std::array<std::uint32_t, 2> kJointPixels{173, 174};
constexpr double kJointRate = 1e6;
constexpr double kJointTau = 150.0;
constexpr double kJitter = 40.0;

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct JointRun {
    DeltaTHistogram hist;
    JointAnalysis ja;
};

class Suite {
public:
    Suite(const Scenario& base, const VerifyOptions& opt) : base_(base), opt_(opt)
    {
        workers_ = resolve_workers(opt.workers);
    }

    Outcome run(int id)
    {
        switch (id) {
        case 1: return codec();
        case 2: return calibration();
        case 3: return crosstalk();
        case 4: return dcr();
        case 5: return discrimination();
        case 6: return contrast();
        case 7: return coherence();
        case 8: return scaling();
        case 9: return null_hypotheses();
        case 10: return properties();
        }
        throw std::invalid_argument(fmt::format("no criterion {}", id));
    }

    std::filesystem::path scratch;

private:
    void log(const std::string& msg) const
    {
        if (opt_.log) opt_.log(msg);
    }

    // 1 -------------------------------------------------------------------
    Outcome codec()
    {
        Rng rng(base_.seed, 1, Stream::pixel);
        const std::uint64_t limit = kDefaultRawLimit;
        std::uint64_t bad = 0, words = 0;
        for (int i = 0; i < 1'000'000; ++i) {
            const auto pit = unsigned(rng.below(4));
            const auto raw = std::uint32_t(rng.below(limit));
            const auto w = encode_word(pit, raw);
            const auto d = decode_word(w);
            if (!d || d->pixel_in_tdc != pit || d->raw_timestamp != raw || !(w & kValidBit)) ++bad;
            ++words;
        }

        std::uint64_t file_words = 0, files_bad = 0;
        for (int f = 0; f < 4; ++f) {
            FileHeader h;
            h.block_len = 64;
            h.cycle_count = 64;
            std::vector<CycleBlocks> cycles;
            std::vector<HitRecord> expected;
            for (std::uint32_t c = 0; c < h.cycle_count; ++c) {
                CycleBlocks blocks(h.tdc_count);
                for (std::uint32_t tdc = 0; tdc < h.tdc_count; ++tdc) {
                    const auto n = rng.below(h.block_len + 1);
                    std::vector<std::pair<std::uint32_t, unsigned>> slots;
                    for (std::uint64_t k = 0; k < n; ++k)
                        slots.emplace_back(std::uint32_t(rng.below(limit)), unsigned(rng.below(4)));
                    std::sort(slots.begin(), slots.end());
                    for (const auto& [raw, pit] : slots) {
                        blocks[tdc].push_back(encode_word(pit, raw));
                        expected.push_back({tdc * 4 + pit, c, raw, std::nullopt});
                    }
                }
                cycles.push_back(std::move(blocks));
            }
            const auto path = scratch / fmt::format("codec{}.bin", f);
            const auto bytes = write_file(path, h, cycles);
            const auto back = read_file(path);
            const bool ok = bytes == h.file_bytes() && std::filesystem::file_size(path) == h.file_bytes() &&
                            back.header == h && back.hits == expected && back.corrupt_words == 0;
            if (!ok) ++files_bad;
            file_words += expected.size();
            std::filesystem::remove(path);
        }
        return {bad == 0 && files_bad == 0,
                fmt::format("{} word roundtrips, {} mismatches; {} words through 4 files, {} files differ", words, bad,
                            file_words, files_bad)};
    }

    // 2 -------------------------------------------------------------------
    Outcome calibration()
    {
        Scenario s = base_;
        s.name = base_.name + "-flood";
        s.source.mode = SourceMode::coherent;
        s.source.mean_rate_beam1 = 13000.0 * s.detector.pixel_count;
        s.source.mean_rate_beam2 = 0.0;
        s.detector.beam_profile = BeamProfile::flat;
        s.detector.pde = 1.0;
        s.detector.dcr_median_cps = 0.0;
        s.detector.hot_pixels.clear();
        s.detector.ct_p1 = 0.0;
        s.detector.ct_floor = 0.0;
        s.tdc_widths_spec = "dirichlet:200";
        s.offsets_spec = "zero";
        s.acquisition.cycle_count = kCycles;
        s.acquisition.block_len = 512;

        FineBinAccumulator acc(s.detector.pixel_count);
        const auto rep = run_in_memory(s, workers_, [&](const CycleOutput&, std::span<const HitRecord> hits) {
            acc.add(hits);
        });
        const auto cal = estimate_tdc_widths(acc, {.min_mean_counts_per_bin = 100.0, .source = "flood"});
        Scenario truth = s;
        truth.materialize();
        const auto& injected = truth.detector.tdc_widths;

        std::uint64_t bins = 0, within = 0, bad_sums = 0;
        for (std::uint32_t p = 0; p < s.detector.pixel_count; ++p) {
            const auto est = cal.widths.widths(p);
            const auto inj = injected.widths(p);
            double sum_est = 0.0, sum_inj = 0.0;
            for (unsigned b = 0; b < kFineBins; ++b) {
                sum_est += est[b];
                sum_inj += inj[b];
                const auto n = acc.count(p, b);
                ++bins;
                if (n == 0) continue;
                const double err = est[b] / std::sqrt(double(n));
                if (std::abs(est[b] - inj[b]) <= 4.0 * err) ++within;
            }
            if (sum_est != kCoarsePeriodPs || sum_inj != kCoarsePeriodPs) ++bad_sums;
        }
        const double frac = double(within) / double(bins);
        const double per_pixel = double(rep.total_hits) / s.detector.pixel_count;
        return {frac >= 0.95 && bad_sums == 0,
                fmt::format("{:.2f}% of {} bins within 4 sigma (need 95%), {:.0f} flood counts/pixel, {} rows not "
                            "summing to 2500 ps",
                            100.0 * frac, bins, per_pixel, bad_sums)};
    }

    // dark runs ------------------------------------------------------------
    Scenario dark_scenario() const
    {
        Scenario s = base_;
        s.name = base_.name + "-dark";
        s.source.mean_rate_beam1 = 0.0;
        s.source.mean_rate_beam2 = 0.0;
        s.acquisition.cycle_count = kCycles;
        s.acquisition.block_len = std::max<std::uint32_t>(s.acquisition.block_len, 1024);
        return s;
    }

    DcrStats dark_counts(const Scenario& s, std::vector<std::uint64_t>* counts_out = nullptr) const
    {
        std::vector<std::uint64_t> counts(s.detector.pixel_count, 0);
        const auto rep = run_in_memory(s, 0, kCycles, workers_, [&](const CycleOutput&, std::span<const HitRecord> hits) {
            for (const auto& h : hits) ++counts[h.pixel];
        });
        if (counts_out) *counts_out = counts;
        return dcr_stats(counts, rep.duration_s);
    }

    CtScanResult ct_scan(const Scenario& s, std::uint32_t runs)
    {
        const auto stats = dark_counts(s);
        const auto aggr = select_aggressors(stats, base_.analysis.dcr_threshold_cps);
        CtScanOptions so;
        so.span = base_.analysis.ct_span;
        so.fit_half_range_ps = base_.analysis.fit_half_range_ps;
        CoincidenceAccumulator acc(ct_scan_pairs(aggr, so.span, s.detector.pixel_count),
                                   HistogramSpec::symmetric(base_.analysis.window_ps, base_.analysis.bin_width_ps));
        for (std::uint32_t k = 0; k < runs; ++k) {
            log(fmt::format("  dark run {}/{}", k + 1, runs));
            run_in_memory(s, k * kCycles, kCycles, workers_, [&](const CycleOutput&, std::span<const HitRecord> hits) {
                acc.add_cycle(hits);
            });
        }
        return ct_distance_scan(acc.histograms(), aggr, so);
    }

    // 3 -------------------------------------------------------------------
    Outcome crosstalk()
    {
        const auto s = dark_scenario();
        const double p1 = s.detector.ct_p1;
        const auto scan = ct_scan(s, kPooledRuns);
        // the pure exponential is fitted on a run without the long-range floor
        auto pure_s = s;
        pure_s.detector.ct_floor = 0.0;
        const auto model = fit_ct_model(ct_scan(pure_s, 1));
        const auto& d1 = scan.distances.at(0);
        const bool d1_ok = std::abs(d1.mean_percent - 100.0 * p1) <= 3.0 * d1.error_percent;
        const bool p1_ok = model.p1 >= 0.0020 && model.p1 <= 0.0024;
        bool tail_ok = true;
        std::string tail;
        for (const auto& d : scan.distances) {
            if (d.distance < 10) continue;
            const double pure = 100.0 * std::pow(p1, d.distance);
            if (!(d.mean_percent > pure)) tail_ok = false;
            tail += fmt::format(" {}:{:.1e}", d.distance, d.mean_percent);
        }
        return {d1_ok && p1_ok && tail_ok,
                fmt::format("{} aggressors, {} runs of {} cycles; d=1 {:.4f} +- {:.4f}% (injected {:.2f}%), fitted "
                            "p1 (floor 0 run) {:.5f} +- {:.5f}, d>=10 means [%]{}",
                            scan.aggressors.size(), kPooledRuns, kCycles, d1.mean_percent, d1.error_percent,
                            100.0 * p1, model.p1, model.p1_error, tail)};
    }

    // 4 -------------------------------------------------------------------
    Outcome dcr()
    {
        const auto s = dark_scenario();
        const auto stats = dark_counts(s);
        const double budget = base_.analysis.readout_budget_cps > 0.0 ? base_.analysis.readout_budget_cps
                                                                      : readout_capacity_cps(s.file_header());
        const auto m = mask_hottest(stats, 14, budget);
        const double target = s.detector.dcr_median_cps;
        const bool med_ok = std::abs(stats.median_cps / target - 1.0) <= 0.10;
        return {med_ok && m.reduction_factor >= 5.0,
                fmt::format("median {:.1f} cps (target {:.0f} +- 10%), dark share {:.3f}% -> {:.3f}% masking 14, "
                            "factor {:.2f} (need >= 5)",
                            stats.median_cps, target, 100.0 * m.share_before, 100.0 * m.share_after,
                            m.reduction_factor)};
    }

    // joint runs -------------------------------------------------------------
    Scenario joint_scenario(double delay, bool polarized, SourceMode mode, double tau, double rate) const
    {
        Scenario s = base_;
        s.name = base_.name + "-joint";
        s.source.mode = mode;
        s.source.mean_rate_beam1 = rate;
        s.source.mean_rate_beam2 = rate;
        s.source.coherence_time_ps = tau;
        s.source.polarized = polarized;
        s.source.path_delay_beam2_ps = delay;
        s.detector.beam_centers = {std::int32_t(kJointPixels[0]), std::int32_t(kJointPixels[1])};
        s.detector.beam_sigma_px = 0.0;
        s.detector.beam_profile = BeamProfile::gaussian;
        s.detector.pde = 1.0;
        s.detector.jitter_sigma_ps = kJitter;
        s.detector.hot_pixels.clear();
        s.tdc_widths_spec = "nominal";
        s.offsets_spec = "zero";
        s.acquisition.cycle_count = kCycles;
        s.acquisition.block_len = 16384;
        return s;
    }

    JointRun joint(double delay, bool polarized, SourceMode mode = SourceMode::thermal, double tau = kJointTau,
                   double rate = kJointRate)
    {
        log(fmt::format("  joint run: delay {} ps, {}, {}, tau {} ps, {:.3g} cps/beam", delay,
                        mode == SourceMode::thermal ? "thermal" : "coherent",
                        polarized ? "polarized" : "unpolarized", tau, rate));
        const auto s = joint_scenario(delay, polarized, mode, tau, rate);
        const auto hists = simulate_histograms(s, workers_, {{kJointPixels[0], kJointPixels[1]}},
                                               HistogramSpec::symmetric(25000.0, kDefaultBinWidthPs));
        JointRun r;
        r.hist = hists.at(0);
        r.ja = analyze_joint(r.hist, {.expected_delay_ps = delay, .fit_half_range_ps = 2500.0});
        return r;
    }

    const JointRun& polarized_5000()
    {
        if (!pol5000_) pol5000_ = joint(5000.0, true);
        return *pol5000_;
    }

    // 5 -------------------------------------------------------------------
    Outcome discrimination()
    {
        bool ok = true;
        std::string detail;
        std::vector<std::pair<double, double>> ct_centers;
        for (const double delay : {5000.0, 10000.0, 15000.0}) {
            const JointRun r = delay == 5000.0 ? polarized_5000() : joint(delay, true);
            const auto& ja = r.ja;
            if (!ja.ct_fit || !ja.hbt || ja.hbt_template) {
                ok = false;
                detail += fmt::format(" D={}: no free CT/HBT fit;", delay);
                continue;
            }
            const auto& h = *ja.hbt;
            const bool shift_ok = std::abs(h.peak_shift_ps - delay) <= 3.0 * h.shift_error_ps;
            ok = ok && shift_ok;
            ct_centers.emplace_back(ja.ct_fit.params.center, ja.ct_fit.errors.center);
            detail += fmt::format(" D={:.0f}: shift {:.1f} +- {:.1f}, CT {:.1f} +- {:.1f};", delay, h.peak_shift_ps,
                                  h.shift_error_ps, ja.ct_fit.params.center, ja.ct_fit.errors.center);
        }
        double worst = 0.0;
        for (std::size_t i = 0; i < ct_centers.size(); ++i)
            for (std::size_t j = i + 1; j < ct_centers.size(); ++j) {
                const double z = std::abs(ct_centers[i].first - ct_centers[j].first) /
                                 std::hypot(ct_centers[i].second, ct_centers[j].second);
                worst = std::max(worst, z);
            }
        ok = ok && ct_centers.size() == 3 && worst <= 3.0;
        if (!detail.empty()) detail.pop_back();
        return {ok, fmt::format("{}; CT centers agree to {:.2f} sigma", detail.substr(1), worst)};
    }

    // 6 -------------------------------------------------------------------
    Outcome contrast()
    {
        const auto& pol = polarized_5000();
        const auto unp = joint(5000.0, false);
        if (!pol.ja.hbt || pol.ja.hbt_template || !unp.ja.hbt || unp.ja.hbt_template)
            return {false, "HBT peak fit failed"};
        const auto& hp = *pol.ja.hbt;
        const auto& hu = *unp.ja.hbt;
        const double oracle = oracle_contrast(5000.0, kJointTau, 1.0, std::sqrt(2.0) * kJitter, kDefaultBinWidthPs,
                                              2500.0, pol.ja.hbt_fit.params.background);
        const bool oracle_ok = std::abs(hp.contrast - oracle) <= 0.15;
        const double half_se = std::hypot(hu.contrast_error, 0.5 * hp.contrast_error);
        const bool half_ok = std::abs(hu.contrast - 0.5 * hp.contrast) <= 5.0 * half_se;
        const double eq = expected_contrast(kJitter, kJointTau, true);
        const bool eq_ok = std::abs(eq - 0.84) <= 0.005;
        return {oracle_ok && half_ok && eq_ok,
                fmt::format("polarized {:.4f} +- {:.4f} vs oracle {:.4f} (+-0.15); unpolarized {:.4f} +- {:.4f} vs "
                            "half {:.4f} ({:.2f} SE); expected_contrast(40,150,pol) = {:.4f}",
                            hp.contrast, hp.contrast_error, oracle, hu.contrast, hu.contrast_error, 0.5 * hp.contrast,
                            std::abs(hu.contrast - 0.5 * hp.contrast) / half_se, eq)};
    }

    // 7 -------------------------------------------------------------------
    Outcome coherence()
    {
        const double tc = coherence_time(700.0, 10.0);
        const bool two_sf = fmt::format("{:.2f}", tc) == "0.16";
        const bool close = std::abs(tc / 0.1633 - 1.0) <= 2e-3;
        const double c = expected_contrast(40.0, tc, false);
        return {two_sf && close && c < 0.01,
                fmt::format("coherence_time(700 nm, 10 nm) = {:.5f} ps; expected_contrast(40 ps, tau_c, unpolarized) "
                            "= {:.5f}",
                            tc, c)};
    }

    // 8 -------------------------------------------------------------------
    Outcome scaling()
    {
        constexpr double tau = 1000.0, delay = 10000.0;
        std::vector<ScalingRun> runs;
        for (const double scale : {1.0, 0.5, 0.25}) {
            auto r = joint(delay, true, SourceMode::thermal, tau, kJointRate * scale);
            runs.push_back({scale, std::move(r.hist)});
        }
        const auto res = scaling_study(runs, {.expected_delay_ps = delay, .fit_half_range_ps = 2500.0});
        if (!res.ct || !res.hbt) return {false, "slope fit failed: " + fmt::format("{}", fmt::join(res.excluded, "; "))};
        const bool ok = std::abs(res.ct->slope - 1.0) <= 0.15 && std::abs(res.hbt->slope - 2.0) <= 0.2;
        return {ok, fmt::format("slope_ct {:.3f} +- {:.3f} (1 +- 0.15), slope_hbt {:.3f} +- {:.3f} (2 +- 0.2), "
                                "{} excluded points",
                                res.ct->slope, res.ct->error, res.hbt->slope, res.hbt->error, res.excluded.size())};
    }

    // 9 -------------------------------------------------------------------
    Outcome null_hypotheses()
    {
        const auto coh = joint(5000.0, true, SourceMode::coherent);
        bool coh_ok = false;
        std::string coh_detail = "HBT fit failed";
        if (coh.ja.hbt) {
            const auto& h = *coh.ja.hbt;
            coh_ok = std::abs(h.contrast) <= 3.0 * h.contrast_error && !h.is_hbt;
            coh_detail = fmt::format("coherent contrast {:.4f} +- {:.4f} ({}), is_hbt={}", h.contrast, h.contrast_error,
                                     coh.ja.hbt_template ? "template fit" : "free fit", h.is_hbt);
        }

        auto s = dark_scenario();
        s.detector.ct_p1 = 0.0;
        s.detector.ct_floor = 0.0;
        const auto scan = ct_scan(s, 1);
        double worst = 0.0;
        for (const auto& d : scan.distances)
            if (d.error_percent > 0.0) worst = std::max(worst, std::abs(d.mean_percent) / d.error_percent);
        const bool ct_ok = worst <= 3.0;
        return {coh_ok && ct_ok,
                fmt::format("{}; zero-CT run: largest |mean| / SE over d=1..{} is {:.2f}", coh_detail,
                            scan.distances.size(), worst)};
    }

    // 10 ------------------------------------------------------------------
    Outcome properties()
    {
        const auto mirror = check_mirror_antisymmetry(base_.seed);
        const auto grad = check_fit_gradient(base_.seed);
        const auto par = check_parallel_reproducibility(base_, scratch / "repro", std::max(4u, workers_));
        return {mirror.pass && grad.pass && par.pass,
                fmt::format("mirror: {} ({}); gradient: {} ({}); parallel: {} ({})", mirror.pass ? "ok" : "FAIL",
                            mirror.detail, grad.pass ? "ok" : "FAIL", grad.detail, par.pass ? "ok" : "FAIL",
                            par.detail)};
    }

    Scenario base_;
    VerifyOptions opt_;
    unsigned workers_ = 1;
    std::optional<JointRun> pol5000_;
};

constexpr std::array<const char*, 10> kTitles{
    "codec exactness",
    "TDC calibration recovery",
    "cross-talk probability",
    "DCR statistics",
    "HBT peak discrimination",
    "contrast consistency",
    "coherence formula",
    "intensity scaling",
    "null hypotheses",
    "property suites",
};

}  // namespace

std::vector<CriterionResult> run_acceptance(const Scenario& base, const VerifyOptions& options)
{
    Suite suite(base, options);
    const bool own_scratch = options.scratch_dir.empty();
    suite.scratch = own_scratch ? std::filesystem::temp_directory_path() /
                                      fmt::format("lsp2sim-verify-{}-{}", base.seed,
                                                  std::chrono::steady_clock::now().time_since_epoch().count())
                                : options.scratch_dir;
    std::filesystem::create_directories(suite.scratch);

    std::vector<CriterionResult> results;
    for (int id = 1; id <= 10; ++id) {
        if (!options.only.empty() && std::find(options.only.begin(), options.only.end(), id) == options.only.end())
            continue;
        CriterionResult r;
        r.id = id;
        r.title = kTitles[id - 1];
        if (options.log) options.log(fmt::format("criterion {}: {}", id, r.title));
        const auto t0 = std::chrono::steady_clock::now();
        try {
            const auto o = suite.run(id);
            r.pass = o.pass;
            r.detail = o.detail;
        } catch (const std::exception& e) {
            r.pass = false;
            r.detail = fmt::format("error: {}", e.what());
        }
        r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (options.on_result) options.on_result(r);
        results.push_back(std::move(r));
    }
    if (own_scratch) {
        std::error_code ec;
        std::filesystem::remove_all(suite.scratch, ec);
    }
    return results;
}

std::string format_result_line(const CriterionResult& r)
{
    return fmt::format("{:>2} {} {:<25} {} ({:.1f} s)", r.id, r.pass ? "PASS" : "FAIL", r.title, r.detail,
                       r.seconds);
}

}  // namespace lsp2
