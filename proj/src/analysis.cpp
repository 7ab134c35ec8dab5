#include "lsp2/analysis.hpp"

#include "lsp2/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

#include <fmt/format.h>

namespace lsp2 {

namespace {

double median_of(std::vector<double> v)
{
    if (v.empty()) return 0.0;
    const std::size_t n = v.size();
    std::nth_element(v.begin(), v.begin() + std::ptrdiff_t(n / 2), v.end());
    double m = v[n / 2];
    if (n % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + std::ptrdiff_t(n / 2)));
    return m;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace

std::vector<std::uint64_t> occupancy(std::span<const HitRecord> hits, std::size_t pixel_count)
{
    std::vector<std::uint64_t> counts(pixel_count, 0);
    for (const auto& h : hits) {
        if (h.pixel >= pixel_count) throw std::out_of_range(fmt::format("hit on pixel {} beyond sensor", h.pixel));
        ++counts[h.pixel];
    }
    return counts;
}

DcrStats dcr_stats(std::span<const std::uint64_t> counts, double duration_s)
{
    if (!(duration_s > 0.0)) throw std::invalid_argument("DCR duration must be positive");
    DcrStats s;
    s.cps.resize(counts.size());
    for (std::size_t p = 0; p < counts.size(); ++p) s.cps[p] = double(counts[p]) / duration_s;
    s.median_cps = median_of(s.cps);
    s.order.resize(counts.size());
    std::iota(s.order.begin(), s.order.end(), 0u);
    std::stable_sort(s.order.begin(), s.order.end(), [&](auto a, auto b) { return s.cps[a] > s.cps[b]; });
    double acc = 0.0;
    for (const auto p : s.order) {
        s.sorted_cps.push_back(s.cps[p]);
        acc += s.cps[p];
        s.cumulative_cps.push_back(acc);
    }
    s.total_cps = acc;
    return s;
}

MaskingResult mask_hottest(const DcrStats& stats, std::uint32_t top_n, double budget_cps)
{
    if (!(budget_cps > 0.0)) throw std::invalid_argument("readout budget must be positive");
    MaskingResult m;
    m.budget_cps = budget_cps;
    const std::size_t n = std::min<std::size_t>(top_n, stats.order.size());
    m.masked.assign(stats.order.begin(), stats.order.begin() + std::ptrdiff_t(n));
    const double masked_cps = n ? stats.cumulative_cps[n - 1] : 0.0;
    m.share_before = stats.total_cps / budget_cps;
    m.share_after = (stats.total_cps - masked_cps) / budget_cps;
    m.reduction_factor = m.share_after > 0.0 ? m.share_before / m.share_after : std::numeric_limits<double>::infinity();
    return m;
}

double readout_capacity_cps(const FileHeader& header)
{
    return double(header.tdc_count) * double(header.block_len) / (double(header.cycle_period_ns) * 1e-9);
}

std::vector<TimelinePoint> dcr_timeline(std::span<const HitRecord> hits, const FileHeader& header, double slice_s)
{
    const double period_s = double(header.cycle_period_ns) * 1e-9;
    if (!(slice_s >= 1.0)) throw AnalysisError(fmt::format("timeline slice of {} s is shorter than 1 s", slice_s));
    const auto slice_cycles = std::max<std::uint32_t>(1, std::uint32_t(std::llround(slice_s / period_s)));
    const std::uint32_t n_slices = (header.cycle_count + slice_cycles - 1) / slice_cycles;

    std::vector<std::vector<std::uint64_t>> counts(n_slices, std::vector<std::uint64_t>(header.pixel_count, 0));
    std::vector<std::uint64_t> totals(n_slices, 0);
    for (const auto& h : hits) {
        const auto s = h.cycle / slice_cycles;
        if (s >= n_slices || h.pixel >= header.pixel_count) continue;
        ++counts[s][h.pixel];
        ++totals[s];
    }

    std::vector<TimelinePoint> out;
    for (std::uint32_t s = 0; s < n_slices; ++s) {
        TimelinePoint pt;
        const std::uint32_t first = s * slice_cycles;
        pt.cycles = std::min(slice_cycles, header.cycle_count - first);
        pt.t_start_s = double(first) * period_s;
        pt.t_end_s = double(first + pt.cycles) * period_s;
        pt.hits = totals[s];
        if (pt.hits > 0) pt.median_cps = dcr_stats(counts[s], double(pt.cycles) * period_s).median_cps;
        out.push_back(pt);
    }
    return out;
}

std::vector<std::uint32_t> select_aggressors(const DcrStats& stats, double threshold_cps)
{
    std::vector<std::uint32_t> out;
    for (std::uint32_t p = 0; p < stats.cps.size(); ++p)
        if (stats.cps[p] > threshold_cps) out.push_back(p);
    if (out.empty()) throw AnalysisError(fmt::format("no pixel has DCR above {} cps", threshold_cps));
    return out;
}

double PeakCounts::excess_error() const { return std::sqrt(std::max(n_peak, 0.0) + n_bckg_variance); }

namespace {

PeakCounts peak_counts_at(const DeltaTHistogram& hist, double mu, double sigma)
{
    if (!(sigma > 0.0) || !std::isfinite(mu)) throw AnalysisError("peak window needs a finite center and sigma > 0");
    PeakCounts pc;
    const double w = hist.bin_width_ps;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t i = 0; i < hist.size(); ++i) {
        const double c = hist.center(i);
        if (std::abs(c - mu) <= 2.0 * sigma) {
            pc.n_peak += double(hist.counts[i]);
            ++pc.peak_bins;
            lo = std::min(lo, c - 0.5 * w);
            hi = std::max(hi, c + 0.5 * w);
        }
    }
    if (pc.peak_bins == 0) throw AnalysisError("peak window contains no bins");
    pc.coverage = normal_cdf((hi - mu) / sigma) - normal_cdf((lo - mu) / sigma);

    auto sideband = [&](double center) -> std::optional<std::pair<double, std::size_t>> {
        if (center - 2.0 * sigma < hist.lo_edge() || center + 2.0 * sigma > hist.hi_edge()) return std::nullopt;
        double n = 0.0;
        std::size_t bins = 0;
        for (std::size_t i = 0; i < hist.size(); ++i) {
            if (std::abs(hist.center(i) - center) <= 2.0 * sigma) {
                n += double(hist.counts[i]);
                ++bins;
            }
        }
        if (bins == 0) return std::nullopt;
        return std::pair{n, bins};
    };
    const auto right = sideband(mu + 10.0 * sigma);
    const auto left = sideband(mu - 10.0 * sigma);
    if (!right && !left)
        throw AnalysisError(fmt::format("window too narrow for a background sideband 10 sigma from {:.1f} ps", mu));

    auto scaled = [&](const std::pair<double, std::size_t>& s, double& var) {
        const double k = double(pc.peak_bins) / double(s.second);
        var = s.first * k * k;
        return s.first * k;
    };
    double vr = 0.0, vl = 0.0;
    if (right && left) {
        pc.n_bckg = 0.5 * (scaled(*right, vr) + scaled(*left, vl));
        pc.n_bckg_variance = 0.25 * (vr + vl);
        pc.sideband_bins = right->second + left->second;
        pc.sideband = "both";
    } else if (right) {
        pc.n_bckg = scaled(*right, vr);
        pc.n_bckg_variance = vr;
        pc.sideband_bins = right->second;
        pc.sideband = "right";
    } else {
        pc.n_bckg = scaled(*left, vl);
        pc.n_bckg_variance = vl;
        pc.sideband_bins = left->second;
        pc.sideband = "left";
    }
    return pc;
}

}  // namespace

PeakCounts peak_counts(const DeltaTHistogram& hist, const GaussianFit& fit)
{
    if (!fit.converged) throw AnalysisError("peak counting needs a converged fit");
    return peak_counts_at(hist, fit.params.center, fit.params.sigma);
}

double ct_probability(double n_peak, double n_bckg, std::uint64_t i1, std::uint64_t i2)
{
    if (i1 + i2 == 0) throw std::invalid_argument("cross-talk probability with zero registered intensity");
    return (n_peak - n_bckg) / double(i1 + i2) * 100.0;
}

CtEstimate ct_probability(const PeakCounts& pc, std::uint64_t i1, std::uint64_t i2, bool correct_coverage)
{
    if (i1 + i2 == 0) throw std::invalid_argument("cross-talk probability with zero registered intensity");
    const double cov = correct_coverage && pc.coverage > 0.0 ? pc.coverage : 1.0;
    const double denom = double(i1 + i2) * cov;
    return {pc.excess() / denom * 100.0, pc.excess_error() / denom * 100.0};
}

std::vector<std::pair<std::uint32_t, std::uint32_t>> ct_scan_pairs(std::span<const std::uint32_t> aggressors,
                                                                   std::int32_t span, std::size_t pixel_count)
{
    std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
    for (const auto a : aggressors) {
        for (std::int32_t d = 1; d <= span; ++d) {
            for (const std::int32_t sgn : {-1, 1}) {
                const std::int64_t v = std::int64_t(a) + sgn * d;
                if (v < 0 || v >= std::int64_t(pixel_count)) continue;  // edge pixels: one side only
                out.emplace_back(a, std::uint32_t(v));
            }
        }
    }
    return out;
}

CtScanResult ct_distance_scan(std::span<const DeltaTHistogram> hists, std::span<const std::uint32_t> aggressors,
                              const CtScanOptions& opt)
{
    if (aggressors.empty()) throw AnalysisError("cross-talk scan without aggressors");
    std::map<std::pair<std::uint32_t, std::uint32_t>, const DeltaTHistogram*> by_pair;
    for (const auto& h : hists) by_pair[{h.pixel_a, h.pixel_b}] = &h;

    auto usable = [&](const GaussianFit& f) {
        return f.converged && f.errors.amplitude > 0.0 &&
               f.params.amplitude / f.errors.amplitude >= opt.min_fit_significance;
    };

    CtScanResult res;
    res.aggressors.assign(aggressors.begin(), aggressors.end());
    for (const auto a : aggressors) {
        // Peak shape from the nearest neighbour with the most significant fit.
        std::optional<GaussianFit> neighbour;
        for (const std::int64_t v : {std::int64_t(a) - 1, std::int64_t(a) + 1}) {
            if (v < 0) continue;
            const auto it = by_pair.find({a, std::uint32_t(v)});
            if (it == by_pair.end()) continue;
            auto f = fit_gaussian(*it->second, FitOptions::around(opt.default_center_ps, opt.fit_half_range_ps));
            if (!usable(f)) continue;
            if (!neighbour || f.params.amplitude / f.errors.amplitude >
                                  neighbour->params.amplitude / neighbour->errors.amplitude)
                neighbour = f;
        }
        const double guess = neighbour ? neighbour->params.center : opt.default_center_ps;

        for (std::int32_t d = 1; d <= opt.span; ++d) {
            for (const std::int32_t sgn : {-1, 1}) {
                const std::int64_t v = std::int64_t(a) + sgn * d;
                if (v < 0) continue;
                const auto it = by_pair.find({a, std::uint32_t(v)});
                if (it == by_pair.end()) continue;
                const auto& hist = *it->second;

                CtPairResult r;
                r.aggressor = a;
                r.victim = std::uint32_t(v);
                r.distance = d;
                r.i1 = hist.hits_a;
                r.i2 = hist.hits_b;
                const auto own = fit_gaussian(hist, FitOptions::around(guess, opt.fit_half_range_ps));
                if (usable(own)) {
                    r.center_ps = own.params.center;
                    r.sigma_ps = own.params.sigma;
                    r.peak_from = "pair";
                } else if (neighbour) {
                    r.center_ps = neighbour->params.center;
                    r.sigma_ps = neighbour->params.sigma;
                    r.peak_from = "neighbour";
                } else {
                    r.center_ps = opt.default_center_ps;
                    r.sigma_ps = opt.default_sigma_ps;
                    r.peak_from = "default";
                }
                r.counts = peak_counts_at(hist, r.center_ps, r.sigma_ps);
                if (r.i1 + r.i2 > 0) r.probability = ct_probability(r.counts, r.i1, r.i2);
                res.pairs.push_back(std::move(r));
            }
        }
    }

    for (std::int32_t d = 1; d <= opt.span; ++d) {
        CtDistance cd;
        cd.distance = d;
        double excess = 0.0, var = 0.0, intensity = 0.0;
        cd.min_percent = std::numeric_limits<double>::infinity();
        cd.max_percent = -std::numeric_limits<double>::infinity();
        for (const auto& r : res.pairs) {
            if (r.distance != d || r.i1 + r.i2 == 0) continue;
            const double cov = r.counts.coverage > 0.0 ? r.counts.coverage : 1.0;
            excess += r.counts.excess() / cov;
            var += (r.counts.excess_error() / cov) * (r.counts.excess_error() / cov);
            intensity += double(r.i1 + r.i2);
            cd.min_percent = std::min(cd.min_percent, r.probability.percent);
            cd.max_percent = std::max(cd.max_percent, r.probability.percent);
            ++cd.pairs;
        }
        if (cd.pairs == 0 || intensity == 0.0) {
            cd.min_percent = cd.max_percent = 0.0;
        } else {
            cd.mean_percent = excess / intensity * 100.0;
            cd.error_percent = std::sqrt(var) / intensity * 100.0;
        }
        res.distances.push_back(cd);
    }
    return res;
}

CtModelFit fit_ct_model(const CtScanResult& scan, double min_significance)
{
    double swdy = 0.0, swdd = 0.0;
    CtModelFit out;
    for (const auto& cd : scan.distances) {
        if (!(cd.mean_percent > 0.0) || !(cd.error_percent > 0.0)) continue;
        if (cd.mean_percent < min_significance * cd.error_percent) continue;
        const double w = (cd.mean_percent / cd.error_percent) * (cd.mean_percent / cd.error_percent);
        const double y = std::log(cd.mean_percent / 100.0);
        swdy += w * cd.distance * y;
        swdd += w * double(cd.distance) * cd.distance;
        out.used.push_back(cd.distance);
    }
    if (out.used.empty()) throw AnalysisError("no distance with a significant positive cross-talk probability");
    const double ln_p1 = swdy / swdd;
    out.p1 = std::exp(ln_p1);
    out.p1_error = out.p1 / std::sqrt(swdd);
    return out;
}

double coherence_time(double lambda_nm, double delta_lambda_nm)
{
    if (!(lambda_nm > 0.0) || !(delta_lambda_nm > 0.0))
        throw std::invalid_argument("wavelength and spectral width must be positive");
    // (lambda * 1e-9)^2 / (c * dlambda * 1e-9) seconds, then to ps
    return lambda_nm * lambda_nm * 1e-9 / (kSpeedOfLight * delta_lambda_nm) * 1e12;
}

double expected_contrast(double tau_det_ps, double tau_c_ps, bool polarized)
{
    if (!(tau_det_ps > 0.0) || !(tau_c_ps > 0.0)) throw std::invalid_argument("timescales must be positive");
    const double pol = polarized ? 1.0 : 0.5;
    const double x = tau_det_ps / tau_c_ps;
    if (x < 1e-3) return pol * (1.0 - 2.0 / 3.0 * x + x * x / 3.0 - 2.0 / 15.0 * x * x * x);
    return pol * (std::exp(-2.0 * x) - 1.0 + 2.0 * x) / (2.0 * x * x);
}

HbtMetrics hbt_metrics(const GaussianFit& fit, double expected_delay_ps, double reference_ps, double reference_error_ps)
{
    if (!fit.converged) throw AnalysisError("HBT metrics need a converged fit");
    const auto& p = fit.params;
    const auto& e = fit.errors;
    if (!(p.background > 0.0)) throw AnalysisError("contrast undefined for zero background");
    HbtMetrics m;
    m.contrast = p.amplitude / p.background;
    m.contrast_error = std::hypot(e.amplitude / p.background, p.amplitude * e.background / (p.background * p.background));
    m.g2_peak = 1.0 + m.contrast;
    m.peak_shift_ps = p.center - reference_ps;
    m.shift_error_ps = std::hypot(e.center, reference_error_ps);
    m.measured_sigma_ps = p.sigma;
    m.significance = e.amplitude > 0.0 ? p.amplitude / e.amplitude : 0.0;
    const double tol = std::max(3.0 * m.shift_error_ps, fit.bin_width_ps);
    m.is_hbt = std::abs(m.peak_shift_ps - expected_delay_ps) < tol && m.significance > 3.0;
    return m;
}

JointAnalysis analyze_joint(const DeltaTHistogram& hist, const JointOptions& opt)
{
    JointAnalysis ja;
    ja.ct_fit = fit_gaussian(hist, FitOptions::around(opt.ct_center_ps, opt.fit_half_range_ps));
    double ref_err = 0.0;
    ja.reference_ps = opt.ct_center_ps;
    if (ja.ct_fit) {
        ja.reference_ps = ja.ct_fit.params.center;
        ref_err = ja.ct_fit.errors.center;
        try {
            ja.ct_counts = peak_counts(hist, ja.ct_fit);
        } catch (const AnalysisError&) {
        }
    }

    const double where = ja.reference_ps + opt.expected_delay_ps;
    ja.hbt_fit = fit_gaussian(hist, FitOptions::around(where, opt.fit_half_range_ps));
    const bool significant = ja.hbt_fit && ja.hbt_fit.errors.amplitude > 0.0 &&
                             ja.hbt_fit.params.amplitude / ja.hbt_fit.errors.amplitude > 3.0;
    if (!significant) {
        FitOptions fo = FitOptions::around(where, opt.fit_half_range_ps);
        fo.fixed_center_ps = where;
        fo.fixed_sigma_ps = opt.template_sigma_ps;
        ja.hbt_fit = fit_gaussian(hist, fo);
        ja.hbt_template = true;
    }
    if (ja.hbt_fit) {
        try {
            ja.hbt_counts = peak_counts(hist, ja.hbt_fit);
        } catch (const AnalysisError&) {
        }
        try {
            ja.hbt = hbt_metrics(ja.hbt_fit, opt.expected_delay_ps, ja.reference_ps, ref_err);
        } catch (const AnalysisError&) {
        }
    }
    return ja;
}

LogSlope log_log_slope(std::span<const double> x, std::span<const double> y, std::span<const double> sigma_y)
{
    std::set<double> distinct(x.begin(), x.end());
    if (distinct.size() < 3) throw AnalysisError("log-log slope needs at least three distinct intensities");
    double s = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw AnalysisError("log-log slope needs positive values");
        const double rel = sigma_y[i] / y[i];
        const double w = rel > 0.0 ? 1.0 / (rel * rel) : 1.0;
        const double lx = std::log(x[i]), ly = std::log(y[i]);
        s += w;
        sx += w * lx;
        sy += w * ly;
        sxx += w * lx * lx;
        sxy += w * lx * ly;
    }
    const double delta = s * sxx - sx * sx;
    if (!(delta > 0.0)) throw AnalysisError("degenerate log-log regression");
    LogSlope out;
    out.slope = (s * sxy - sx * sy) / delta;
    out.intercept = (sxx * sy - sx * sxy) / delta;
    out.error = std::sqrt(s / delta);
    out.points = x.size();
    return out;
}

ScalingResult scaling_study(std::span<const ScalingRun> runs, const JointOptions& opt)
{
    std::set<double> scales;
    for (const auto& r : runs) scales.insert(r.scale);
    if (scales.size() < 3) throw AnalysisError("scaling study needs at least three distinct intensity scales");

    ScalingResult res;
    std::vector<double> cx, cy, ce, hx, hy, he;
    for (const auto& run : runs) {
        ScalingPoint pt;
        pt.scale = run.scale;
        pt.intensity = 0.5 * double(run.hist.hits_a + run.hist.hits_b);
        const auto ja = analyze_joint(run.hist, opt);
        if (ja.ct_fit && ja.ct_counts) {
            const double cov = ja.ct_counts->coverage;
            pt.ct_excess = ja.ct_counts->excess() / cov;
            pt.ct_error = ja.ct_counts->excess_error() / cov;
            pt.ct_ok = pt.ct_excess > 0.0;
        }
        if (!ja.hbt_template && ja.hbt_fit && ja.hbt_counts) {
            const double cov = ja.hbt_counts->coverage;
            pt.hbt_excess = ja.hbt_counts->excess() / cov;
            pt.hbt_error = ja.hbt_counts->excess_error() / cov;
            pt.hbt_ok = pt.hbt_excess > 0.0;
        }
        if (!pt.ct_ok) {
            pt.note += "ct excluded;";
            res.excluded.push_back(fmt::format("scale {}: CT peak fit failed or no excess", run.scale));
        }
        if (!pt.hbt_ok) {
            pt.note += "hbt excluded;";
            res.excluded.push_back(fmt::format("scale {}: HBT peak fit failed or no excess", run.scale));
        }
        if (pt.ct_ok) {
            cx.push_back(pt.intensity);
            cy.push_back(pt.ct_excess);
            ce.push_back(pt.ct_error);
        }
        if (pt.hbt_ok) {
            hx.push_back(pt.intensity);
            hy.push_back(pt.hbt_excess);
            he.push_back(pt.hbt_error);
        }
        res.points.push_back(pt);
    }
    try {
        res.ct = log_log_slope(cx, cy, ce);
    } catch (const AnalysisError& e) {
        res.excluded.push_back(fmt::format("CT slope: {}", e.what()));
    }
    try {
        res.hbt = log_log_slope(hx, hy, he);
    } catch (const AnalysisError& e) {
        res.excluded.push_back(fmt::format("HBT slope: {}", e.what()));
    }
    return res;
}

}  // namespace lsp2
