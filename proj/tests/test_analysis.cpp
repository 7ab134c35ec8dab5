#include "lsp2/analysis.hpp"
#include "lsp2/fit.hpp"
#include "lsp2/histogram.hpp"
#include "lsp2/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

using namespace lsp2;

namespace {

HitRecord hit(std::uint32_t pixel, std::uint32_t cycle, double t_ps)
{
    return HitRecord{pixel, cycle, 0, t_ps};
}

// Poisson(mean) by counting unit-rate exponential gaps.
double poisson(Rng& rng, double mean)
{
    if (mean > 50.0) return std::max(0.0, std::round(mean + std::sqrt(mean) * rng.normal()));
    double t = rng.exponential(1.0);
    int k = 0;
    while (t < mean) {
        t += rng.exponential(1.0);
        ++k;
    }
    return k;
}

DeltaTHistogram synthetic(const GaussianParams& p, double half_window, double width, std::uint64_t seed,
                          bool noise = true)
{
    auto h = DeltaTHistogram::empty(0, 1, HistogramSpec::symmetric(half_window, width, true));
    Rng rng(seed);
    for (std::size_t i = 0; i < h.size(); ++i) {
        const double m = gaussian_model(p, h.center(i));
        h.counts[i] = std::uint64_t(noise ? poisson(rng, m) : std::round(m));
    }
    h.hits_a = h.hits_b = 500'000;
    return h;
}

}  // namespace

// ---- histograms -------------------------------------------------------------

TEST(Histogram, SinglePair)
{
    const std::vector<HitRecord> hits{hit(0, 0, 100.0), hit(1, 0, 150.0)};
    const auto spec = HistogramSpec::symmetric(1000.0, 20.0, true);
    const auto h = delta_t_histogram(hits, 0, 1, spec);
    EXPECT_EQ(h.in_window(), 1u);
    for (std::size_t i = 0; i < h.size(); ++i)
        if (h.counts[i]) {
            EXPECT_NEAR(h.center(i), 50.0, 10.0);
        }
    EXPECT_EQ(h.total_pairs, 1u);
}

TEST(Histogram, DifferentCyclesDoNotPair)
{
    const std::vector<HitRecord> hits{hit(0, 0, 100.0), hit(1, 1, 150.0)};
    const auto h = delta_t_histogram(hits, 0, 1, HistogramSpec::symmetric(1000.0, 20.0, true));
    EXPECT_EQ(h.total_pairs, 0u);
}

TEST(Histogram, SelfPairRejected)
{
    const std::vector<HitRecord> hits{hit(3, 0, 1.0)};
    EXPECT_THROW(delta_t_histogram(hits, 3, 3), std::invalid_argument);
}

TEST(Histogram, MirrorExact)
{
    Rng rng(11);
    std::vector<HitRecord> hits;
    for (std::uint32_t c = 0; c < 50; ++c)
        for (int k = 0; k < 40; ++k)
            hits.push_back(HitRecord{std::uint32_t(rng.below(2)), c, std::uint32_t(rng.below(20000)), std::nullopt});
    const auto ab = delta_t_histogram(hits, 0, 1);
    const auto ba = delta_t_histogram(hits, 1, 0);
    const auto m = ab.mirrored();
    EXPECT_EQ(m.first_index, ba.first_index);
    EXPECT_EQ(m.counts, ba.counts);
    EXPECT_EQ(ab.total_pairs, ba.total_pairs);
}

TEST(Histogram, AccidentalRate)
{
    // two independent Poisson pixels: counts/bin = r1 r2 w T
    const double r1 = 2e6, r2 = 3e6, period_ps = 1e8, width = 100.0;
    const int cycles = 2000;
    Rng rng(12);
    std::vector<HitRecord> hits;
    for (int c = 0; c < cycles; ++c)
        for (std::uint32_t px : {0u, 1u}) {
            const double rate = (px == 0 ? r1 : r2) * 1e-12;
            for (double t = rng.exponential(rate); t < period_ps; t += rng.exponential(rate))
                hits.push_back(hit(px, std::uint32_t(c), t));
        }
    const auto h = delta_t_histogram(hits, 0, 1, HistogramSpec::symmetric(5000.0, width, true));
    const double mean = double(h.in_window()) / double(h.size());
    // edge loss: a window of +-5 ns in a 100 us cycle
    const double expect = r1 * r2 * width * 1e-12 * period_ps * 1e-12 * cycles * (1.0 - 2500.0 / period_ps);
    EXPECT_NEAR(mean, expect, 4.0 * std::sqrt(expect / double(h.size())));
}

TEST(Histogram, MergeAddsExposure)
{
    const auto spec = HistogramSpec::symmetric(1000.0, 20.0, true);
    auto a = delta_t_histogram(std::vector<HitRecord>{hit(0, 0, 0.0), hit(1, 0, 40.0)}, 0, 1, spec);
    const auto b = delta_t_histogram(std::vector<HitRecord>{hit(0, 0, 0.0), hit(1, 0, -40.0)}, 0, 1, spec);
    a.merge(b);
    EXPECT_EQ(a.in_window(), 2u);
    EXPECT_EQ(a.hits_a, 2u);
    EXPECT_EQ(a.total_pairs, 2u);
}

// ---- fitting ----------------------------------------------------------------

TEST(Fit, RecoversSyntheticGaussian)
{
    const GaussianParams truth{1000.0, 5000.0, 150.0, 50.0};
    const auto h = synthetic(truth, 8000.0, 20.0, 13);
    const auto fit = fit_gaussian(h, FitOptions::around(5000.0, 2500.0));
    ASSERT_TRUE(fit.converged) << fit.failure;
    EXPECT_NEAR(fit.params.amplitude, truth.amplitude, 3.0 * fit.errors.amplitude);
    EXPECT_NEAR(fit.params.center, truth.center, 3.0 * fit.errors.center);
    EXPECT_NEAR(fit.params.sigma, truth.sigma, 3.0 * fit.errors.sigma);
    EXPECT_NEAR(fit.params.background, truth.background, 3.0 * fit.errors.background);
    EXPECT_LT(fit.chi2_per_dof, 2.0);
}

TEST(Fit, FlatHistogramHasNoPeak)
{
    const auto h = synthetic({0.0, 0.0, 100.0, 200.0}, 5000.0, 20.0, 14);
    const auto fit = fit_gaussian(h);
    if (fit.converged)
        EXPECT_LT(std::abs(fit.params.amplitude), 3.0 * fit.errors.amplitude);
    else
        EXPECT_TRUE(std::isnan(fit.params.amplitude));
}

TEST(Fit, EmptyInputFails)
{
    const auto fit = fit_gaussian(std::span<const double>{}, std::span<const double>{}, 20.0);
    EXPECT_FALSE(fit.converged);
    EXPECT_FALSE(fit.failure.empty());
}

TEST(Fit, GradientMatchesFiniteDifference)
{
    const GaussianParams p{300.0, 40.0, 120.0, 20.0};
    std::vector<double> t, y;
    Rng rng(15);
    for (int i = -50; i < 50; ++i) {
        t.push_back(i * 10.0);
        y.push_back(gaussian_model(p, i * 10.0) + 5.0 * rng.normal());
    }
    const auto w = neyman_weights(y);
    const GaussianParams q{280.0, 55.0, 100.0, 25.0};
    const auto g = fit_objective_gradient(q, t, y, w);
    for (int k = 0; k < 4; ++k) {
        auto shifted = [&](double h) {
            GaussianParams r = q;
            double* f[] = {&r.amplitude, &r.center, &r.sigma, &r.background};
            *f[k] += h;
            return fit_objective(r, t, y, w);
        };
        const double h = 1e-4;
        const double fd = (shifted(h) - shifted(-h)) / (2 * h);
        EXPECT_NEAR(g[k], fd, 1e-5 * std::max(1.0, std::abs(fd))) << k;
    }
}

TEST(Fit, FixedCenterAndSigma)
{
    const GaussianParams truth{400.0, 0.0, 100.0, 100.0};
    const auto h = synthetic(truth, 3000.0, 20.0, 16);
    FitOptions o;
    o.fixed_center_ps = 0.0;
    o.fixed_sigma_ps = 100.0;
    const auto fit = fit_gaussian(h, o);
    ASSERT_TRUE(fit.converged);
    EXPECT_EQ(fit.params.center, 0.0);
    EXPECT_EQ(fit.params.sigma, 100.0);
    EXPECT_NEAR(fit.params.amplitude, 400.0, 3.0 * fit.errors.amplitude);
}

// ---- peak counting and cross-talk --------------------------------------------

TEST(PeakCounts, PureGaussianCoverage)
{
    const auto h = synthetic({1e5, 0.0, 200.0, 0.0}, 5000.0, 5.0, 0, false);
    const auto fit = fit_gaussian(h);
    ASSERT_TRUE(fit.converged);
    const auto pc = peak_counts(h, fit);
    const double total = double(h.in_window());
    EXPECT_NEAR(pc.n_peak / total, 0.9545, 0.01);
    EXPECT_NEAR(pc.coverage, pc.n_peak / total, 0.005);
    EXPECT_NEAR(pc.n_bckg, 0.0, 1e-9);
}

TEST(PeakCounts, FlatBackgroundBalances)
{
    const auto h = synthetic({0.0, 0.0, 200.0, 500.0}, 5000.0, 20.0, 17);
    GaussianFit fake;
    fake.converged = true;
    fake.params = {0.0, 0.0, 200.0, 500.0};
    fake.bin_width_ps = 20.0;
    const auto pc = peak_counts(h, fake);
    EXPECT_NEAR(pc.n_peak, pc.n_bckg, 3.0 * pc.excess_error());
}

TEST(PeakCounts, NarrowWindowThrows)
{
    const auto h = synthetic({100.0, 0.0, 200.0, 10.0}, 1000.0, 20.0, 18);
    GaussianFit fake;
    fake.converged = true;
    fake.params = {100.0, 0.0, 200.0, 10.0};
    fake.bin_width_ps = 20.0;
    EXPECT_THROW(peak_counts(h, fake), AnalysisError);
}

TEST(CtProbability, Formula)
{
    EXPECT_NEAR(ct_probability(120.0, 20.0, 500'000, 500'000), 0.01, 1e-12);
    EXPECT_EQ(ct_probability(77.0, 77.0, 10, 10), 0.0);
    EXPECT_THROW(ct_probability(1.0, 0.0, 0, 0), std::invalid_argument);
}

TEST(CtScan, PairsWithinSpan)
{
    const std::vector<std::uint32_t> agg{0, 100};
    const auto pairs = ct_scan_pairs(agg, 3, 512);
    // pixel 0 only has right-hand victims
    EXPECT_EQ(pairs.size(), 3u + 6u);
    for (const auto& [a, v] : pairs) EXPECT_LE(std::abs(int(a) - int(v)), 3);
}

TEST(CtModel, RecoversPureExponential)
{
    CtScanResult scan;
    for (int d = 1; d <= 5; ++d) {
        const double m = 100.0 * std::pow(0.0022, d);
        scan.distances.push_back({d, m, m * 0.05, m, m, 4});
    }
    const auto fit = fit_ct_model(scan);
    EXPECT_NEAR(fit.p1, 0.0022, 1e-9);
    EXPECT_EQ(fit.used.size(), 5u);
}

TEST(CtModel, NothingSignificantThrows)
{
    CtScanResult scan;
    scan.distances.push_back({1, 0.001, 0.01, 0, 0, 1});
    EXPECT_THROW(fit_ct_model(scan), AnalysisError);
}

// ---- DCR ------------------------------------------------------------------------

TEST(Dcr, EmptyIsZero)
{
    const auto occ = occupancy({}, 8);
    const auto s = dcr_stats(occ, 1.0);
    EXPECT_EQ(s.median_cps, 0.0);
    EXPECT_EQ(s.total_cps, 0.0);
    EXPECT_THROW(dcr_stats(occ, 0.0), std::invalid_argument);
}

TEST(Dcr, MaskingArithmetic)
{
    const std::vector<std::uint64_t> counts{10, 1000, 20, 500, 30};
    const auto s = dcr_stats(counts, 2.0);
    EXPECT_EQ(s.median_cps, 15.0);
    EXPECT_EQ(s.order.front(), 1u);
    const auto m = mask_hottest(s, 2, 781.0);
    EXPECT_EQ(m.masked, (std::vector<std::uint32_t>{1, 3}));
    EXPECT_NEAR(m.share_before, 780.0 / 781.0, 1e-12);
    EXPECT_NEAR(m.share_after, 30.0 / 781.0, 1e-12);
    EXPECT_NEAR(m.reduction_factor, 26.0, 1e-12);
}

TEST(Dcr, AggressorSelection)
{
    const std::vector<std::uint64_t> counts{10, 9000, 20};
    const auto s = dcr_stats(counts, 1.0);
    EXPECT_EQ(select_aggressors(s, 4000.0), std::vector<std::uint32_t>{1});
    EXPECT_THROW(select_aggressors(s, 1e5), AnalysisError);
}

TEST(Dcr, TimelineStepAndGaps)
{
    FileHeader h;
    h.pixel_count = 4;
    h.tdc_count = 1;
    h.cycle_count = 1000;  // 4 s of 4 ms cycles
    std::vector<HitRecord> hits;
    for (std::uint32_t c = 0; c < 1000; ++c) {
        if (c >= 250 && c < 500) continue;  // second slice empty
        const int per = c >= 500 ? 2 : 1;   // rate doubles in the second half
        for (std::uint32_t p = 0; p < 4; ++p)
            for (int k = 0; k < per; ++k) hits.push_back(HitRecord{p, c, 0, std::nullopt});
    }
    const auto tl = dcr_timeline(hits, h, 1.0);
    ASSERT_EQ(tl.size(), 4u);
    EXPECT_NEAR(*tl[0].median_cps, 250.0, 1e-9);
    EXPECT_FALSE(tl[1].median_cps.has_value());
    EXPECT_NEAR(*tl[3].median_cps, 500.0, 1e-9);
    EXPECT_THROW(dcr_timeline(hits, h, 0.5), AnalysisError);
}

TEST(Dcr, ReadoutCapacity)
{
    FileHeader h;
    h.block_len = 64;
    EXPECT_NEAR(readout_capacity_cps(h), 128.0 * 64.0 / 0.004, 1e-6);
}

// ---- HBT formulas --------------------------------------------------------------

TEST(Hbt, CoherenceTime)
{
    EXPECT_NEAR(coherence_time(700.0, 10.0), 0.16345, 5e-5);
    EXPECT_NEAR(coherence_time(700.0, 5.0), 2.0 * coherence_time(700.0, 10.0), 1e-12);
    EXPECT_NEAR(coherence_time(1400.0, 10.0), 4.0 * coherence_time(700.0, 10.0), 1e-12);
    EXPECT_NEAR(coherence_time(1400.0, 10.0), 0.653, 0.001);
    EXPECT_THROW(coherence_time(0.0, 1.0), std::invalid_argument);
}

TEST(Hbt, ExpectedContrast)
{
    EXPECT_NEAR(expected_contrast(40.0, 150.0, true), 0.84, 0.005);
    EXPECT_NEAR(expected_contrast(150.0, 150.0, true), 0.5 * (std::exp(-2.0) + 1.0), 1e-12);
    EXPECT_NEAR(expected_contrast(1e-9, 150.0, false), 0.5, 1e-9);
    // series branch joins the closed form smoothly
    EXPECT_NEAR(expected_contrast(0.999e-3, 1.0, true), expected_contrast(1.001e-3, 1.0, true), 1e-5);
}

TEST(Hbt, MetricsAndZeroBackground)
{
    GaussianFit f;
    f.converged = true;
    f.bin_width_ps = 53.57;
    f.params = {50.0, 5010.0, 60.0, 100.0};
    f.errors = {10.0, 8.0, 5.0, 1.0};
    const auto m = hbt_metrics(f, 5000.0, 0.0, 0.0);
    EXPECT_NEAR(m.contrast, 0.5, 1e-12);
    EXPECT_NEAR(m.g2_peak, 1.5, 1e-12);
    EXPECT_TRUE(m.is_hbt);
    f.params.background = 0.0;
    EXPECT_THROW(hbt_metrics(f, 5000.0), AnalysisError);
}

// ---- scaling ------------------------------------------------------------------

TEST(Scaling, LogSlope)
{
    const std::vector<double> x{1.0, 0.5, 0.25}, y{4.0, 1.0, 0.25}, e{0.04, 0.01, 0.0025};
    const auto s = log_log_slope(x, y, e);
    EXPECT_NEAR(s.slope, 2.0, 1e-12);
    const std::vector<double> same{1.0, 1.0, 1.0};
    EXPECT_THROW(log_log_slope(same, y, e), AnalysisError);
}
