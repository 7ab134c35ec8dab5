#include "lsp2/detector.hpp"
#include "lsp2/tdc.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <map>

using namespace lsp2;

namespace {

DetectorConfig quiet()
{
    DetectorConfig c;
    c.dcr_median_cps = 0.0;
    c.hot_pixels.clear();
    c.ct_p1 = 0.0;
    c.ct_floor = 0.0;
    c.jitter_sigma_ps = 0.0;
    c.pde = 1.0;
    return c;
}

TruthEvent photon(EventKind k = EventKind::photon_beam1)
{
    return TruthEvent{k, 1000.0, 0, std::nullopt, kNoPixel};
}

}  // namespace

TEST(Profile, DeltaProfileHitsCenter)
{
    DetectorConfig c = quiet();
    c.beam_sigma_px = 0.0;
    const Detector det(c);
    Rng rng(1);
    for (int i = 0; i < 1000; ++i) {
        EXPECT_EQ(det.assign_pixel(photon(), rng), 170u);
        EXPECT_EQ(det.assign_pixel(photon(EventKind::photon_beam2), rng), 174u);
    }
}

TEST(Profile, WeightTableMatchesClosedForm)
{
    DetectorConfig c = quiet();
    c.beam_sigma_px = 1.25;
    const Detector det(c);
    // discrete Gaussian truncated at 3 sigma: offsets -3..3
    double norm = 0.0;
    for (int k = -3; k <= 3; ++k) norm += std::exp(-0.5 * k * k / (1.25 * 1.25));
    for (int k = -3; k <= 3; ++k)
        EXPECT_NEAR(det.profile_weight(k), std::exp(-0.5 * k * k / (1.25 * 1.25)) / norm, 1e-12) << k;
    EXPECT_EQ(det.profile_weight(4), 0.0);
}

TEST(Profile, CenterFractionMonteCarlo)
{
    DetectorConfig c = quiet();
    const Detector det(c);
    Rng rng(2);
    const int n = 200'000;
    int center = 0;
    for (int i = 0; i < n; ++i)
        if (det.assign_pixel(photon(), rng) == 170u) ++center;
    const double p = det.profile_weight(0);
    EXPECT_NEAR(double(center) / n, p, 3.0 * std::sqrt(p * (1 - p) / n));
}

TEST(Profile, ZeroPdeDetectsNothing)
{
    DetectorConfig c = quiet();
    c.pde = 0.0;
    const Detector det(c);
    Rng rng(3);
    for (int i = 0; i < 10000; ++i) EXPECT_FALSE(det.assign_pixel(photon(), rng).has_value());
}

TEST(Dark, NoneWhenDisabled)
{
    const Detector det(quiet());
    for (std::uint32_t cyc = 0; cyc < 10; ++cyc) EXPECT_TRUE(det.generate_cycle_dark(4e9, cyc).empty());
}

TEST(Dark, HotPixelPoissonCount)
{
    DetectorConfig c = quiet();
    c.pixel_count = 4;
    c.beam_centers = {1, 2};
    c.hot_pixels = {{2, 8.6e4}};
    const Detector det(c);
    EXPECT_DOUBLE_EQ(det.dark_rates()[2], 8.6e4);
    std::uint64_t n = 0;
    for (std::uint32_t cyc = 0; cyc < 16000; ++cyc)  // 64 s
        for (const auto& e : det.generate_cycle_dark(4e9, cyc)) n += e.pixel == 2;
    const double expect = 5.504e6;
    EXPECT_NEAR(double(n), expect, 3.0 * std::sqrt(expect));
}

TEST(Dark, LogNormalMedian)
{
    DetectorConfig c = quiet();
    c.dcr_median_cps = 125.0;
    const Detector det(c);
    auto rates = det.dark_rates();
    std::nth_element(rates.begin(), rates.begin() + 256, rates.end());
    EXPECT_NEAR(rates[256], 125.0, 12.5);
}

TEST(Crosstalk, ProbabilityModel)
{
    DetectorConfig c = quiet();
    c.ct_p1 = 0.0022;
    c.ct_floor = 1e-6;
    EXPECT_NEAR(c.crosstalk_probability(1) * 100.0, 0.22, 0.001);
    // 0.0022^2 + 1e-6 = 5.84e-6, i.e. 5.84e-4 %
    EXPECT_NEAR(c.crosstalk_probability(2) * 100.0, 5.84e-4, 1e-9);
    EXPECT_EQ(c.crosstalk_probability(0), 0.0);
    EXPECT_EQ(c.crosstalk_probability(21), 0.0);
    EXPECT_NEAR(c.crosstalk_probability(20), 1e-6, 1e-12);
}

TEST(Crosstalk, DisabledLeavesEventsAlone)
{
    const Detector det(quiet());
    std::vector<TruthEvent> ev(100, TruthEvent{EventKind::dark, 10.0, 0, std::nullopt, 200});
    Rng rng(4);
    EXPECT_EQ(det.apply_crosstalk(ev, rng), 0u);
    EXPECT_EQ(ev.size(), 100u);
}

TEST(Crosstalk, VictimRatesMatchModel)
{
    DetectorConfig c = quiet();
    c.ct_p1 = 0.0022;
    c.ct_floor = 1e-4;  // large enough to measure at d = 5
    const Detector det(c);
    const int n = 1'000'000;
    std::vector<TruthEvent> ev(n, TruthEvent{EventKind::dark, 10.0, 0, std::nullopt, 256});
    Rng rng(5);
    det.apply_crosstalk(ev, rng);
    std::map<int, int> by_offset;
    for (std::size_t i = n; i < ev.size(); ++i) {
        EXPECT_EQ(ev[i].kind, EventKind::crosstalk);
        ASSERT_TRUE(ev[i].parent.has_value());
        EXPECT_LT(*ev[i].parent, std::uint32_t(n));
        ++by_offset[ev[i].pixel - 256];
    }
    for (int off : {-1, 1, 2, -5}) {
        const double p = c.crosstalk_probability(std::abs(off));
        EXPECT_NEAR(by_offset[off], n * p, 4.0 * std::sqrt(n * p * (1 - p))) << off;
    }
}

TEST(Quantize, NominalBins)
{
    DetectorConfig c = quiet();
    const Detector det(c);
    // edge of bin 2 is 35.7142857 ps
    EXPECT_EQ(det.quantize(0, 35.7143), 2u);
    EXPECT_EQ(det.quantize(0, 35.7142), 1u);
    EXPECT_EQ(det.quantize(0, 35.714), 1u);
    EXPECT_EQ(det.quantize(0, 2500.0), 140u);
    EXPECT_EQ(det.quantize(0, 0.0), 0u);
    EXPECT_EQ(det.quantize(7, 2500.0 * 3 + 17.86), 3u * 140u + 1u);
}

TEST(Quantize, JitterOnlyPairWidth)
{
    // two pixels hit at the same true time: difference spread is sqrt(2) * jitter
    DetectorConfig c = quiet();
    c.jitter_sigma_ps = 40.0;
    const Detector det(c);
    Rng rng(6);
    double s = 0.0, s2 = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double t = 1e6 + 1000.0 * i;
        std::vector<TruthEvent> ev{{EventKind::photon_beam1, t, 0, std::nullopt, 10},
                                   {EventKind::photon_beam2, t, 0, std::nullopt, 20}};
        const auto d = det.detect_and_quantize(ev, 4e9, 8, 4, rng);
        ASSERT_EQ(d.hits.size(), 2u);
        const auto& h0 = d.hits[0].record;
        const auto& h1 = d.hits[1].record;
        const double dt = (double(h1.raw_timestamp) - double(h0.raw_timestamp)) * kNominalBinPs *
                          (h1.pixel == 20 ? 1.0 : -1.0);
        s += dt;
        s2 += dt * dt;
    }
    const double sd = std::sqrt(s2 / n - (s / n) * (s / n));
    EXPECT_NEAR(sd, std::sqrt(2.0) * 40.0, 0.1 * std::sqrt(2.0) * 40.0);
}

TEST(Detect, BlockOverflowTruncates)
{
    DetectorConfig c = quiet();
    const Detector det(c);
    std::vector<TruthEvent> ev;
    for (int i = 0; i < 12; ++i) ev.push_back({EventKind::dark, 1000.0 * (i + 1), 0, std::nullopt, 0});
    Rng rng(7);
    const auto d = det.detect_and_quantize(ev, 4e9, 8, 4, rng);
    EXPECT_EQ(d.hits.size(), 8u);
    EXPECT_EQ(d.dropped_overflow, 4u);
    EXPECT_EQ(d.blocks[0].size(), 8u);
}

TEST(Detect, DeadTimeDropsFollowers)
{
    DetectorConfig c = quiet();
    c.dead_time_ps = 5000.0;
    const Detector det(c);
    std::vector<TruthEvent> ev{{EventKind::dark, 1000.0, 0, std::nullopt, 3},
                               {EventKind::dark, 3000.0, 0, std::nullopt, 3},
                               {EventKind::dark, 7000.0, 0, std::nullopt, 3}};
    Rng rng(8);
    const auto d = det.detect_and_quantize(ev, 4e9, 8, 4, rng);
    EXPECT_EQ(d.hits.size(), 2u);
    EXPECT_EQ(d.dropped_dead, 1u);
    EXPECT_EQ(d.fate[1], Fate::dead_time);
}

TEST(Tdc, DirichletRowsSumExactly)
{
    const auto w = TdcBinWidths::dirichlet(16, 200.0, 9);
    for (std::size_t p = 0; p < 16; ++p) {
        double s = 0.0;
        for (double x : w.widths(p)) s += x;
        EXPECT_EQ(s, 2500.0);
        EXPECT_EQ(w.edges(p)[140], 2500.0);
    }
}
