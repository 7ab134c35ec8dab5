#include "lsp2/thermal.hpp"
#include "lsp2/errors.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace lsp2;

namespace {

struct Coincidences {
    double near = 0.0;   // |dt - center| <= half
    double flat = 0.0;   // per unit of width, from the sidebands
};

constexpr double kPeriod = 1e6;

// Beam1/beam2 true-time differences per cycle: counts in a window of width
// `width` centered at `center` and, for normalization, the mean count per
// `width` 40..60 ns away from any correlation. Beam1 hits too close to the
// cycle edges are skipped so both windows see the same exposure.
Coincidences count_pairs(const std::vector<TruthEvent>& events, double center, double width)
{
    std::vector<double> a, b;
    for (const auto& e : events) (e.kind == EventKind::photon_beam1 ? a : b).push_back(e.true_time_ps);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double near = 0.0, side = 0.0;
    const double side_lo = 40000.0, side_hi = 60000.0;
    std::size_t start = 0;
    for (double ta : a) {
        if (ta < side_hi || ta > kPeriod - side_hi) continue;
        while (start < b.size() && b[start] < ta - side_hi) ++start;
        for (std::size_t j = start; j < b.size() && b[j] <= ta + side_hi; ++j) {
            const double dt = b[j] - ta;
            if (std::abs(dt - center) <= 0.5 * width) near += 1.0;
            const double ad = std::abs(dt);
            if (ad >= side_lo && ad < side_hi) side += 1.0;
        }
    }
    return {near, side * width / (2.0 * (side_hi - side_lo))};
}

SourceConfig thermal(double rate, bool polarized, double delay)
{
    SourceConfig c;
    c.mode = SourceMode::thermal;
    c.mean_rate_beam1 = rate;
    c.mean_rate_beam2 = rate;
    c.coherence_time_ps = 150.0;
    c.polarized = polarized;
    c.path_delay_beam2_ps = delay;
    c.rng_seed = 1234;
    return c;
}

}  // namespace

TEST(Field, ZeroStepIsIdentity)
{
    Rng rng(1);
    const FieldState s = stationary_field(true, 10.0, rng);
    const FieldState t = advance_field(s, 0.0, 150.0, rng);
    EXPECT_EQ(t.amplitude, s.amplitude);
    EXPECT_EQ(t.last_sample_time_ps, s.last_sample_time_ps);
}

TEST(Field, NegativeStepThrows)
{
    Rng rng(1);
    const FieldState s = stationary_field(true, 10.0, rng);
    EXPECT_THROW(advance_field(s, -1.0, 150.0, rng), std::logic_error);
}

TEST(Field, LongStepForgetsState)
{
    Rng rng(2);
    const int n = 100'000;
    double cross = 0.0, norm_after = 0.0;
    for (int i = 0; i < n; ++i) {
        const FieldState s = stationary_field(true, 0.0, rng);
        const FieldState t = advance_field(s, 1e9, 150.0, rng);
        cross += std::real(s.amplitude[0] * std::conj(t.amplitude[0]));
        norm_after += std::norm(t.amplitude[0]);
    }
    // Re(z w*) has variance 1/2 for independent unit complex normals
    EXPECT_LT(std::abs(cross / n), 5.0 * std::sqrt(0.5 / n));
    EXPECT_NEAR(norm_after / n, 1.0, 5.0 / std::sqrt(n));
}

TEST(Field, AutocorrelationMatchesExponential)
{
    const double tau = 150.0, dt = 15.0;
    const int steps = 1'000'000, blocks = 100, lags[] = {1, 5, 10, 20};
    Rng rng(3);
    std::vector<std::complex<double>> e(steps);
    FieldState f = stationary_field(true, 0.0, rng);
    for (int i = 0; i < steps; ++i) {
        e[i] = f.amplitude[0];
        f = advance_field(f, dt, tau, rng);
    }
    for (int lag : lags) {
        // batch means for the statistical error
        std::vector<double> means;
        const int per = steps / blocks;
        for (int b = 0; b < blocks; ++b) {
            double s = 0.0;
            int n = 0;
            for (int i = b * per; i < (b + 1) * per - lag; ++i, ++n) s += std::real(e[i] * std::conj(e[i + lag]));
            means.push_back(s / n);
        }
        const double m = std::accumulate(means.begin(), means.end(), 0.0) / blocks;
        double var = 0.0;
        for (double x : means) var += (x - m) * (x - m);
        const double se = std::sqrt(var / (blocks - 1) / blocks);
        EXPECT_NEAR(m, std::exp(-lag * dt / tau), 3.0 * se) << "lag " << lag;
    }
}

TEST(Field, StationaryIntensityMoments)
{
    // exponential intensity: <I^2>/<I>^2 = 2; mean of two independent ones: 1.5
    Rng rng(4);
    const int n = 200'000;
    for (bool pol : {true, false}) {
        double s1 = 0.0, s2 = 0.0;
        for (int i = 0; i < n; ++i) {
            const double I = stationary_field(pol, 0.0, rng).intensity();
            s1 += I;
            s2 += I * I;
        }
        const double g2 = (s2 / n) / ((s1 / n) * (s1 / n));
        EXPECT_NEAR(s1 / n, 1.0, 0.01);
        EXPECT_NEAR(g2, pol ? 2.0 : 1.5, 0.05) << (pol ? "polarized" : "unpolarized");
    }
}

TEST(Source, ZeroSecondBeam)
{
    SourceConfig c = thermal(1e8, true, 0.0);
    c.mean_rate_beam2 = 0.0;
    const auto ev = generate_arrivals(c, 1e6, 5);
    EXPECT_FALSE(ev.empty());
    for (const auto& e : ev) EXPECT_EQ(e.kind, EventKind::photon_beam1);
}

TEST(Source, ValidateRejectsBadValues)
{
    SourceConfig c = thermal(1e6, true, 0.0);
    c.path_delay_beam2_ps = -1.0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = thermal(-1.0, true, 0.0);
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Source, Deterministic)
{
    const SourceConfig c = thermal(1e8, true, 500.0);
    const auto a = generate_cycle_arrivals(c, kPeriod, 3);
    const auto b = generate_cycle_arrivals(c, kPeriod, 3);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].true_time_ps, b[i].true_time_ps);
        EXPECT_EQ(a[i].kind, b[i].kind);
    }
    const auto other = generate_cycle_arrivals(c, kPeriod, 4);
    EXPECT_FALSE(other.size() == a.size() && other.front().true_time_ps == a.front().true_time_ps);
}

TEST(Source, SiegertZeroDelay)
{
    // bin width tau_c / 10; oracle is <I^2>/<I>^2 of the sampled field
    const SourceConfig c = thermal(1e9, true, 0.0);
    double near = 0.0, flat = 0.0, s1 = 0.0, s2 = 0.0;
    std::size_t samples = 0;
    for (std::uint32_t cyc = 0; cyc < 150; ++cyc) {
        std::vector<IntensitySample> trace;
        const auto ev = generate_cycle_arrivals(c, kPeriod, cyc, nullptr, &trace);
        const auto k = count_pairs(ev, 0.0, 15.0);
        near += k.near;
        flat += k.flat;
        for (const auto& s : trace) {
            s1 += s.intensity;
            s2 += s.intensity * s.intensity;
        }
        samples += trace.size();
    }
    const double g2 = near / flat;
    const double se = std::sqrt(near) / flat;
    const double oracle = (s2 / double(samples)) / std::pow(s1 / double(samples), 2);
    EXPECT_NEAR(g2, 2.0, 5.0 * se);
    EXPECT_NEAR(g2, oracle, 5.0 * se);
}

TEST(Source, DelayMovesPeak)
{
    const SourceConfig c = thermal(1e9, true, 5000.0);
    double at_delay = 0.0, at_zero = 0.0, flat = 0.0;
    for (std::uint32_t cyc = 0; cyc < 80; ++cyc) {
        const auto ev = generate_cycle_arrivals(c, kPeriod, cyc);
        const auto d = count_pairs(ev, 5000.0, 30.0);
        const auto z = count_pairs(ev, 0.0, 30.0);
        at_delay += d.near;
        at_zero += z.near;
        flat += d.flat;
    }
    EXPECT_GT(at_delay / flat, 1.7);
    EXPECT_NEAR(at_zero / flat, 1.0, 5.0 * std::sqrt(at_zero) / flat);
}

TEST(Source, UnpolarizedHalvesContrast)
{
    double contrast[2], err[2];
    for (int pol = 0; pol < 2; ++pol) {
        const SourceConfig c = thermal(1e9, pol == 1, 0.0);
        double near = 0.0, flat = 0.0;
        for (std::uint32_t cyc = 0; cyc < 150; ++cyc) {
            const auto k = count_pairs(generate_cycle_arrivals(c, kPeriod, cyc), 0.0, 15.0);
            near += k.near;
            flat += k.flat;
        }
        contrast[pol] = near / flat - 1.0;
        err[pol] = std::sqrt(near) / flat;
    }
    const double se = std::hypot(err[0], 0.5 * err[1]);
    EXPECT_NEAR(contrast[0], 0.5 * contrast[1], 5.0 * se);
}

TEST(Coherent, PoissonCount)
{
    const double rate = 2e6, period = 4e9;  // 4 ms
    double n = 0.0;
    for (std::uint32_t cyc = 0; cyc < 10; ++cyc)
        n += double(coherent_source_arrivals(rate, EventKind::photon_beam1, period, cyc, 77).size());
    const double expect = rate * 0.04;
    EXPECT_NEAR(n, expect, 5.0 * std::sqrt(expect));
}

TEST(Coherent, FlatCorrelation)
{
    SourceConfig c = thermal(1e9, true, 0.0);
    c.mode = SourceMode::coherent;
    double near = 0.0, flat = 0.0;
    for (std::uint32_t cyc = 0; cyc < 100; ++cyc) {
        const auto k = count_pairs(generate_cycle_arrivals(c, kPeriod, cyc), 0.0, 15.0);
        near += k.near;
        flat += k.flat;
    }
    EXPECT_NEAR(near / flat, 1.0, 3.0 * std::sqrt(near) / flat);
}
