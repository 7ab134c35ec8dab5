#include "lsp2/scenario.hpp"
#include "lsp2/simulation.hpp"
#include "lsp2/verify.hpp"

#include <gtest/gtest.h>

using namespace lsp2;

TEST(Scenario, TextRoundTrip)
{
    auto s = load_scenario(LSP2_SCENARIO_DIR "/paper.txt");
    const auto again = parse_scenario(to_text(s));
    EXPECT_EQ(to_text(again), to_text(s));
    EXPECT_EQ(scenario_hash(again), scenario_hash(s));
    EXPECT_EQ(scenario_hash(s).size(), 16u);
}

TEST(Scenario, AllShippedScenariosLoad)
{
    for (const char* n : {"paper", "paper_dark", "flood", "joint"}) {
        auto s = load_scenario(std::string(LSP2_SCENARIO_DIR) + "/" + n + ".txt");
        EXPECT_NO_THROW(s.materialize()) << n;
    }
}

TEST(Scenario, Errors)
{
    EXPECT_THROW(parse_scenario("detector.bogus = 1\n"), ConfigError);
    EXPECT_THROW(parse_scenario("detector.pde = lots\n"), ConfigError);
    EXPECT_THROW(parse_scenario("just some words\n"), ConfigError);
    EXPECT_THROW(parse_scenario("detector.pde = 1.5\n").validate(), ConfigError);
    EXPECT_THROW(load_scenario("/nonexistent/scenario.txt"), ConfigError);
}

TEST(Scenario, SetValueChangesHash)
{
    auto s = parse_scenario("seed = 3\n");
    const auto h0 = scenario_hash(s);
    set_scenario_value(s, "detector.ct_p1", "0.003");
    EXPECT_DOUBLE_EQ(s.detector.ct_p1, 0.003);
    EXPECT_NE(scenario_hash(s), h0);
}

TEST(Scenario, HotPixelList)
{
    const auto s = parse_scenario("detector.hot_pixels = 5:4500, 40:5646\n");
    ASSERT_EQ(s.detector.hot_pixels.size(), 2u);
    EXPECT_EQ(s.detector.hot_pixels[1].pixel, 40u);
    EXPECT_DOUBLE_EQ(s.detector.hot_pixels[1].cps, 5646.0);
}

TEST(Scenario, MaterializeIsDeterministic)
{
    auto a = parse_scenario("seed = 9\ndetector.tdc_widths = dirichlet:100\n");
    auto b = a;
    a.materialize();
    b.materialize();
    for (std::size_t p = 0; p < 512; p += 97)
        for (unsigned k = 0; k < kFineBins; ++k) ASSERT_EQ(a.detector.tdc_widths.widths(p)[k], b.detector.tdc_widths.widths(p)[k]);
}

TEST(Simulation, ZeroEverythingGivesEmptyPayload)
{
    auto s = parse_scenario(R"(source.rate_beam1_cps = 0
source.rate_beam2_cps = 0
detector.dcr_median_cps = 0
detector.hot_pixels =
acquisition.cycle_count = 5
)");
    const auto rep = run_in_memory(s, 1, [](const CycleOutput&, std::span<const HitRecord> hits) {
        EXPECT_TRUE(hits.empty());
    });
    EXPECT_EQ(rep.total_hits, 0u);
    EXPECT_EQ(rep.cycles, 5u);
}

TEST(Simulation, PaperOccupancyShape)
{
    // two humps around the beam centers, flat elsewhere apart from hot pixels
    auto s = load_scenario(LSP2_SCENARIO_DIR "/paper.txt");
    s.acquisition.cycle_count = 10;
    s.detector.hot_pixels.clear();
    std::vector<std::uint64_t> occ(512, 0);
    run_in_memory(s, 0, [&](const CycleOutput&, std::span<const HitRecord> hits) {
        for (const auto& h : hits) ++occ[h.pixel];
    });
    const auto peak = std::max_element(occ.begin(), occ.end()) - occ.begin();
    EXPECT_GE(peak, 169);
    EXPECT_LE(peak, 175);
    // beam pixels dominate the dark bulk by a wide margin
    EXPECT_GT(occ[172], 50 * occ[20] + 50);
    EXPECT_LT(occ[160], occ[172] / 20 + 10);
}

TEST(Simulation, CycleOrderAndWorkerIndependence)
{
    auto s = load_scenario(LSP2_SCENARIO_DIR "/paper.txt");
    s.acquisition.cycle_count = 6;
    std::vector<HitRecord> one, many;
    std::vector<std::uint32_t> order;
    run_in_memory(s, 1, [&](const CycleOutput& c, std::span<const HitRecord> h) {
        order.push_back(c.cycle);
        one.insert(one.end(), h.begin(), h.end());
    });
    run_in_memory(s, 4, [&](const CycleOutput&, std::span<const HitRecord> h) { many.insert(many.end(), h.begin(), h.end()); });
    EXPECT_EQ(one, many);
    EXPECT_EQ(order, (std::vector<std::uint32_t>{0, 1, 2, 3, 4, 5}));
}
