#include "lsp2/simulation.hpp"

#include "lsp2/errors.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <thread>

#include <fmt/format.h>
#include <fmt/ostream.h>

namespace lsp2 {

unsigned resolve_workers(unsigned requested)
{
    if (requested > 0) return requested;
    return std::max(1u, std::thread::hardware_concurrency());
}

Simulation::Simulation(Scenario scenario)
    : scenario_(std::move(scenario)), detector_(scenario_.detector)
{
    scenario_.validate();
}

CycleOutput Simulation::simulate_cycle(std::uint32_t cycle) const
{
    CycleOutput out;
    out.cycle = cycle;
    const double period = scenario_.acquisition.cycle_period_ps();
    const std::uint64_t seed = scenario_.detector.rng_seed;

    auto photons = generate_cycle_arrivals(scenario_.source, period, cycle, &out.arrivals);
    Rng pixel_rng(seed, cycle, Stream::pixel);
    std::vector<TruthEvent> landed;
    landed.reserve(photons.size());
    for (auto& ph : photons) {
        if (const auto pix = detector_.assign_pixel(ph, pixel_rng)) {
            ph.pixel = std::int32_t(*pix);
            landed.push_back(ph);
        } else {
            ++out.photons_absorbed;
        }
    }

    auto dark = detector_.generate_cycle_dark(period, cycle);
    out.truth.reserve(landed.size() + dark.size() + 16);
    std::merge(landed.begin(), landed.end(), dark.begin(), dark.end(), std::back_inserter(out.truth),
               [](const TruthEvent& a, const TruthEvent& b) { return a.true_time_ps < b.true_time_ps; });

    Rng ct_rng(seed, cycle, Stream::crosstalk);
    detector_.apply_crosstalk(out.truth, ct_rng);

    Rng jitter_rng(seed, cycle, Stream::jitter);
    out.detection = detector_.detect_and_quantize(out.truth, period, scenario_.acquisition.block_len,
                                                  scenario_.acquisition.pixels_per_tdc, jitter_rng);
    return out;
}

void Simulation::run(std::uint32_t first, std::uint32_t count, unsigned workers,
                     const std::function<void(CycleOutput&&)>& sink) const
{
    workers = resolve_workers(workers);
    if (workers == 1) {
        for (std::uint32_t c = first; c < first + count; ++c) sink(simulate_cycle(c));
        return;
    }
    const std::uint32_t batch = workers * 4;
    std::vector<CycleOutput> results;
    for (std::uint32_t start = first; start < first + count; start += batch) {
        const std::uint32_t n = std::min(batch, first + count - start);
        results.assign(n, CycleOutput{});
        std::atomic<std::uint32_t> next{0};
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < std::min<unsigned>(workers, n); ++w) {
            pool.emplace_back([&] {
                for (std::uint32_t i = next++; i < n; i = next++) results[i] = simulate_cycle(start + i);
            });
        }
        for (auto& t : pool) t.join();
        for (auto& r : results) sink(std::move(r));
    }
}

void RunReport::add(const CycleOutput& c)
{
    ++cycles;
    for (const auto& e : c.truth) {
        switch (e.kind) {
        case EventKind::photon_beam1:
        case EventKind::photon_beam2: ++photon_avalanches; break;
        case EventKind::dark: ++dark_avalanches; break;
        case EventKind::crosstalk: ++crosstalk_avalanches; break;
        }
    }
    for (const auto& h : c.detection.hits) {
        if (h.record.pixel >= pixel_hits.size()) pixel_hits.resize(h.record.pixel + 1, 0);
        ++pixel_hits[h.record.pixel];
    }
    total_hits += c.detection.hits.size();
    photons_absorbed += c.photons_absorbed;
    dropped_dead += c.detection.dropped_dead;
    dropped_overflow += c.detection.dropped_overflow;
    arrivals += c.arrivals;
}

std::string RunReport::to_text() const
{
    std::string out = provenance_line(scenario_hash) + "\n";
    auto kv = [&out](std::string_view k, const std::string& v) { out += fmt::format("{} = {}\n", k, v); };
    kv("scenario_name", scenario_name);
    kv("scenario_hash", scenario_hash);
    kv("tool_version", std::string(kToolVersion));
    kv("cycles", std::to_string(cycles));
    kv("duration_s", fmt::format("{}", duration_s));
    kv("total_hits", std::to_string(total_hits));
    kv("photon_avalanches", std::to_string(photon_avalanches));
    kv("dark_avalanches", std::to_string(dark_avalanches));
    kv("crosstalk_avalanches", std::to_string(crosstalk_avalanches));
    kv("photons_absorbed", std::to_string(photons_absorbed));
    kv("dropped_dead_time", std::to_string(dropped_dead));
    kv("dropped_overflow", std::to_string(dropped_overflow));
    kv("thinning_candidates", std::to_string(arrivals.candidates));
    kv("thinning_cap_exceeded", std::to_string(arrivals.cap_exceeded));
    kv("cap_bias_fraction", fmt::format("{:.3e}", cap_bias_fraction()));
    kv("file_bytes", std::to_string(file_bytes));
    std::string counts, rates;
    for (std::size_t p = 0; p < pixel_hits.size(); ++p) {
        if (p) {
            counts += ",";
            rates += ",";
        }
        counts += std::to_string(pixel_hits[p]);
        rates += fmt::format("{:.3f}", duration_s > 0 ? double(pixel_hits[p]) / duration_s : 0.0);
    }
    kv("pixel_hits", counts);
    kv("pixel_rates_cps", rates);
    return out;
}

void write_truth_records(std::ostream& out, const CycleOutput& c)
{
    for (std::size_t i = 0; i < c.truth.size(); ++i) {
        const auto& e = c.truth[i];
        fmt::print(out, "{},{},{},{:.3f},{},{},{}\n", c.cycle, i, to_string(e.kind), e.true_time_ps,
                   e.parent ? std::int64_t(*e.parent) : -1, e.pixel, to_string(c.detection.fate[i]));
    }
}

RunOutputs simulate_run(const Scenario& scenario, const std::filesystem::path& dir, const std::string& stem,
                        unsigned workers, bool write_truth)
{
    std::filesystem::create_directories(dir);
    RunOutputs out;
    out.data_file = dir / (stem + ".bin");
    out.truth_file = dir / (stem + ".truth.csv");
    out.report_file = dir / (stem + ".report.txt");
    out.scenario_file = dir / (stem + ".scenario.txt");

    Simulation sim(scenario);
    const auto hash = scenario_hash(scenario);
    {
        std::ofstream sc(out.scenario_file);
        sc << provenance_line(hash) << "\n" << to_text(scenario);
    }

    auto& report = out.report;
    report.scenario_name = scenario.name;
    report.scenario_hash = hash;
    report.duration_s = scenario.acquisition.duration_s();
    report.pixel_hits.assign(scenario.detector.pixel_count, 0);

    FileWriter writer(out.data_file, sim.header());
    std::ofstream truth;
    if (write_truth) {
        truth.open(out.truth_file);
        truth << provenance_line(hash) << "\n" << kTruthCsvHeader << "\n";
    }
    sim.run(workers, [&](CycleOutput&& c) {
        writer.write_cycle(c.detection.blocks);
        if (write_truth) write_truth_records(truth, c);
        report.add(c);
    });
    report.file_bytes = writer.finish();

    std::ofstream rep(out.report_file);
    rep << report.to_text();
    return out;
}

}  // namespace lsp2
