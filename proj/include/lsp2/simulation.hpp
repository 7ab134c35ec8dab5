#pragma once

#include "lsp2/detector.hpp"
#include "lsp2/scenario.hpp"
#include "lsp2/thermal.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace lsp2 {

/// Everything produced for one acquisition cycle.
struct CycleOutput {
    std::uint32_t cycle = 0;
    std::vector<TruthEvent> truth;  // avalanches only: beam photons, dark, then crosstalk
    CycleDetection detection;
    ArrivalStats arrivals;
    std::uint64_t photons_absorbed = 0;  // missed the sensor or failed PDE
};

/// A materialized scenario ready to simulate.
class Simulation {
public:
    /// `scenario` must already be materialized.
    explicit Simulation(Scenario scenario);

    const Scenario& scenario() const { return scenario_; }
    const Detector& detector() const { return detector_; }
    FileHeader header() const { return scenario_.file_header(); }

    CycleOutput simulate_cycle(std::uint32_t cycle) const;

    /// Simulates cycles [first, first + count) on `workers` threads and hands
    /// them to `sink` strictly in cycle order. The output does not depend on
    /// the worker count.
    void run(std::uint32_t first, std::uint32_t count, unsigned workers,
             const std::function<void(CycleOutput&&)>& sink) const;

    void run(unsigned workers, const std::function<void(CycleOutput&&)>& sink) const
    {
        run(0, scenario_.acquisition.cycle_count, workers, sink);
    }

private:
    Scenario scenario_;
    Detector detector_;
};

struct RunReport {
    std::string scenario_name;
    std::string scenario_hash;
    std::uint32_t cycles = 0;
    double duration_s = 0.0;
    std::vector<std::uint64_t> pixel_hits;
    std::uint64_t total_hits = 0;
    std::uint64_t photon_avalanches = 0;
    std::uint64_t dark_avalanches = 0;
    std::uint64_t crosstalk_avalanches = 0;
    std::uint64_t photons_absorbed = 0;
    std::uint64_t dropped_dead = 0;
    std::uint64_t dropped_overflow = 0;
    ArrivalStats arrivals;
    std::uint64_t file_bytes = 0;

    void add(const CycleOutput& c);
    double cap_bias_fraction() const
    {
        return arrivals.candidates ? double(arrivals.cap_exceeded) / double(arrivals.candidates) : 0.0;
    }
    std::string to_text() const;
};

/// Line-delimited truth records: cycle,index,kind,true_time_ps,parent,pixel,fate.
void write_truth_records(std::ostream& out, const CycleOutput& c);
inline constexpr std::string_view kTruthCsvHeader = "cycle,index,kind,true_time_ps,parent,pixel,fate";

struct RunOutputs {
    std::filesystem::path data_file;
    std::filesystem::path truth_file;
    std::filesystem::path report_file;
    std::filesystem::path scenario_file;
    RunReport report;
};

/// Simulate and write <dir>/<stem>.bin, .truth.csv, .report.txt and
/// .scenario.txt. Overflowing blocks are truncated by the detector and
/// counted in the report.
RunOutputs simulate_run(const Scenario& scenario, const std::filesystem::path& dir,
                        const std::string& stem, unsigned workers, bool write_truth = true);

unsigned resolve_workers(unsigned requested);

}  // namespace lsp2
