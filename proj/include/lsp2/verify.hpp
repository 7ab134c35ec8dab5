#pragma once

// Closed-loop acceptance checks: simulate, analyze, compare with what was
// injected. Shared by the acceptance test binary and `lsp2sim verify`.

#include "lsp2/analysis.hpp"
#include "lsp2/calibration.hpp"
#include "lsp2/histogram.hpp"
#include "lsp2/scenario.hpp"
#include "lsp2/simulation.hpp"

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace lsp2 {

/// HitRecords of one simulated cycle in file storage order.
std::vector<HitRecord> cycle_records(const CycleOutput& c);

/// Runs the scenario without writing files, handing each cycle's hits to
/// `sink` in cycle order. Returns the run report.
/// The scenario is materialized internally.
using CycleSink = std::function<void(const CycleOutput&, std::span<const HitRecord>)>;
RunReport run_in_memory(const Scenario& scenario, unsigned workers, const CycleSink& sink);

/// Cycles [first, first + count) only.
RunReport run_in_memory(const Scenario& scenario, std::uint32_t first, std::uint32_t count, unsigned workers,
                        const CycleSink& sink);

/// Histograms for the given pairs, accumulated over a simulated run.
std::vector<DeltaTHistogram> simulate_histograms(const Scenario& scenario, unsigned workers,
                                                 const std::vector<std::pair<std::uint32_t, std::uint32_t>>& pairs,
                                                 const HistogramSpec& spec, RunReport* report = nullptr);

/// Expected Delta t histogram of a thermal pair: 1 + pf exp(-2|t - D| / tau_f)
/// convolved with a Gaussian of sigma_ps, sampled on the raw 17.857 ps lattice
/// (triangular kernel from the quantization of both timestamps) and summed
/// into bins of `bin_width_ps` centered on multiples of the width. Values are
/// per-lattice-point expectations relative to a flat level of 1.
struct ContrastOracle {
    std::vector<double> centers;
    std::vector<double> values;
};
ContrastOracle thermal_peak_oracle(double delay_ps, double tau_f_ps, double pol_factor, double sigma_ps,
                                   double bin_width_ps, double lo_ps, double hi_ps);

/// Fit the oracle curve (scaled to `background` counts per bin) exactly like
/// measured data and return A / b.
double oracle_contrast(double delay_ps, double tau_f_ps, double pol_factor, double sigma_ps, double bin_width_ps,
                       double fit_half_range_ps, double background);

struct CriterionResult {
    int id = 0;
    std::string title;
    bool pass = false;
    std::string detail;
    double seconds = 0.0;
};

struct VerifyOptions {
    unsigned workers = 0;
    std::vector<int> only;  // empty: all criteria
    std::filesystem::path scratch_dir;  // for the file-based checks; temp dir if empty
    std::function<void(const CriterionResult&)> on_result;
    std::function<void(const std::string&)> log;
};

/// Runs acceptance criteria 1 to 10 using `base` (the paper-like scenario)
/// for seeds and detector defaults.
std::vector<CriterionResult> run_acceptance(const Scenario& base, const VerifyOptions& options);

std::string format_result_line(const CriterionResult& r);

// Property checks reused by the standalone property suite.
struct PropertyOutcome {
    bool pass = false;
    std::string detail;
};
PropertyOutcome check_mirror_antisymmetry(std::uint64_t seed);
PropertyOutcome check_fit_gradient(std::uint64_t seed, int points = 100, double rel_tol = 1e-5);
PropertyOutcome check_parallel_reproducibility(const Scenario& base, const std::filesystem::path& dir,
                                               unsigned workers);

}  // namespace lsp2
