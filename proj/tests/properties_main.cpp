// Randomized invariants: histogram mirror symmetry, analytic fit gradient
// against finite differences, and byte-identical output for any worker count.
//   lsp2_properties [seed]

#include "lsp2/verify.hpp"

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include <fmt/format.h>

int main(int argc, char** argv)
{
    const std::uint64_t seed = argc > 1 ? std::stoull(argv[1]) : 20231116;
    const auto dir = std::filesystem::temp_directory_path() / fmt::format("lsp2_properties_{}", seed);
    int failed = 0;
    auto report = [&](const char* name, const lsp2::PropertyOutcome& r) {
        std::cout << fmt::format("{} {:<24} {}\n", r.pass ? "PASS" : "FAIL", name, r.detail);
        failed += !r.pass;
    };
    try {
        for (std::uint64_t k = 0; k < 3; ++k) report("mirror antisymmetry", lsp2::check_mirror_antisymmetry(seed + k));
        report("fit gradient", lsp2::check_fit_gradient(seed, 100, 1e-5));
        const auto base = lsp2::load_scenario(LSP2_SCENARIO_DIR "/paper.txt");
        report("parallel reproducibility", lsp2::check_parallel_reproducibility(base, dir, 4));
    } catch (const std::exception& e) {
        std::cerr << "properties: " << e.what() << "\n";
        failed = 1;
    }
    std::filesystem::remove_all(dir);
    return failed ? EXIT_FAILURE : EXIT_SUCCESS;
}
