// Closed-loop acceptance run: one line per criterion, nonzero exit on any failure.
//   lsp2_acceptance [scenario] [criterion ...]

#include "lsp2/verify.hpp"

#include <cstdlib>
#include <iostream>
#include <string>

#include <fmt/format.h>

int main(int argc, char** argv)
{
    std::string path = LSP2_SCENARIO_DIR "/paper.txt";
    lsp2::VerifyOptions opt;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (!a.empty() && a.find_first_not_of("0123456789") == std::string::npos)
            opt.only.push_back(std::stoi(a));
        else
            path = a;
    }
    try {
        const auto base = lsp2::load_scenario(path);
        opt.log = [](const std::string& m) { std::cerr << m << "\n"; };
        opt.on_result = [](const lsp2::CriterionResult& r) {
            std::cout << lsp2::format_result_line(r) << std::endl;
        };
        const auto results = lsp2::run_acceptance(base, opt);
        int failed = 0;
        for (const auto& r : results) failed += !r.pass;
        std::cout << fmt::format("{} of {} criteria passed\n", results.size() - failed, results.size());
        return failed ? EXIT_FAILURE : EXIT_SUCCESS;
    } catch (const std::exception& e) {
        std::cerr << "acceptance: " << e.what() << "\n";
        return 2;
    }
}
