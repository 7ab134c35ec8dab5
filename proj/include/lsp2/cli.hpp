#pragma once

// lsp2sim command-line front end. Kept in a library so tests can drive it.

#include <ostream>

namespace lsp2 {

enum ExitCode : int {
    kExitOk = 0,
    kExitInternal = 1,
    kExitConfig = 2,
    kExitData = 3,
    kExitFit = 4,
    kExitAcceptance = 5,
};

/// Default output directory comes from this variable, else ./lsp2sim-out.
inline constexpr const char* kOutputDirEnv = "LSP2SIM_OUTPUT_DIR";

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace lsp2
