#pragma once

#include <iosfwd>

namespace egal {

/// Entry point of the `egal` binary: synth, run, sweep and serve.
/// Returns the process exit code. CSV goes to `out`, diagnostics to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace egal
