#pragma once

#include <iosfwd>

namespace rttd::cli {

enum ExitCode : int { ok = 0, usage = 1, config_error = 2, malicious_found = 3 };

/// Entry point behind the `rttd` binary; writes tables to `out` and
/// diagnostics to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Applies RTTD_THREADS (0 or unset = OpenMP default).
void apply_thread_limit();

}  // namespace rttd::cli
