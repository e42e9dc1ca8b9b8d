#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace adaudit::cli {

enum ExitCode { ok = 0, usage_error = 1, data_error = 2 };

// Runs one subcommand. Normal output goes to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace adaudit::cli
