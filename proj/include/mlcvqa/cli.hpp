#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace mlcvqa::cli {

/// Runs one subcommand. `args` excludes the program name. Returns the
/// process exit code: 0 on success, 1 on a runtime failure (an error JSON
/// is written to `err` and to `<out>/error.json`), 2 on a usage error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mlcvqa::cli
