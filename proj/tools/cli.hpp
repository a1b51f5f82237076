#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace mtmc {

/// Runs one command. `args` excludes the program name. Returns 0 on success,
/// 1 on a usage error (synopsis written to `err`), 2 on a data error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mtmc
