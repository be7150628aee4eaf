#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rectedit {

/// Version string recorded in provenance files.
const char *code_version();

/// Runs one command line (args[0] is the program name). Returns the process exit code:
/// 0 success, 2 config, 3 data, 4 external client, 5 internal. Failures print a single
/// `error: <code>: <message>` line to `err`.
int dispatch(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);
int dispatch(int argc, char **argv);

}  // namespace rectedit
