#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace srf::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kParseFailure = 2,
  kDirectiveFailure = 3,
  kBackendFailure = 4,
};

/// Entry point of the `srf` tool; `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// SHA-256 of a byte string, lowercase hex.
std::string sha256_hex(const std::string& bytes);

}  // namespace srf::cli
