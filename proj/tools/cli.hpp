#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace attnlip::cli {

inline constexpr const char* kToolName = "attn-lipcert";
inline constexpr const char* kToolVersion = "1.0.0";

// Stable process exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitIo = 1,
  kExitValidation = 2,
  kExitCapacity = 3,
  kExitDivergence = 4,
};

// Entry point shared by the executable and the tests. args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace attnlip::cli
