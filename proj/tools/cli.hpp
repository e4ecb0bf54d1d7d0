#pragma once

#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace redi::cli {

inline constexpr std::string_view kToolVersion = "redi-lab 0.1.0";

enum ExitCode : int { kOk = 0, kUsage = 2, kInfeasible = 3 };

/// Runs one command. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Lowercase hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);

}  // namespace redi::cli
