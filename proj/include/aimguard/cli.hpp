#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace aimguard::cli {

inline constexpr std::string_view kVersion = "0.1.0";

// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);  // args exclude the program name

}  // namespace aimguard::cli
