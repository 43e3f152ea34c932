#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace tdml::cli {

inline constexpr const char* kToolVersion = "1.0.0";

// Exit codes: 0 success, 1 runtime failure, 2 usage error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace tdml::cli
