#pragma once

#include <string>
#include <vector>

namespace duc::cli {

// Runs one CLI invocation; args excludes the program name. Returns the
// process exit code: 0 success, 2 config error, 3 data error, 4 numerical
// failure.
int run(const std::vector<std::string>& args);

}  // namespace duc::cli
