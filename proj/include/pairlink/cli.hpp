#pragma once

#include <string>
#include <vector>

namespace pairlink::cli {

// Exit codes: 0 success, 2 config error, 3 sync failure, 4 I/O or format
// error. args excludes the program name. Tests drive this in-process.
int run(std::vector<std::string> args);

} // namespace pairlink::cli
