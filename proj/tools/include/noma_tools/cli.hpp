#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace noma {

// Exit codes of the command line front end.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitIo = 2;

// `args` excludes the program name.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cli_main(int argc, char** argv);

// Quick oracle and property checks; prints one line per check and returns
// the number of failures.
int run_selftest(std::ostream& out);

}  // namespace noma
