#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace graphseq::cli {

enum ExitCode {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitIo = 3,
  kExitDivergence = 4,
};

// Runs `graphseq <subcommand> ...` in-process. args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err);

}  // namespace graphseq::cli
