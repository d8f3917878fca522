// Command-line front end: synth / train / eval / register / match-partial /
// geodesic.  run_cli is the whole program minus main(), so tests can drive
// the tool in-process.
#pragma once

#include <string>
#include <vector>

namespace corrfield::cli {

// Runs one invocation.  `args` excludes the program name.  Returns the
// process exit code; never throws.
int run_cli(const std::vector<std::string>& args);

}  // namespace corrfield::cli
