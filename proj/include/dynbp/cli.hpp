#pragma once

namespace dynbp {

// Full command-line front end. Returns the process exit code:
//   0  success
//   1  model load or validation failure
//   2  a solver failed to converge (outputs are still written)
//   64 unknown flag / bad invocation (usage text on stderr)
int run_cli(int argc, const char* const* argv);

}  // namespace dynbp
