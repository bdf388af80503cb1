#pragma once

namespace dynbp {

// What to do when a parent/child counting-number pair makes the message
// exponent c_p*c_c/(c_p+c_c) blow up because c_p+c_c == 0.
enum class DegeneratePolicy { error, fixed_exponent };

struct SolverOptions {
  int max_iterations = 500;
  double tolerance = 1e-6;     // max-abs belief change between sweeps
  double damping = 0.5;        // applied to messages in log domain; 0 = undamped
  double zero_floor = 1e-12;   // clamp for factor values and beliefs inside logs
  double message_floor = 1e-12;
  DegeneratePolicy degenerate_policy = DegeneratePolicy::error;
  double fixed_exponent = 0.5;
};

struct SolveResult {
  bool converged = false;
  int iterations = 0;
  double final_delta = 0.0;
};

}  // namespace dynbp
