#pragma once
#include <cstdint>
#include <memory>
#include <vector>

#include "dynbp/model.hpp"
#include "dynbp/region_graph.hpp"
#include "dynbp/solver_options.hpp"
#include "dynbp/validation.hpp"

namespace dynbp {

// One transition factor f(x_future | x_past), stored as a dense table over the
// concatenated scope (past variables, then future variables), last fastest.
// Past and future scopes index the same underlying variable set.
struct TemporalFactor {
  int id = 0;
  std::vector<int> past_scope;
  std::vector<int> future_scope;
  std::vector<double> values;
};

struct TemporalModel {
  std::vector<Variable> variables;
  std::vector<TemporalFactor> factors;
  RegionGraph regions;  // regions over variable ids; counting numbers filled

  int num_variables() const { return static_cast<int>(variables.size()); }
  int cardinality(int var_id) const { return variables[static_cast<size_t>(var_id)].cardinality; }
};

// Builds the two-level region graph from the union scopes of the factors.
TemporalModel make_temporal_model(std::vector<Variable> variables,
                                  std::vector<TemporalFactor> factors);

// Wraps the whole variable set in a single region (exact but exponential).
TemporalModel make_single_region_model(std::vector<Variable> variables,
                                       std::vector<TemporalFactor> factors);

ValidationReport validate_temporal_model(const TemporalModel& tm);

// Per region: a prior over its time-t states and a joint belief over
// (time-t, time-t+dt) state pairs; joint index = past * size + future.
struct PathBeliefStore {
  std::vector<std::vector<double>> prior;
  std::vector<std::vector<double>> path;
};

PathBeliefStore uniform_priors(const TemporalModel& tm);
PathBeliefStore point_priors(const TemporalModel& tm, const std::vector<int>& full_state);

// Sum over regions of c_r * <H_r + ln b_r(path) - ln b_r(prior)> under the
// region path beliefs; the variational objective the sweeps descend.
double path_free_energy(const TemporalModel& tm, const PathBeliefStore& store,
                        double zero_floor = 1e-12);

// per_state: one prior-consistency message per past state of each region
// (full constrained solver); normalization_only: beliefs only renormalized,
// no per-state prior enforcement (the cheaper augmented-graph variant).
enum class PriorCoupling { per_state, normalization_only };

struct StepDiagnostics {
  bool converged = false;
  int sweeps = 0;
  double final_delta = 0.0;
  double free_energy = 0.0;  // objective at the last sweep
  int objective_increases = 0;
  std::vector<double> sweep_delta;
  std::vector<double> prior_residual;  // max | sum_future b - prior |
  std::vector<double> cross_residual;  // max | parent marginal - child belief |
  std::vector<double> objective;
};

struct EvolveResult {
  // node_beliefs[step][variable][state]; step s holds beliefs after s+1 transitions
  std::vector<std::vector<std::vector<double>>> node_beliefs;
  std::vector<StepDiagnostics> steps;
  bool all_converged = true;
};

class PathSolver {
 public:
  PathSolver(const TemporalModel& model, const SolverOptions& opts, PriorCoupling coupling);
  ~PathSolver();
  PathSolver(PathSolver&&) noexcept;

  // re-reads factor values from the bound model (structure must be unchanged)
  void refresh_factor_tables();

  void set_store(PathBeliefStore store);
  const PathBeliefStore& store() const;

  double sweep();            // one full update pass; returns max belief change
  StepDiagnostics step();    // iterate to convergence, then advance the priors
  EvolveResult evolve(int steps);

  double objective() const;  // path free energy of the current beliefs
  std::vector<std::vector<double>> node_beliefs() const;  // from current priors

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// convenience wrappers used by the command line and the tests
StepDiagnostics dynbp_step(const TemporalModel& tm, PathBeliefStore& store,
                           const SolverOptions& opts);
EvolveResult dynbp_evolve(const TemporalModel& tm, PathBeliefStore store, int steps,
                          const SolverOptions& opts);
EvolveResult extended_gbp_evolve(const TemporalModel& tm, PathBeliefStore store, int steps,
                                 const SolverOptions& opts);

}  // namespace dynbp
