#pragma once
#include <array>
#include <cstdint>
#include <tuple>
#include <vector>

#include "dynbp/model.hpp"
#include "dynbp/rng.hpp"
#include "dynbp/solver_options.hpp"
#include "dynbp/temporal.hpp"

namespace dynbp {

enum class LatticeTopology { torus, open };

// rectangular spin lattice; every lattice edge is its own entry, so a 2-wide
// torus keeps both wrap edges of a site pair
struct IsingLattice {
  int rows = 0, cols = 0;
  LatticeTopology topology = LatticeTopology::torus;
  std::vector<std::tuple<int, int, double>> couplings;  // (site a, site b, J)
  std::vector<double> fields;                           // per site

  int num_sites() const { return rows * cols; }
  int site(int r, int c) const { return r * cols + c; }
};

// couplings and fields i.i.d. Normal(0, stddev^2); draw order is couplings
// (site-major, right then down) followed by fields
IsingLattice random_ising_lattice(int rows, int cols, LatticeTopology topology,
                                  double j_stddev, double h_stddev, Rng& rng);

// state 0 encodes spin +1, state 1 encodes spin -1
inline double spin_of_state(int s) { return s == 0 ? 1.0 : -1.0; }

// pairwise factors exp{J s s'} per edge, then unary factors exp{h s} per site
FactorGraph static_ising_graph(const IsingLattice& lat);

// transition factorized as per-edge exp{J (s'_a s'_b - s_a s_b)} followed by
// per-site exp{h (s' - s)} * theta_dt on a flip / (1 - theta_dt) on a stay;
// the product over factors is the unnormalized joint transition weight
TemporalModel kinetic_ising_model(const IsingLattice& lat, double theta_dt);

// lattice-averaged state and path tables of a homogeneous pairwise model;
// indices follow spin state order (+1 first), pair index = 2*a + b
struct KikuchiVariables {
  std::array<double, 2> site_state{};   // x
  std::array<double, 4> pair_state{};   // y
  std::array<double, 4> site_path{};    // X, index 2*past + future
  std::array<double, 16> pair_path{};   // Y, index 4*past_pair + future_pair
};

// averages small-region tables into the site entries and large-region tables
// into the pair entries; requires a two-level pairwise region graph over
// binary variables
KikuchiVariables aggregate_kikuchi_variables(const TemporalModel& tm,
                                             const PathBeliefStore& store);

// per-site log path weight of a homogeneous configuration: entropy terms with
// L(x) = x ln x - x, the flip/stay weight, and the energy change of one step
double kikuchi_ppf(const KikuchiVariables& v, double coupling, double field, int z,
                   double theta_dt);

struct BeliefTraceRow {
  int step = 0;
  int site = 0;
  double dynbp_up = 0.0;  // belief of spin +1 from the path solver
  double bp_up = 0.0;     // two-slice loopy BP comparator
  double exact_up = 0.0;  // exhaustive evolution, when within the cap
};

struct BeliefTraceResult {
  std::vector<BeliefTraceRow> rows;  // step-major, then site
  bool all_converged = true;
  bool has_exact = false;
};

BeliefTraceResult run_belief_trace(const IsingLattice& lat, double theta_dt, int steps,
                                   const std::vector<int>& initial_state,
                                   const SolverOptions& opts);

struct HistogramRow {
  int seed_index = 0;
  int step = 0;        // 1-based; belief after this many transitions
  double rel_err = 0.0;  // |b - p| / p at site (0,0), spin +1
  bool converged = false;
};

struct ResidualRow {
  int seed_index = 0;
  int step = 0;
  int sweep = 0;
  double sweep_delta = 0.0;
  double prior_residual = 0.0;
  double cross_residual = 0.0;
  double objective = 0.0;
};

struct HistogramResult {
  std::vector<HistogramRow> rows;
  std::vector<ResidualRow> residuals;
  int converged_steps = 0;
  int total_steps = 0;
};

// per-seed random lattices, all-up start, exhaustive oracle comparison at
// site (0,0); trial seeds derive from base_seed by index
HistogramResult run_error_histogram(int rows, int cols, double h_stddev, double j_stddev,
                                    int seeds, int steps, double theta_dt,
                                    std::uint64_t base_seed, const SolverOptions& opts,
                                    int jobs = 1);

struct RatioRow {
  int trial = 0;
  double fe_constrained = 0.0;  // objective with the per-state prior coupling
  double fe_extended = 0.0;     // objective with renormalization only
  bool constrained_converged = false;
  bool extended_converged = false;
};

struct RatioResult {
  std::vector<RatioRow> rows;
};

// one-step free-energy comparison of the two couplings on random lattices,
// from uniform priors
RatioResult free_energy_ratio_experiment(int rows, int cols, double h_stddev,
                                         double j_stddev, int trials, double theta_dt,
                                         std::uint64_t base_seed, const SolverOptions& opts,
                                         int jobs = 1);

}  // namespace dynbp
