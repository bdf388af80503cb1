#pragma once
#include <tuple>
#include <vector>

#include "dynbp/model.hpp"
#include "dynbp/region_graph.hpp"
#include "dynbp/solver_options.hpp"

namespace dynbp {

struct BeliefSet {
  std::vector<std::vector<double>> variable_beliefs;  // [variable][state]
  std::vector<std::vector<double>> factor_beliefs;    // filled by sum_product_bp
  std::vector<std::vector<double>> region_beliefs;    // filled by gbp_parent_to_child
};

// plain factor-graph belief propagation, damped, flat schedule
SolveResult sum_product_bp(const FactorGraph& g, const SolverOptions& opts, BeliefSet& out);

// parent-to-child message passing on an arbitrary validated region graph
SolveResult gbp_parent_to_child(const FactorGraph& g, const RegionGraph& rg,
                                const SolverOptions& opts, BeliefSet& out);

// F = sum_r c_r sum_x q_r(x) [ H_r(x) + ln q_r(x) ],  H_r = -sum_{a in r} ln f_a
double region_free_energy(const RegionGraph& rg, const FactorGraph& g,
                          const std::vector<std::vector<double>>& region_beliefs,
                          double zero_floor = 1e-12);

// damped tanh fixed point for pairwise spin models; couplings (i, j, J_ij)
// undirected with i < j, one field per site
std::vector<double> mean_field_magnetizations(
    int n, const std::vector<std::tuple<int, int, double>>& couplings,
    const std::vector<double>& fields, const SolverOptions& opts,
    SolveResult* result = nullptr);

}  // namespace dynbp
