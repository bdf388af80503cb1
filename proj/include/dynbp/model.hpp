#pragma once
#include <cstdint>
#include <vector>

#include "dynbp/validation.hpp"

namespace dynbp {

struct Variable {
  int id = 0;
  int cardinality = 0;
};

// Dense nonnegative table over a sorted variable scope.
// Flat layout is row-major: the LAST scope variable varies fastest.
struct FactorTable {
  int id = 0;
  std::vector<int> scope;
  std::vector<double> values;
};

struct FactorGraph {
  std::vector<Variable> variables;   // ids dense 0..n-1, in id order
  std::vector<FactorTable> factors;  // ids dense 0..m-1, in id order

  int num_variables() const { return static_cast<int>(variables.size()); }
  int num_factors() const { return static_cast<int>(factors.size()); }
  int cardinality(int var_id) const { return variables[static_cast<size_t>(var_id)].cardinality; }
};

std::uint64_t table_size(const std::vector<int>& cards);

// flat index of `state` under the row-major last-fastest layout
std::uint64_t state_to_index(const std::vector<int>& cards, const std::vector<int>& state);
void index_to_state(const std::vector<int>& cards, std::uint64_t index, std::vector<int>& state);

std::vector<int> scope_cards(const FactorGraph& g, const std::vector<int>& scope);

// unnormalized product of all factor tables at a full assignment
double evaluate_joint(const FactorGraph& g, const std::vector<int>& full_state);

// structural checks: dense sorted ids, positive cardinalities, sorted scopes,
// in-range scope ids, exact table lengths, nonnegative values, not all zero
ValidationReport validate_factor_graph(const FactorGraph& g);

}  // namespace dynbp
