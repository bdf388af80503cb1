#include "dynbp/model.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace dynbp {

std::uint64_t table_size(const std::vector<int>& cards) {
  std::uint64_t n = 1;
  for (int c : cards) {
    if (c <= 0) throw std::invalid_argument("nonpositive cardinality");
    n *= static_cast<std::uint64_t>(c);
  }
  return n;
}

std::uint64_t state_to_index(const std::vector<int>& cards, const std::vector<int>& state) {
  if (cards.size() != state.size()) throw std::invalid_argument("state length != scope length");
  std::uint64_t idx = 0;
  for (size_t k = 0; k < cards.size(); ++k) {
    if (state[k] < 0 || state[k] >= cards[k]) throw std::out_of_range("state value out of range");
    idx = idx * static_cast<std::uint64_t>(cards[k]) + static_cast<std::uint64_t>(state[k]);
  }
  return idx;
}

void index_to_state(const std::vector<int>& cards, std::uint64_t index, std::vector<int>& state) {
  state.resize(cards.size());
  for (size_t k = cards.size(); k-- > 0;) {
    const auto c = static_cast<std::uint64_t>(cards[k]);
    state[k] = static_cast<int>(index % c);
    index /= c;
  }
  if (index != 0) throw std::out_of_range("index exceeds table size");
}

std::vector<int> scope_cards(const FactorGraph& g, const std::vector<int>& scope) {
  std::vector<int> cards(scope.size());
  for (size_t k = 0; k < scope.size(); ++k) cards[k] = g.cardinality(scope[k]);
  return cards;
}

double evaluate_joint(const FactorGraph& g, const std::vector<int>& full_state) {
  if (full_state.size() != g.variables.size())
    throw std::invalid_argument("full_state length != variable count");
  double w = 1.0;
  std::vector<int> sub;
  for (const auto& f : g.factors) {
    sub.resize(f.scope.size());
    std::uint64_t idx = 0;
    for (size_t k = 0; k < f.scope.size(); ++k) {
      const int v = f.scope[k];
      idx = idx * static_cast<std::uint64_t>(g.cardinality(v)) +
            static_cast<std::uint64_t>(full_state[static_cast<size_t>(v)]);
    }
    w *= f.values[idx];
  }
  return w;
}

ValidationReport validate_factor_graph(const FactorGraph& g) {
  ValidationReport rep;
  const int n = g.num_variables();
  for (int i = 0; i < n; ++i) {
    const auto& v = g.variables[static_cast<size_t>(i)];
    if (v.id != i) rep.add("variable " + std::to_string(i), "ids not dense ascending");
    if (v.cardinality <= 0)
      rep.add("variable " + std::to_string(v.id), "cardinality must be positive");
  }
  for (int a = 0; a < g.num_factors(); ++a) {
    const auto& f = g.factors[static_cast<size_t>(a)];
    const std::string where = "factor " + std::to_string(a);
    if (f.id != a) rep.add(where, "ids not dense ascending");
    if (f.scope.empty()) rep.add(where, "empty scope");
    bool scope_ok = true;
    for (size_t k = 0; k < f.scope.size(); ++k) {
      if (f.scope[k] < 0 || f.scope[k] >= n) {
        rep.add(where, "scope references unknown variable " + std::to_string(f.scope[k]));
        scope_ok = false;
      }
      if (k > 0 && f.scope[k] <= f.scope[k - 1]) {
        rep.add(where, "scope not sorted strictly ascending");
        scope_ok = false;
      }
    }
    if (!scope_ok) continue;
    std::uint64_t want = 1;
    for (int v : f.scope) want *= static_cast<std::uint64_t>(g.cardinality(v));
    if (f.values.size() != want)
      rep.add(where, "table length " + std::to_string(f.values.size()) + " != " +
                         std::to_string(want));
    bool any_positive = false;
    for (double x : f.values) {
      if (x < 0.0) {
        rep.add(where, "negative value");
        break;
      }
      if (x > 0.0) any_positive = true;
    }
    if (!f.values.empty() && !any_positive) rep.add(where, "all values zero");
  }
  return rep;
}

}  // namespace dynbp
