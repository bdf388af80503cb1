#include <doctest.h>

#include <cmath>
#include <tuple>
#include <vector>

#include "dynbp/exact.hpp"
#include "dynbp/model.hpp"
#include "dynbp/region_graph.hpp"
#include "dynbp/rng.hpp"
#include "dynbp/static_infer.hpp"

using namespace dynbp;

namespace {

FactorGraph random_tree(int n, Rng& rng) {
  FactorGraph g;
  for (int v = 0; v < n; ++v) g.variables.push_back({v, rng.uniform() < 0.5 ? 2 : 3});
  int fid = 0;
  for (int v = 1; v < n; ++v) {
    const int parent = static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(v)));
    FactorTable f;
    f.id = fid++;
    f.scope = {parent < v ? parent : v, parent < v ? v : parent};
    f.values.resize(table_size(scope_cards(g, f.scope)));
    for (auto& x : f.values) x = 0.2 + rng.uniform();
    g.factors.push_back(std::move(f));
  }
  // unary evidence on every node
  for (int v = 0; v < n; ++v) {
    FactorTable f;
    f.id = fid++;
    f.scope = {v};
    f.values.resize(static_cast<size_t>(g.variables[static_cast<size_t>(v)].cardinality));
    for (auto& x : f.values) x = 0.2 + rng.uniform();
    g.factors.push_back(std::move(f));
  }
  return g;
}

// triangle of binary spins with pair strength w on agreement
FactorGraph cycle3(double w) {
  FactorGraph g;
  g.variables = {{0, 2}, {1, 2}, {2, 2}};
  const std::vector<double> t{w, 1, 1, w};
  g.factors = {{0, {0, 1}, t}, {1, {1, 2}, t}, {2, {0, 2}, t}};
  return g;
}

SolverOptions tight() {
  SolverOptions o;
  o.damping = 0.0;
  o.tolerance = 1e-12;
  o.max_iterations = 2000;
  return o;
}

double max_belief_gap(const FactorGraph& g, const BeliefSet& b) {
  double worst = 0.0;
  for (int v = 0; v < g.num_variables(); ++v) {
    const auto exact = exact_marginal(g, {v});
    for (size_t s = 0; s < exact.size(); ++s)
      worst = std::max(worst,
                       std::abs(exact[s] - b.variable_beliefs[static_cast<size_t>(v)][s]));
  }
  return worst;
}

}  // namespace

TEST_CASE("belief propagation is exact on trees") {
  Rng rng(41);
  for (int trial = 0; trial < 10; ++trial) {
    const FactorGraph g = random_tree(2 + static_cast<int>(rng.uniform_below(6)), rng);
    BeliefSet b;
    const SolveResult r = sum_product_bp(g, tight(), b);
    CHECK(r.converged);
    CHECK(max_belief_gap(g, b) < 1e-9);
  }
}

TEST_CASE("parent-to-child passing matches the enumerated marginals on trees") {
  Rng rng(42);
  for (int trial = 0; trial < 10; ++trial) {
    const FactorGraph g = random_tree(2 + static_cast<int>(rng.uniform_below(6)), rng);
    RegionGraph rg = build_bethe_regions(g);
    compute_counting_numbers(rg);
    BeliefSet b;
    const SolveResult r = gbp_parent_to_child(g, rg, tight(), b);
    CHECK(r.converged);
    CHECK(max_belief_gap(g, b) < 1e-9);
  }
}

TEST_CASE("region free energy at the tree fixed point recovers -log Z") {
  Rng rng(43);
  for (int trial = 0; trial < 5; ++trial) {
    const FactorGraph g = random_tree(3 + static_cast<int>(rng.uniform_below(5)), rng);
    RegionGraph rg = build_bethe_regions(g);
    compute_counting_numbers(rg);
    BeliefSet b;
    REQUIRE(gbp_parent_to_child(g, rg, tight(), b).converged);
    CHECK(region_free_energy(rg, g, b.region_beliefs) ==
          doctest::Approx(-exact_log_partition(g)).epsilon(1e-9));
  }
}

TEST_CASE("both solvers agree on a weakly coupled cycle") {
  const FactorGraph g = cycle3(1.05);
  BeliefSet bp;
  REQUIRE(sum_product_bp(g, tight(), bp).converged);
  RegionGraph rg = build_bethe_regions(g);
  compute_counting_numbers(rg);
  BeliefSet gbp;
  REQUIRE(gbp_parent_to_child(g, rg, tight(), gbp).converged);
  for (int v = 0; v < 3; ++v)
    for (int s = 0; s < 2; ++s)
      CHECK(bp.variable_beliefs[static_cast<size_t>(v)][static_cast<size_t>(s)] ==
            doctest::Approx(gbp.variable_beliefs[static_cast<size_t>(v)][static_cast<size_t>(s)])
                .epsilon(1e-7));
}

TEST_CASE("damping does not move the fixed point") {
  Rng rng(44);
  const FactorGraph g = random_tree(6, rng);
  SolverOptions heavy = tight();
  heavy.damping = 0.7;
  heavy.max_iterations = 20000;
  BeliefSet a, b;
  REQUIRE(sum_product_bp(g, tight(), a).converged);
  REQUIRE(sum_product_bp(g, heavy, b).converged);
  for (int v = 0; v < g.num_variables(); ++v)
    for (size_t s = 0; s < a.variable_beliefs[static_cast<size_t>(v)].size(); ++s)
      CHECK(a.variable_beliefs[static_cast<size_t>(v)][s] ==
            doctest::Approx(b.variable_beliefs[static_cast<size_t>(v)][s]).epsilon(1e-8));
}

TEST_CASE("uniform cycle free energy in closed form") {
  // all-ones pair tables: beliefs are uniform, pair entropy ln 4, node entropy
  // ln 2, counting numbers (1,1,1,-1,-1,-1) give F = -3 ln 2
  const FactorGraph g = cycle3(1.0);
  RegionGraph rg = build_bethe_regions(g);
  compute_counting_numbers(rg);
  BeliefSet b;
  REQUIRE(gbp_parent_to_child(g, rg, tight(), b).converged);
  CHECK(region_free_energy(rg, g, b.region_beliefs) ==
        doctest::Approx(-3.0 * std::log(2.0)).epsilon(1e-10));
}

TEST_CASE("mean field solves the symmetric two-spin consistency equation") {
  // both sites identical: m = tanh(J m + h); bisect the oracle directly
  const double J = 0.4, h = 0.2;
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (std::tanh(J * mid + h) - mid > 0.0 ? lo : hi) = mid;
  }
  const double oracle = 0.5 * (lo + hi);

  SolverOptions o = tight();
  SolveResult r;
  const auto m = mean_field_magnetizations(2, {{0, 1, J}}, {h, h}, o, &r);
  REQUIRE(r.converged);
  CHECK(m[0] == doctest::Approx(oracle).epsilon(1e-9));
  CHECK(m[1] == doctest::Approx(oracle).epsilon(1e-9));
}

TEST_CASE("iteration budget is honored") {
  Rng rng(45);
  const FactorGraph g = random_tree(8, rng);
  SolverOptions o = tight();
  o.max_iterations = 1;
  BeliefSet b;
  const SolveResult r = sum_product_bp(g, o, b);
  CHECK_FALSE(r.converged);
  CHECK(r.iterations == 1);
}
