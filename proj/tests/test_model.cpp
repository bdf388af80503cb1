#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "dynbp/model.hpp"
#include "dynbp/rng.hpp"

using namespace dynbp;

namespace {

FactorGraph two_factor_chain() {
  // three binary variables, two shared-variable factors [[2,1],[1,2]]
  FactorGraph g;
  g.variables = {{0, 2}, {1, 2}, {2, 2}};
  g.factors = {{0, {0, 1}, {2, 1, 1, 2}}, {1, {1, 2}, {2, 1, 1, 2}}};
  return g;
}

}  // namespace

TEST_CASE("flat index runs last variable fastest") {
  CHECK(state_to_index({2, 2}, {0, 0}) == 0);
  CHECK(state_to_index({2, 2}, {0, 1}) == 1);
  CHECK(state_to_index({2, 2}, {1, 0}) == 2);
  CHECK(state_to_index({2, 3}, {1, 2}) == 5);
  CHECK(state_to_index({3, 2, 2}, {2, 1, 1}) == 11);
}

TEST_CASE("index round trip covers the whole table") {
  const std::vector<int> cards{2, 3, 4};
  CHECK(table_size(cards) == 24);
  std::vector<int> state;
  for (std::uint64_t i = 0; i < 24; ++i) {
    index_to_state(cards, i, state);
    CHECK(state_to_index(cards, state) == i);
  }
  CHECK_THROWS_AS(index_to_state(cards, 24, state), std::out_of_range);
  CHECK_THROWS_AS(state_to_index(cards, {2, 0, 0}), std::out_of_range);
  CHECK_THROWS_AS(table_size({2, 0}), std::invalid_argument);
}

TEST_CASE("joint evaluation multiplies factor entries") {
  const FactorGraph g = two_factor_chain();
  CHECK(evaluate_joint(g, {0, 0, 0}) == doctest::Approx(4.0));
  CHECK(evaluate_joint(g, {0, 1, 0}) == doctest::Approx(1.0));
  CHECK(evaluate_joint(g, {1, 1, 1}) == doctest::Approx(4.0));
  CHECK(evaluate_joint(g, {0, 0, 1}) == doctest::Approx(2.0));
}

TEST_CASE("scope cards follow the variable order") {
  const FactorGraph g = two_factor_chain();
  CHECK(scope_cards(g, {1, 2}) == std::vector<int>{2, 2});
}

TEST_CASE("well-formed graph validates") {
  CHECK(validate_factor_graph(two_factor_chain()).ok());
}

TEST_CASE("validation flags structural defects") {
  FactorGraph g = two_factor_chain();

  SUBCASE("unknown scope variable") {
    g.factors[0].scope = {0, 7};
    CHECK_FALSE(validate_factor_graph(g).ok());
  }
  SUBCASE("unsorted scope") {
    g.factors[0].scope = {1, 0};
    CHECK_FALSE(validate_factor_graph(g).ok());
  }
  SUBCASE("wrong table length") {
    g.factors[1].values = {1, 2, 3};
    CHECK_FALSE(validate_factor_graph(g).ok());
  }
  SUBCASE("negative entry") {
    g.factors[1].values[2] = -0.5;
    CHECK_FALSE(validate_factor_graph(g).ok());
  }
  SUBCASE("all-zero table") {
    g.factors[0].values = {0, 0, 0, 0};
    CHECK_FALSE(validate_factor_graph(g).ok());
  }
  SUBCASE("non-dense factor ids") {
    g.factors[1].id = 5;
    CHECK_FALSE(validate_factor_graph(g).ok());
  }
  SUBCASE("bad cardinality") {
    g.variables[2].cardinality = 0;
    CHECK_FALSE(validate_factor_graph(g).ok());
  }
}

TEST_CASE("seeded rng reproduces and matches its moments") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng g(7);
  double sum = 0.0, sumsq = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double x = g.normal() * 0.31622776601683794;  // stddev for variance 0.1
    sum += x;
    sumsq += x * x;
  }
  const double mean = sum / n;
  const double var = sumsq / n - mean * mean;
  CHECK(var > 0.095);
  CHECK(var < 0.105);
  CHECK(std::abs(mean) < 0.01);
}

TEST_CASE("derived seeds differ by index") {
  CHECK(Rng::derive_seed(1, 0) != Rng::derive_seed(1, 1));
  CHECK(Rng::derive_seed(1, 0) != Rng::derive_seed(2, 0));
  CHECK(Rng::derive_seed(9, 5) == Rng::derive_seed(9, 5));
}
