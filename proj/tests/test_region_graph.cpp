#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>
#include <vector>

#include "dynbp/model.hpp"
#include "dynbp/region_graph.hpp"

using namespace dynbp;

namespace {

FactorGraph chain3() {
  FactorGraph g;
  g.variables = {{0, 2}, {1, 2}, {2, 2}};
  g.factors = {{0, {0, 1}, {2, 1, 1, 2}}, {1, {1, 2}, {2, 1, 1, 2}}};
  return g;
}

// pairwise factors of a rows x cols torus, one unary per site after them
FactorGraph torus_graph(int rows, int cols) {
  FactorGraph g;
  const int n = rows * cols;
  for (int i = 0; i < n; ++i) g.variables.push_back({i, 2});
  int id = 0;
  auto add_pair = [&](int a, int b) {
    if (a == b) return;
    if (a > b) std::swap(a, b);
    g.factors.push_back({id++, {a, b}, {1, 1, 1, 1}});
  };
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      add_pair(r * cols + c, r * cols + (c + 1) % cols);
      add_pair(r * cols + c, ((r + 1) % rows) * cols + c);
    }
  for (int i = 0; i < n; ++i) g.factors.push_back({id++, {i}, {1, 1}});
  return g;
}

// every region that contains all variables of `r`, including itself
double superset_counting_sum(const RegionGraph& rg, int r) {
  const auto& vars = rg.regions[static_cast<size_t>(r)].variables;
  double sum = 0.0;
  for (size_t q = 0; q < rg.regions.size(); ++q) {
    const auto& qv = rg.regions[q].variables;
    if (std::includes(qv.begin(), qv.end(), vars.begin(), vars.end()))
      sum += rg.counting[q];
  }
  return sum;
}

}  // namespace

TEST_CASE("two-level construction on a chain") {
  const FactorGraph g = chain3();
  const RegionGraph rg = build_bethe_regions(g);
  REQUIRE(rg.num_regions() == 5);  // two pair regions, three singles
  CHECK(validate_region_graph(rg, g).ok());

  // pair regions keep their factor, shared variable gets counting -1
  CHECK(rg.counting[0] == doctest::Approx(1.0));
  CHECK(rg.counting[1] == doctest::Approx(1.0));
  std::map<std::vector<int>, double> c;
  for (int r = 0; r < rg.num_regions(); ++r)
    c[rg.regions[static_cast<size_t>(r)].variables] = rg.counting[static_cast<size_t>(r)];
  CHECK(c[{0}] == doctest::Approx(0.0));
  CHECK(c[{1}] == doctest::Approx(-1.0));
  CHECK(c[{2}] == doctest::Approx(0.0));
}

TEST_CASE("per-variable counting sums to one on random torus sizes") {
  for (const auto& [rows, cols] : {std::pair{3, 3}, {3, 4}, {2, 5}, {4, 4}}) {
    const FactorGraph g = torus_graph(rows, cols);
    const RegionGraph rg = build_bethe_regions(g);
    CHECK(validate_region_graph(rg, g).ok());
    for (int v = 0; v < g.num_variables(); ++v) {
      double sum = 0.0;
      for (size_t r = 0; r < rg.regions.size(); ++r) {
        const auto& vars = rg.regions[r].variables;
        if (std::find(vars.begin(), vars.end(), v) != vars.end()) sum += rg.counting[r];
      }
      CHECK(sum == doctest::Approx(1.0));
    }
  }
}

TEST_CASE("torus sites carry counting 1 - z after unary absorption") {
  const FactorGraph g = torus_graph(3, 3);
  const RegionGraph rg = build_bethe_regions(g);
  int singles = 0;
  for (size_t r = 0; r < rg.regions.size(); ++r)
    if (rg.regions[r].variables.size() == 1) {
      ++singles;
      CHECK(rg.counting[r] == doctest::Approx(-3.0));
    }
  CHECK(singles == 9);
  // unary factors were absorbed into covering pair regions
  for (size_t r = 0; r < rg.regions.size(); ++r)
    if (rg.regions[r].variables.size() == 1) CHECK(rg.regions[r].factors.empty());
}

TEST_CASE("superset counting sums are one everywhere") {
  for (const FactorGraph& g : {chain3(), torus_graph(3, 4)}) {
    const RegionGraph rg = build_bethe_regions(g);
    for (int r = 0; r < rg.num_regions(); ++r)
      CHECK(superset_counting_sum(rg, r) == doctest::Approx(1.0));
  }
}

TEST_CASE("two-cluster overlap fixture") {
  // two overlapping pair clusters and their shared single, hand counting
  FactorGraph g;
  g.variables = {{0, 2}, {1, 2}, {2, 2}};
  g.factors = {{0, {0, 1}, {1, 1, 1, 1}}, {1, {1, 2}, {1, 1, 1, 1}}};

  RegionGraph rg;
  rg.regions = {{0, {0, 1}, {0}}, {1, {1, 2}, {1}}, {2, {1}, {}}};
  rg.edges = {{0, 2}, {1, 2}};
  compute_counting_numbers(rg);

  CHECK(validate_region_graph(rg, g).ok());
  REQUIRE(rg.counting.size() == 3);
  CHECK(rg.counting[0] == doctest::Approx(1.0));
  CHECK(rg.counting[1] == doctest::Approx(1.0));
  CHECK(rg.counting[2] == doctest::Approx(-1.0));
}

TEST_CASE("three-level fixture reproduces counting and relation sets") {
  // ids: A=0 B=1 C=2 F=3 R=4 D=5 E=6 G=7 H=8 over seven binary variables
  FactorGraph g;
  for (int v = 0; v < 7; ++v) g.variables.push_back({v, 2});

  RegionGraph rg;
  rg.regions = {
      {0, {0, 1, 2, 3}, {}},  // A
      {1, {0, 1, 2, 4}, {}},  // B
      {2, {0, 1, 5}, {}},     // C
      {3, {1, 6}, {}},        // F
      {4, {0, 1, 2}, {}},     // R
      {5, {0, 2}, {}},        // D
      {6, {0, 1}, {}},        // E
      {7, {0}, {}},           // G
      {8, {1}, {}},           // H
  };
  rg.edges = {{0, 4}, {1, 4}, {2, 6}, {2, 8}, {3, 8},
              {4, 5}, {4, 6}, {5, 7}, {6, 7}, {6, 8}};
  compute_counting_numbers(rg);
  CHECK(validate_region_graph(rg, g).ok());

  const std::vector<double> want{1, 1, 1, 1, -1, 0, -1, 0, -1};
  REQUIRE(rg.counting.size() == want.size());
  for (size_t r = 0; r < want.size(); ++r) CHECK(rg.counting[r] == doctest::Approx(want[r]));

  // relations of the (R, E) edge
  const RelationSets rel = relation_sets(rg, 4, 6);
  const std::set<std::pair<int, int>> num(rel.numerator.begin(), rel.numerator.end());
  const std::set<std::pair<int, int>> den(rel.denominator.begin(), rel.denominator.end());
  CHECK(num == std::set<std::pair<int, int>>{{0, 4}, {1, 4}});
  CHECK(den == std::set<std::pair<int, int>>{{5, 7}});
}

TEST_CASE("validation rejects malformed region structures") {
  FactorGraph g;
  g.variables = {{0, 2}, {1, 2}};
  g.factors = {{0, {0, 1}, {1, 1, 1, 1}}};

  SUBCASE("child not a subset") {
    RegionGraph rg;
    rg.regions = {{0, {0}, {}}, {1, {1}, {}}};
    rg.edges = {{0, 1}};
    rg.counting = {1, 0};
    CHECK_FALSE(validate_region_graph(rg, g).ok());
  }
  SUBCASE("self edge") {
    RegionGraph rg;
    rg.regions = {{0, {0, 1}, {0}}};
    rg.edges = {{0, 0}};
    rg.counting = {1};
    CHECK_FALSE(validate_region_graph(rg, g).ok());
  }
  SUBCASE("factor scope outside region") {
    RegionGraph rg;
    rg.regions = {{0, {0}, {0}}};
    rg.counting = {1};
    CHECK_FALSE(validate_region_graph(rg, g).ok());
  }
}

TEST_CASE("covering set walks the region and its descendants") {
  const FactorGraph g = chain3();
  const RegionGraph rg = build_bethe_regions(g);
  // a pair region covers itself plus its two singles
  CHECK(covering_set(rg, 0).size() == 3);
  // a leaf single covers only itself
  int shared = -1;
  for (int r = 0; r < rg.num_regions(); ++r)
    if (rg.regions[static_cast<size_t>(r)].variables == std::vector<int>{1}) shared = r;
  REQUIRE(shared >= 0);
  CHECK(covering_set(rg, shared) == std::vector<int>{shared});
}
