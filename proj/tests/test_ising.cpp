#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "dynbp/exact.hpp"
#include "dynbp/ising.hpp"
#include "dynbp/model.hpp"
#include "dynbp/rng.hpp"
#include "dynbp/temporal.hpp"

using namespace dynbp;

namespace {

IsingLattice tiny(int rows, int cols, double j, double h) {
  Rng rng(1);
  IsingLattice lat = random_ising_lattice(rows, cols, LatticeTopology::torus, 0.0, 0.0, rng);
  for (auto& [a, b, J] : lat.couplings) {
    (void)a;
    (void)b;
    J = j;
  }
  for (auto& f : lat.fields) f = h;
  return lat;
}

// product of every transition table at one (past, future) joint assignment
double kinetic_weight(const TemporalModel& tm, const std::vector<int>& past,
                      const std::vector<int>& future) {
  double w = 1.0;
  for (const auto& f : tm.factors) {
    std::vector<int> cards, state;
    for (int v : f.past_scope) {
      cards.push_back(tm.cardinality(v));
      state.push_back(past[static_cast<size_t>(v)]);
    }
    for (int v : f.future_scope) {
      cards.push_back(tm.cardinality(v));
      state.push_back(future[static_cast<size_t>(v)]);
    }
    w *= f.values[static_cast<size_t>(state_to_index(cards, state))];
  }
  return w;
}

double hamiltonian(const IsingLattice& lat, const std::vector<int>& state) {
  double e = 0.0;
  for (const auto& [a, b, J] : lat.couplings)
    e -= J * spin_of_state(state[static_cast<size_t>(a)]) *
         spin_of_state(state[static_cast<size_t>(b)]);
  for (size_t i = 0; i < lat.fields.size(); ++i)
    e -= lat.fields[i] * spin_of_state(state[i]);
  return e;
}

}  // namespace

TEST_CASE("lattice generation is reproducible and sized right") {
  Rng a(9), b(9);
  const IsingLattice x = random_ising_lattice(3, 3, LatticeTopology::torus, 0.4, 0.2, a);
  const IsingLattice y = random_ising_lattice(3, 3, LatticeTopology::torus, 0.4, 0.2, b);
  CHECK(x.couplings == y.couplings);
  CHECK(x.fields == y.fields);
  CHECK(x.couplings.size() == 18);  // 2 wrap edges per site
  CHECK(x.fields.size() == 9);
  CHECK(x.site(1, 2) == 5);

  Rng c(9);
  const IsingLattice open = random_ising_lattice(2, 2, LatticeTopology::open, 0.4, 0.2, c);
  CHECK(open.couplings.size() == 4);
}

TEST_CASE("static single-site weights follow the field") {
  IsingLattice lat = tiny(1, 1, 0.0, 0.3);
  const FactorGraph g = static_ising_graph(lat);
  REQUIRE(g.factors.size() == 1);
  CHECK(g.factors[0].values[0] == doctest::Approx(std::exp(0.3)).epsilon(1e-12));
  CHECK(g.factors[0].values[1] == doctest::Approx(std::exp(-0.3)).epsilon(1e-12));
}

TEST_CASE("two-site agreement probability in closed form") {
  IsingLattice lat;
  lat.rows = 1;
  lat.cols = 2;
  lat.topology = LatticeTopology::open;
  lat.couplings = {{0, 1, 0.5}};
  lat.fields = {0.0, 0.0};
  const FactorGraph g = static_ising_graph(lat);
  const auto p = exact_marginal(g, {0, 1});
  const double agree = p[0] + p[3];
  CHECK(agree == doctest::Approx(std::exp(0.5) / (std::exp(0.5) + std::exp(-0.5)))
                     .epsilon(1e-12));
}

TEST_CASE("transition weights factor into energy change and flip counts") {
  Rng rng(31);
  const IsingLattice lat =
      random_ising_lattice(2, 2, LatticeTopology::torus, 0.3, 0.2, rng);
  const double theta = 0.35;
  const TemporalModel tm = kinetic_ising_model(lat, theta);

  const std::vector<int> cards(4, 2);
  std::vector<int> past, future;
  for (std::uint64_t p = 0; p < 16; ++p) {
    index_to_state(cards, p, past);
    for (std::uint64_t f = 0; f < 16; ++f) {
      index_to_state(cards, f, future);
      int flips = 0;
      for (int i = 0; i < 4; ++i)
        if (past[static_cast<size_t>(i)] != future[static_cast<size_t>(i)]) ++flips;
      const double expect = std::exp(hamiltonian(lat, past) - hamiltonian(lat, future)) *
                            std::pow(theta, flips) * std::pow(1.0 - theta, 4 - flips);
      const double got = kinetic_weight(tm, past, future);
      CHECK(got == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("free single spin relaxes geometrically toward half") {
  const IsingLattice lat = tiny(1, 1, 0.0, 0.0);
  SolverOptions o;
  o.damping = 0.0;
  o.tolerance = 1e-12;
  const BeliefTraceResult trace = run_belief_trace(lat, 0.1, 5, {0}, o);
  REQUIRE(trace.all_converged);
  REQUIRE(trace.has_exact);
  for (const auto& row : trace.rows) {
    const double expect = 0.5 + 0.5 * std::pow(0.8, row.step);
    CHECK(row.dynbp_up == doctest::Approx(expect).epsilon(1e-9));
    CHECK(row.bp_up == doctest::Approx(expect).epsilon(1e-9));
    CHECK(row.exact_up == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("near-frozen dynamics keep the trace at its start") {
  // uncoupled sites: a vanishing flip weight must hold the point mass in place
  const IsingLattice lat = tiny(2, 2, 0.0, 0.05);
  SolverOptions o;
  o.tolerance = 1e-10;
  const BeliefTraceResult trace = run_belief_trace(lat, 1e-9, 3, {0, 0, 0, 0}, o);
  REQUIRE(trace.has_exact);
  for (const auto& row : trace.rows) {
    CHECK(row.exact_up == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(row.dynbp_up == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("kikuchi aggregation averages region tables") {
  const IsingLattice lat = tiny(2, 2, 0.1, 0.0);
  const TemporalModel tm = kinetic_ising_model(lat, 0.4);

  SUBCASE("uniform store") {
    const KikuchiVariables v = aggregate_kikuchi_variables(tm, uniform_priors(tm));
    CHECK(v.site_state[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(v.pair_state[2] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(v.site_path[3] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(v.pair_path[9] == doctest::Approx(0.0625).epsilon(1e-12));
  }
  SUBCASE("all-up point store") {
    PathBeliefStore store = point_priors(tm, {0, 0, 0, 0});
    // put every path belief on the (start, start) pair
    for (auto& path : store.path) {
      for (auto& x : path) x = 0.0;
      path[0] = 1.0;
    }
    const KikuchiVariables v = aggregate_kikuchi_variables(tm, store);
    CHECK(v.site_state[0] == doctest::Approx(1.0));
    CHECK(v.pair_state[0] == doctest::Approx(1.0));
    CHECK(v.site_path[0] == doctest::Approx(1.0));
    CHECK(v.pair_path[0] == doctest::Approx(1.0));
  }
  SUBCASE("single-region stores are rejected") {
    std::vector<Variable> vars{{0, 2}, {1, 2}, {2, 2}};
    std::vector<TemporalFactor> factors(1);
    factors[0] = {0, {0, 1, 2}, {0, 1, 2}, std::vector<double>(64, 1.0)};
    const TemporalModel flat = make_single_region_model(vars, factors);
    CHECK_THROWS_AS((void)aggregate_kikuchi_variables(flat, uniform_priors(flat)),
                    std::invalid_argument);
  }
}

TEST_CASE("homogeneous path weight at reference configurations") {
  // uniform tables, balanced flips, no energy: ln 2 - 1 per site
  KikuchiVariables uniform;
  uniform.site_state = {0.5, 0.5};
  uniform.pair_state = {0.25, 0.25, 0.25, 0.25};
  uniform.site_path = {0.25, 0.25, 0.25, 0.25};
  for (auto& y : uniform.pair_path) y = 0.0625;
  CHECK(kikuchi_ppf(uniform, 0.0, 0.0, 4, 0.5) ==
        doctest::Approx(std::log(2.0) - 1.0).epsilon(1e-12));

  // frozen all-up point mass: entropies give 1 - z/2, the stay weight the rest
  KikuchiVariables frozen;
  frozen.site_state = {1.0, 0.0};
  frozen.pair_state = {1.0, 0.0, 0.0, 0.0};
  frozen.site_path = {1.0, 0.0, 0.0, 0.0};
  frozen.pair_path[0] = 1.0;
  CHECK(kikuchi_ppf(frozen, 0.2, 0.1, 4, 0.4) ==
        doctest::Approx(1.0 - 2.0 + std::log(0.6)).epsilon(1e-12));

  // a pure spin flip of every site pays the flip weight and the field twice
  KikuchiVariables flip;
  flip.site_state = {1.0, 0.0};
  flip.pair_state = {1.0, 0.0, 0.0, 0.0};
  flip.site_path = {0.0, 1.0, 0.0, 0.0};  // past up, future down
  flip.pair_path[3] = 1.0;                // pair (up,up) -> (down,down)
  const double h = 0.1;
  CHECK(kikuchi_ppf(flip, 0.2, h, 4, 0.4) ==
        doctest::Approx(1.0 - 2.0 + std::log(0.4) - 2.0 * h).epsilon(1e-12));
}

TEST_CASE("independent sites record vanishing oracle error") {
  SolverOptions o;
  o.tolerance = 1e-10;
  o.max_iterations = 2000;
  const HistogramResult res = run_error_histogram(2, 2, 0.0, 0.0, 3, 3, 0.3, 5, o, 1);
  CHECK(res.total_steps == 9);
  CHECK(res.converged_steps == 9);
  REQUIRE(res.rows.size() == 9);
  for (const auto& row : res.rows) {
    CHECK(row.converged);
    CHECK(row.rel_err < 1e-9);
  }
  REQUIRE_FALSE(res.residuals.empty());
  for (const auto& r : res.residuals) {
    CHECK(r.sweep >= 1);
    CHECK(r.prior_residual >= 0.0);
  }
}

TEST_CASE("coupled histogram stays close to the oracle") {
  // reporting regime (one sweep per step): this is where the solver tracks the
  // oracle; free-running sweeps drift toward a degenerate self-consistent state
  SolverOptions o;
  o.tolerance = 1e-8;
  o.max_iterations = 1;
  const HistogramResult res = run_error_histogram(2, 3, 0.1, 0.1, 3, 3, 0.3, 5, o, 1);
  REQUIRE(res.rows.size() == 9);
  double mean = 0.0;
  for (const auto& row : res.rows) {
    CHECK(row.rel_err < 0.35);
    mean += row.rel_err;
  }
  CHECK(mean / static_cast<double>(res.rows.size()) < 0.22);
}
