#include "dynbp/ising.hpp"

#include <atomic>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <thread>

#include "dynbp/exact.hpp"
#include "dynbp/static_infer.hpp"

namespace dynbp {

namespace {

void run_trials(int count, int jobs, const std::function<void(int)>& fn) {
  if (jobs <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  const int workers = std::min(jobs, count);
  pool.reserve(static_cast<size_t>(workers));
  for (int t = 0; t < workers; ++t)
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
    });
  for (auto& th : pool) th.join();
}

}  // namespace

IsingLattice random_ising_lattice(int rows, int cols, LatticeTopology topology,
                                  double j_stddev, double h_stddev, Rng& rng) {
  if (rows < 1 || cols < 1)
    throw std::invalid_argument("lattice dimensions must be positive");
  IsingLattice lat;
  lat.rows = rows;
  lat.cols = cols;
  lat.topology = topology;
  const bool wrap = topology == LatticeTopology::torus;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const int s = lat.site(r, c);
      if (wrap || c + 1 < cols) {
        const int right = lat.site(r, (c + 1) % cols);
        if (right != s) lat.couplings.emplace_back(s, right, rng.normal(0.0, j_stddev));
      }
      if (wrap || r + 1 < rows) {
        const int down = lat.site((r + 1) % rows, c);
        if (down != s) lat.couplings.emplace_back(s, down, rng.normal(0.0, j_stddev));
      }
    }
  lat.fields.resize(static_cast<size_t>(lat.num_sites()));
  for (auto& h : lat.fields) h = rng.normal(0.0, h_stddev);
  return lat;
}

FactorGraph static_ising_graph(const IsingLattice& lat) {
  FactorGraph g;
  g.variables.resize(static_cast<size_t>(lat.num_sites()));
  for (int i = 0; i < lat.num_sites(); ++i) g.variables[static_cast<size_t>(i)] = {i, 2};

  int id = 0;
  for (const auto& [a, b, j] : lat.couplings) {
    FactorTable f;
    f.id = id++;
    f.scope = {std::min(a, b), std::max(a, b)};
    f.values.resize(4);
    for (int sa = 0; sa < 2; ++sa)
      for (int sb = 0; sb < 2; ++sb)
        f.values[static_cast<size_t>(sa * 2 + sb)] =
            std::exp(j * spin_of_state(sa) * spin_of_state(sb));
    g.factors.push_back(std::move(f));
  }
  for (int i = 0; i < lat.num_sites(); ++i) {
    FactorTable f;
    f.id = id++;
    f.scope = {i};
    const double h = lat.fields[static_cast<size_t>(i)];
    f.values = {std::exp(h), std::exp(-h)};
    g.factors.push_back(std::move(f));
  }
  return g;
}

TemporalModel kinetic_ising_model(const IsingLattice& lat, double theta_dt) {
  if (!(theta_dt > 0.0 && theta_dt < 1.0))
    throw std::invalid_argument("flip weight must lie strictly between 0 and 1");
  std::vector<Variable> vars(static_cast<size_t>(lat.num_sites()));
  for (int i = 0; i < lat.num_sites(); ++i) vars[static_cast<size_t>(i)] = {i, 2};

  std::vector<TemporalFactor> factors;
  int id = 0;
  for (const auto& [a, b, j] : lat.couplings) {
    // an exactly-zero coupling contributes a constant factor; materializing it
    // would still reshape the region graph, so leave the sites uncoupled
    if (j == 0.0) continue;
    TemporalFactor f;
    f.id = id++;
    f.past_scope = {std::min(a, b), std::max(a, b)};
    f.future_scope = f.past_scope;
    f.values.resize(16);
    for (int p = 0; p < 4; ++p)
      for (int q = 0; q < 4; ++q) {
        const double past = spin_of_state(p >> 1) * spin_of_state(p & 1);
        const double future = spin_of_state(q >> 1) * spin_of_state(q & 1);
        f.values[static_cast<size_t>(p * 4 + q)] = std::exp(j * (future - past));
      }
    factors.push_back(std::move(f));
  }
  for (int i = 0; i < lat.num_sites(); ++i) {
    TemporalFactor f;
    f.id = id++;
    f.past_scope = {i};
    f.future_scope = {i};
    const double h = lat.fields[static_cast<size_t>(i)];
    f.values.resize(4);
    for (int p = 0; p < 2; ++p)
      for (int q = 0; q < 2; ++q) {
        const double weight = p == q ? 1.0 - theta_dt : theta_dt;
        f.values[static_cast<size_t>(p * 2 + q)] =
            weight * std::exp(h * (spin_of_state(q) - spin_of_state(p)));
      }
    factors.push_back(std::move(f));
  }
  return make_temporal_model(std::move(vars), std::move(factors));
}

KikuchiVariables aggregate_kikuchi_variables(const TemporalModel& tm,
                                             const PathBeliefStore& store) {
  if (store.prior.size() != tm.regions.regions.size() ||
      store.path.size() != tm.regions.regions.size())
    throw std::invalid_argument("store does not match the region graph");

  KikuchiVariables v;
  int sites = 0, pairs = 0;
  for (size_t r = 0; r < tm.regions.regions.size(); ++r) {
    const auto& reg = tm.regions.regions[r];
    for (int var : reg.variables)
      if (tm.cardinality(var) != 2)
        throw std::invalid_argument("aggregation needs binary variables");
    if (reg.variables.size() == 1) {
      if (store.prior[r].size() != 2 || store.path[r].size() != 4)
        throw std::invalid_argument("store tables have the wrong length");
      for (int i = 0; i < 2; ++i) v.site_state[static_cast<size_t>(i)] += store.prior[r][static_cast<size_t>(i)];
      for (int i = 0; i < 4; ++i) v.site_path[static_cast<size_t>(i)] += store.path[r][static_cast<size_t>(i)];
      ++sites;
    } else if (reg.variables.size() == 2) {
      if (store.prior[r].size() != 4 || store.path[r].size() != 16)
        throw std::invalid_argument("store tables have the wrong length");
      for (int i = 0; i < 4; ++i) v.pair_state[static_cast<size_t>(i)] += store.prior[r][static_cast<size_t>(i)];
      for (int i = 0; i < 16; ++i) v.pair_path[static_cast<size_t>(i)] += store.path[r][static_cast<size_t>(i)];
      ++pairs;
    } else {
      throw std::invalid_argument("a two-level pairwise region graph is required");
    }
  }
  if (sites == 0 || pairs == 0)
    throw std::invalid_argument("a two-level pairwise region graph is required");
  for (auto& x : v.site_state) x /= sites;
  for (auto& x : v.site_path) x /= sites;
  for (auto& x : v.pair_state) x /= pairs;
  for (auto& x : v.pair_path) x /= pairs;
  return v;
}

double kikuchi_ppf(const KikuchiVariables& v, double coupling, double field, int z,
                   double theta_dt) {
  auto ent = [](double x) { return x > 0.0 ? x * std::log(x) - x : 0.0; };
  auto spin = [](int s) { return s == 0 ? 1.0 : -1.0; };

  double ppf = 0.0;
  for (double x : v.site_path) ppf += (z - 1) * ent(x);
  for (double y : v.pair_path) ppf -= 0.5 * z * ent(y);
  for (int p = 0; p < 2; ++p)
    for (int f = 0; f < 2; ++f)
      ppf += v.site_path[static_cast<size_t>(2 * p + f)] *
             (p == f ? std::log1p(-theta_dt) : std::log(theta_dt));
  for (int p = 0; p < 4; ++p)
    for (int f = 0; f < 4; ++f) {
      const double past = spin(p >> 1) * spin(p & 1);
      const double future = spin(f >> 1) * spin(f & 1);
      ppf += 0.5 * z * coupling * v.pair_path[static_cast<size_t>(4 * p + f)] * (future - past);
    }
  for (int p = 0; p < 2; ++p)
    for (int f = 0; f < 2; ++f)
      ppf += field * v.site_path[static_cast<size_t>(2 * p + f)] * (spin(f) - spin(p));
  return ppf;
}

namespace {

// two-slice static graph: past sites 0..N-1, future sites N..2N-1, a unary
// prior per past site, then the transition tables as ordinary factors
FactorGraph two_slice_graph(const TemporalModel& tm,
                            const std::vector<std::vector<double>>& prior) {
  const int n = tm.num_variables();
  FactorGraph g;
  g.variables.resize(static_cast<size_t>(2 * n));
  for (int i = 0; i < 2 * n; ++i)
    g.variables[static_cast<size_t>(i)] = {i, tm.cardinality(i % n)};
  int id = 0;
  for (int i = 0; i < n; ++i) {
    FactorTable f;
    f.id = id++;
    f.scope = {i};
    f.values = prior[static_cast<size_t>(i)];
    g.factors.push_back(std::move(f));
  }
  for (const auto& tf : tm.factors) {
    FactorTable f;
    f.id = id++;
    f.scope = tf.past_scope;
    for (int v : tf.future_scope) f.scope.push_back(v + n);
    f.values = tf.values;
    g.factors.push_back(std::move(f));
  }
  return g;
}

std::vector<int> all_site_cards(const TemporalModel& tm) {
  std::vector<int> cards(static_cast<size_t>(tm.num_variables()));
  for (int i = 0; i < tm.num_variables(); ++i) cards[static_cast<size_t>(i)] = tm.cardinality(i);
  return cards;
}

}  // namespace

BeliefTraceResult run_belief_trace(const IsingLattice& lat, double theta_dt, int steps,
                                   const std::vector<int>& initial_state,
                                   const SolverOptions& opts) {
  const TemporalModel tm = kinetic_ising_model(lat, theta_dt);
  const int n = tm.num_variables();
  if (initial_state.size() != static_cast<size_t>(n))
    throw std::invalid_argument("one initial state per site required");

  BeliefTraceResult out;

  PathSolver solver(tm, opts, PriorCoupling::per_state);
  solver.set_store(point_priors(tm, initial_state));
  const EvolveResult evolved = solver.evolve(steps);
  out.all_converged = evolved.all_converged;

  // the comparator evolves its own beliefs: each step it solves the two-slice
  // graph under a product prior and carries the future marginals forward; it is
  // a reference curve, so it always runs to its own convergence regardless of
  // the sweep budget given to the path solver
  SolverOptions bp_opts = opts;
  bp_opts.tolerance = 1e-10;
  bp_opts.max_iterations = 2000;
  std::vector<std::vector<double>> bp_prior(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    bp_prior[static_cast<size_t>(i)].assign(static_cast<size_t>(tm.cardinality(i)), 0.0);
    bp_prior[static_cast<size_t>(i)][static_cast<size_t>(initial_state[static_cast<size_t>(i)])] =
        1.0;
  }
  std::vector<std::vector<std::vector<double>>> bp_trace;
  bp_trace.reserve(static_cast<size_t>(steps));
  for (int s = 0; s < steps; ++s) {
    const FactorGraph g = two_slice_graph(tm, bp_prior);
    BeliefSet beliefs;
    const SolveResult res = sum_product_bp(g, bp_opts, beliefs);
    out.all_converged = out.all_converged && res.converged;
    for (int i = 0; i < n; ++i)
      bp_prior[static_cast<size_t>(i)] = beliefs.variable_beliefs[static_cast<size_t>(n + i)];
    bp_trace.push_back(bp_prior);
  }

  const auto cards = all_site_cards(tm);
  const auto total = table_size(cards);
  std::vector<std::vector<double>> exact_joint;
  if (total <= static_cast<std::int64_t>(kDefaultTemporalCap)) {
    out.has_exact = true;
    std::vector<double> b0(static_cast<size_t>(total), 0.0);
    b0[static_cast<size_t>(state_to_index(cards, initial_state))] = 1.0;
    exact_joint = exact_temporal_evolve(tm, b0, steps);
  }

  for (int s = 0; s < steps; ++s)
    for (int i = 0; i < n; ++i) {
      BeliefTraceRow row;
      row.step = s + 1;
      row.site = i;
      row.dynbp_up = evolved.node_beliefs[static_cast<size_t>(s)][static_cast<size_t>(i)][0];
      row.bp_up = bp_trace[static_cast<size_t>(s)][static_cast<size_t>(i)][0];
      if (out.has_exact)
        row.exact_up =
            marginal_of_joint(cards, exact_joint[static_cast<size_t>(s)], {i})[0];
      out.rows.push_back(row);
    }
  return out;
}

HistogramResult run_error_histogram(int rows, int cols, double h_stddev, double j_stddev,
                                    int seeds, int steps, double theta_dt,
                                    std::uint64_t base_seed, const SolverOptions& opts,
                                    int jobs) {
  struct TrialOut {
    std::vector<HistogramRow> rows;
    std::vector<ResidualRow> residuals;
  };
  std::vector<TrialOut> trials(static_cast<size_t>(seeds));

  run_trials(seeds, jobs, [&](int t) {
    Rng rng(Rng::derive_seed(base_seed, static_cast<std::uint64_t>(t)));
    const IsingLattice lat =
        random_ising_lattice(rows, cols, LatticeTopology::torus, j_stddev, h_stddev, rng);
    const TemporalModel tm = kinetic_ising_model(lat, theta_dt);
    const std::vector<int> all_up(static_cast<size_t>(tm.num_variables()), 0);

    PathSolver solver(tm, opts, PriorCoupling::per_state);
    solver.set_store(point_priors(tm, all_up));
    const EvolveResult evolved = solver.evolve(steps);

    const auto cards = all_site_cards(tm);
    std::vector<double> b0(static_cast<size_t>(table_size(cards)), 0.0);
    b0[static_cast<size_t>(state_to_index(cards, all_up))] = 1.0;
    const auto exact_joint = exact_temporal_evolve(tm, b0, steps);

    auto& out = trials[static_cast<size_t>(t)];
    for (int s = 0; s < steps; ++s) {
      const double b =
          evolved.node_beliefs[static_cast<size_t>(s)][0][0];
      const double p = marginal_of_joint(cards, exact_joint[static_cast<size_t>(s)], {0})[0];
      HistogramRow row;
      row.seed_index = t;
      row.step = s + 1;
      row.rel_err = std::abs(b - p) / p;
      row.converged = evolved.steps[static_cast<size_t>(s)].converged;
      out.rows.push_back(row);
      const auto& diag = evolved.steps[static_cast<size_t>(s)];
      for (int sw = 0; sw < diag.sweeps; ++sw) {
        ResidualRow res;
        res.seed_index = t;
        res.step = s + 1;
        res.sweep = sw + 1;
        res.sweep_delta = diag.sweep_delta[static_cast<size_t>(sw)];
        res.prior_residual = diag.prior_residual[static_cast<size_t>(sw)];
        res.cross_residual = diag.cross_residual[static_cast<size_t>(sw)];
        res.objective = diag.objective[static_cast<size_t>(sw)];
        out.residuals.push_back(res);
      }
    }
  });

  HistogramResult out;
  for (const auto& t : trials) {
    for (const auto& row : t.rows) {
      out.rows.push_back(row);
      ++out.total_steps;
      if (row.converged) ++out.converged_steps;
    }
    out.residuals.insert(out.residuals.end(), t.residuals.begin(), t.residuals.end());
  }
  return out;
}

RatioResult free_energy_ratio_experiment(int rows, int cols, double h_stddev,
                                         double j_stddev, int trials, double theta_dt,
                                         std::uint64_t base_seed, const SolverOptions& opts,
                                         int jobs) {
  RatioResult out;
  out.rows.resize(static_cast<size_t>(trials));
  run_trials(trials, jobs, [&](int t) {
    Rng rng(Rng::derive_seed(base_seed, static_cast<std::uint64_t>(t)));
    const IsingLattice lat =
        random_ising_lattice(rows, cols, LatticeTopology::torus, j_stddev, h_stddev, rng);
    const TemporalModel tm = kinetic_ising_model(lat, theta_dt);

    RatioRow row;
    row.trial = t;
    {
      PathSolver solver(tm, opts, PriorCoupling::per_state);
      solver.set_store(uniform_priors(tm));
      const StepDiagnostics diag = solver.step();
      row.fe_constrained = diag.free_energy;
      row.constrained_converged = diag.converged;
    }
    {
      PathSolver solver(tm, opts, PriorCoupling::normalization_only);
      solver.set_store(uniform_priors(tm));
      const StepDiagnostics diag = solver.step();
      row.fe_extended = diag.free_energy;
      row.extended_converged = diag.converged;
    }
    out.rows[static_cast<size_t>(t)] = row;
  });
  return out;
}

}  // namespace dynbp
