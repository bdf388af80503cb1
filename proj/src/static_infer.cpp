#include "dynbp/static_infer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace dynbp {

namespace {

double clamped_log(double v, double floor) { return std::log(std::max(v, floor)); }

void normalize_log_max(std::vector<double>& logs) {
  const double mx = *std::max_element(logs.begin(), logs.end());
  for (auto& l : logs) l -= mx;
}

void damp_and_clamp(std::vector<double>& log_msg, const std::vector<double>& log_upd,
                    double damping, double floor) {
  const double lf = std::log(floor);
  for (size_t i = 0; i < log_msg.size(); ++i) {
    double l = damping * log_msg[i] + (1.0 - damping) * log_upd[i];
    log_msg[i] = std::max(l, lf);
  }
  normalize_log_max(log_msg);
}

void normalize_sum(std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  if (s > 0.0)
    for (auto& x : v) x /= s;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

}  // namespace

SolveResult sum_product_bp(const FactorGraph& g, const SolverOptions& opts, BeliefSet& out) {
  const int n = g.num_variables();
  const int m = g.num_factors();

  // incidence and per-factor digit tables
  struct Slot {
    int factor, pos;
  };
  std::vector<std::vector<Slot>> var_slots(static_cast<size_t>(n));
  for (int a = 0; a < m; ++a) {
    const auto& sc = g.factors[static_cast<size_t>(a)].scope;
    for (size_t k = 0; k < sc.size(); ++k)
      var_slots[static_cast<size_t>(sc[k])].push_back({a, static_cast<int>(k)});
  }

  // log messages, indexed per (factor, scope position)
  std::vector<std::vector<std::vector<double>>> to_var(static_cast<size_t>(m));
  std::vector<std::vector<std::vector<double>>> to_factor(static_cast<size_t>(m));
  std::vector<std::vector<double>> logf(static_cast<size_t>(m));
  for (int a = 0; a < m; ++a) {
    const auto& f = g.factors[static_cast<size_t>(a)];
    logf[static_cast<size_t>(a)].resize(f.values.size());
    for (size_t i = 0; i < f.values.size(); ++i)
      logf[static_cast<size_t>(a)][i] = clamped_log(f.values[i], opts.zero_floor);
    to_var[static_cast<size_t>(a)].resize(f.scope.size());
    to_factor[static_cast<size_t>(a)].resize(f.scope.size());
    for (size_t k = 0; k < f.scope.size(); ++k) {
      const auto c = static_cast<size_t>(g.cardinality(f.scope[k]));
      to_var[static_cast<size_t>(a)][k].assign(c, 0.0);
      to_factor[static_cast<size_t>(a)][k].assign(c, 0.0);
    }
  }

  auto variable_belief = [&](int v) {
    std::vector<double> logs(static_cast<size_t>(g.cardinality(v)), 0.0);
    for (const auto& s : var_slots[static_cast<size_t>(v)])
      for (size_t x = 0; x < logs.size(); ++x)
        logs[x] += to_var[static_cast<size_t>(s.factor)][static_cast<size_t>(s.pos)][x];
    normalize_log_max(logs);
    for (auto& l : logs) l = std::exp(l);
    normalize_sum(logs);
    return logs;
  };

  out.variable_beliefs.assign(static_cast<size_t>(n), {});
  for (int v = 0; v < n; ++v) out.variable_beliefs[static_cast<size_t>(v)] = variable_belief(v);

  SolveResult res;
  std::vector<int> digits;
  std::vector<double> upd;
  for (res.iterations = 1; res.iterations <= opts.max_iterations; ++res.iterations) {
    // factor -> variable
    for (int a = 0; a < m; ++a) {
      const auto& f = g.factors[static_cast<size_t>(a)];
      const auto cards = scope_cards(g, f.scope);
      const size_t arity = f.scope.size();
      // linear copies of the incoming messages
      std::vector<std::vector<double>> inc(arity);
      for (size_t k = 0; k < arity; ++k) {
        inc[k].resize(static_cast<size_t>(cards[k]));
        for (size_t x = 0; x < inc[k].size(); ++x)
          inc[k][x] = std::exp(to_factor[static_cast<size_t>(a)][k][x]);
      }
      std::vector<std::vector<double>> acc(arity);
      for (size_t k = 0; k < arity; ++k) acc[k].assign(static_cast<size_t>(cards[k]), 0.0);
      digits.assign(arity, 0);
      for (size_t e = 0; e < f.values.size(); ++e) {
        double w = std::exp(logf[static_cast<size_t>(a)][e]);
        for (size_t k = 0; k < arity; ++k) w *= inc[k][static_cast<size_t>(digits[k])];
        for (size_t k = 0; k < arity; ++k) {
          const double in = inc[k][static_cast<size_t>(digits[k])];
          acc[k][static_cast<size_t>(digits[k])] += w / in;
        }
        for (size_t k = arity; k-- > 0;) {
          if (++digits[k] < cards[k]) break;
          digits[k] = 0;
        }
      }
      for (size_t k = 0; k < arity; ++k) {
        upd.resize(acc[k].size());
        for (size_t x = 0; x < upd.size(); ++x) upd[x] = clamped_log(acc[k][x], opts.message_floor);
        normalize_log_max(upd);
        damp_and_clamp(to_var[static_cast<size_t>(a)][k], upd, opts.damping, opts.message_floor);
      }
    }
    // variable -> factor
    for (int v = 0; v < n; ++v) {
      const auto& slots = var_slots[static_cast<size_t>(v)];
      for (const auto& s : slots) {
        upd.assign(static_cast<size_t>(g.cardinality(v)), 0.0);
        for (const auto& o : slots) {
          if (o.factor == s.factor && o.pos == s.pos) continue;
          for (size_t x = 0; x < upd.size(); ++x)
            upd[x] += to_var[static_cast<size_t>(o.factor)][static_cast<size_t>(o.pos)][x];
        }
        normalize_log_max(upd);
        damp_and_clamp(to_factor[static_cast<size_t>(s.factor)][static_cast<size_t>(s.pos)], upd,
                       opts.damping, opts.message_floor);
      }
    }

    double delta = 0.0;
    for (int v = 0; v < n; ++v) {
      auto nb = variable_belief(v);
      delta = std::max(delta, max_abs_diff(nb, out.variable_beliefs[static_cast<size_t>(v)]));
      out.variable_beliefs[static_cast<size_t>(v)] = std::move(nb);
    }
    res.final_delta = delta;
    if (delta < opts.tolerance) {
      res.converged = true;
      break;
    }
  }
  res.iterations = std::min(res.iterations, opts.max_iterations);

  out.factor_beliefs.assign(static_cast<size_t>(m), {});
  digits.clear();
  for (int a = 0; a < m; ++a) {
    const auto& f = g.factors[static_cast<size_t>(a)];
    const auto cards = scope_cards(g, f.scope);
    const size_t arity = f.scope.size();
    std::vector<double> b(f.values.size());
    std::vector<int> dg(arity, 0);
    for (size_t e = 0; e < f.values.size(); ++e) {
      double lw = logf[static_cast<size_t>(a)][e];
      for (size_t k = 0; k < arity; ++k)
        lw += to_factor[static_cast<size_t>(a)][k][static_cast<size_t>(dg[k])];
      b[e] = lw;
      for (size_t k = arity; k-- > 0;) {
        if (++dg[k] < cards[k]) break;
        dg[k] = 0;
      }
    }
    normalize_log_max(b);
    for (auto& x : b) x = std::exp(x);
    normalize_sum(b);
    out.factor_beliefs[static_cast<size_t>(a)] = std::move(b);
  }
  out.region_beliefs.clear();
  return res;
}

namespace {

// joint-index projection from a region onto a subset region
std::vector<std::uint32_t> projection_map(const FactorGraph& g, const Region& big,
                                          const Region& small) {
  const auto big_cards = scope_cards(g, big.variables);
  const auto small_cards = scope_cards(g, small.variables);
  std::vector<size_t> pos(small.variables.size());
  for (size_t k = 0; k < small.variables.size(); ++k) {
    const auto it =
        std::lower_bound(big.variables.begin(), big.variables.end(), small.variables[k]);
    pos[k] = static_cast<size_t>(it - big.variables.begin());
  }
  const auto size = static_cast<size_t>(table_size(big_cards));
  std::vector<std::uint32_t> map(size);
  std::vector<int> digits(big.variables.size(), 0);
  for (size_t j = 0; j < size; ++j) {
    std::uint64_t sub = 0;
    for (size_t k = 0; k < pos.size(); ++k)
      sub = sub * static_cast<std::uint64_t>(small_cards[k]) +
            static_cast<std::uint64_t>(digits[pos[k]]);
    map[j] = static_cast<std::uint32_t>(sub);
    for (size_t k = big.variables.size(); k-- > 0;) {
      if (++digits[k] < big_cards[k]) break;
      digits[k] = 0;
    }
  }
  return map;
}

}  // namespace

SolveResult gbp_parent_to_child(const FactorGraph& g, const RegionGraph& rg,
                                const SolverOptions& opts, BeliefSet& out) {
  const int nr = rg.num_regions();
  if (rg.counting.size() != static_cast<size_t>(nr))
    throw std::invalid_argument("region graph has no counting numbers");

  // per-region clamped-log factor tables, aligned to the region's joint index
  std::vector<std::vector<double>> region_logf(static_cast<size_t>(nr));
  std::vector<size_t> region_size(static_cast<size_t>(nr));
  for (int r = 0; r < nr; ++r) {
    const auto& reg = rg.regions[static_cast<size_t>(r)];
    const auto cards = scope_cards(g, reg.variables);
    const auto size = static_cast<size_t>(table_size(cards));
    region_size[static_cast<size_t>(r)] = size;
    region_logf[static_cast<size_t>(r)].assign(size, 0.0);
    for (int a : reg.factors) {
      const auto& f = g.factors[static_cast<size_t>(a)];
      Region scope_region;
      scope_region.variables = f.scope;
      const auto map = projection_map(g, reg, scope_region);
      for (size_t j = 0; j < size; ++j)
        region_logf[static_cast<size_t>(r)][j] +=
            clamped_log(f.values[map[j]], opts.zero_floor);
    }
  }

  // projection maps big-region -> contained region, built on demand
  std::map<std::pair<int, int>, std::vector<std::uint32_t>> proj;
  auto proj_map = [&](int big, int small) -> const std::vector<std::uint32_t>& {
    auto key = std::make_pair(big, small);
    auto it = proj.find(key);
    if (it == proj.end())
      it = proj
               .emplace(key, projection_map(g, rg.regions[static_cast<size_t>(big)],
                                            rg.regions[static_cast<size_t>(small)]))
               .first;
    return it->second;
  };

  const int ne = static_cast<int>(rg.edges.size());
  std::vector<std::vector<double>> log_msg(static_cast<size_t>(ne));
  for (int e = 0; e < ne; ++e)
    log_msg[static_cast<size_t>(e)].assign(region_size[static_cast<size_t>(rg.edges[static_cast<size_t>(e)].second)],
                                           0.0);
  std::map<std::pair<int, int>, int> edge_index;
  for (int e = 0; e < ne; ++e) edge_index[rg.edges[static_cast<size_t>(e)]] = e;

  // relation sets and the factor lists F_{P\R} per edge
  std::vector<RelationSets> rels(static_cast<size_t>(ne));
  std::vector<std::vector<int>> extra_factors(static_cast<size_t>(ne));
  for (int e = 0; e < ne; ++e) {
    const auto [p, c] = rg.edges[static_cast<size_t>(e)];
    rels[static_cast<size_t>(e)] = relation_sets(rg, p, c);
    const auto& pf = rg.regions[static_cast<size_t>(p)].factors;
    const auto& cf = rg.regions[static_cast<size_t>(c)].factors;
    std::set_difference(pf.begin(), pf.end(), cf.begin(), cf.end(),
                        std::back_inserter(extra_factors[static_cast<size_t>(e)]));
  }

  // all messages crossing into the covering set of each region
  std::vector<std::vector<int>> crossing(static_cast<size_t>(nr));
  for (int r = 0; r < nr; ++r) {
    std::vector<char> inside(static_cast<size_t>(nr), 0);
    for (int d : covering_set(rg, r)) inside[static_cast<size_t>(d)] = 1;
    for (int e = 0; e < ne; ++e) {
      const auto [i, j] = rg.edges[static_cast<size_t>(e)];
      if (inside[static_cast<size_t>(j)] && !inside[static_cast<size_t>(i)])
        crossing[static_cast<size_t>(r)].push_back(e);
    }
  }

  auto region_belief = [&](int r) {
    const auto size = region_size[static_cast<size_t>(r)];
    std::vector<double> logs(region_logf[static_cast<size_t>(r)]);
    for (int e : crossing[static_cast<size_t>(r)]) {
      const int j = rg.edges[static_cast<size_t>(e)].second;
      if (j == r) {
        for (size_t x = 0; x < size; ++x) logs[x] += log_msg[static_cast<size_t>(e)][x];
      } else {
        const auto& map = proj_map(r, j);
        for (size_t x = 0; x < size; ++x)
          logs[x] += log_msg[static_cast<size_t>(e)][map[x]];
      }
    }
    normalize_log_max(logs);
    for (auto& l : logs) l = std::exp(l);
    normalize_sum(logs);
    return logs;
  };

  out.region_beliefs.assign(static_cast<size_t>(nr), {});
  for (int r = 0; r < nr; ++r) out.region_beliefs[static_cast<size_t>(r)] = region_belief(r);

  SolveResult res;
  for (res.iterations = 1; res.iterations <= opts.max_iterations; ++res.iterations) {
    for (int e = 0; e < ne; ++e) {
      const auto [p, c] = rg.edges[static_cast<size_t>(e)];
      const auto psize = region_size[static_cast<size_t>(p)];
      const auto csize = region_size[static_cast<size_t>(c)];

      // numerator: marginalize the parent's extra factors times N-set messages
      std::vector<double> lw(psize, 0.0);
      for (int a : extra_factors[static_cast<size_t>(e)]) {
        const auto& f = g.factors[static_cast<size_t>(a)];
        Region scope_region;
        scope_region.variables = f.scope;
        const auto map = projection_map(g, rg.regions[static_cast<size_t>(p)], scope_region);
        for (size_t x = 0; x < psize; ++x)
          lw[x] += clamped_log(f.values[map[x]], opts.zero_floor);
      }
      for (const auto& [i, j] : rels[static_cast<size_t>(e)].numerator) {
        const int me = edge_index.at({i, j});
        if (j == p) {
          for (size_t x = 0; x < psize; ++x) lw[x] += log_msg[static_cast<size_t>(me)][x];
        } else {
          const auto& map = proj_map(p, j);
          for (size_t x = 0; x < psize; ++x)
            lw[x] += log_msg[static_cast<size_t>(me)][map[x]];
        }
      }
      const double mx = *std::max_element(lw.begin(), lw.end());
      std::vector<double> num(csize, 0.0);
      {
        const auto& map = proj_map(p, c);
        for (size_t x = 0; x < psize; ++x) num[map[x]] += std::exp(lw[x] - mx);
      }
      std::vector<double> upd(csize);
      for (size_t x = 0; x < csize; ++x)
        upd[x] = std::log(std::max(num[x], opts.message_floor)) + mx;

      for (const auto& [i, j] : rels[static_cast<size_t>(e)].denominator) {
        const int me = edge_index.at({i, j});
        if (j == c) {
          for (size_t x = 0; x < csize; ++x) upd[x] -= log_msg[static_cast<size_t>(me)][x];
        } else {
          const auto& map = proj_map(c, j);
          for (size_t x = 0; x < csize; ++x)
            upd[x] -= log_msg[static_cast<size_t>(me)][map[x]];
        }
      }
      normalize_log_max(upd);
      damp_and_clamp(log_msg[static_cast<size_t>(e)], upd, opts.damping, opts.message_floor);
    }

    double delta = 0.0;
    for (int r = 0; r < nr; ++r) {
      auto nb = region_belief(r);
      delta = std::max(delta, max_abs_diff(nb, out.region_beliefs[static_cast<size_t>(r)]));
      out.region_beliefs[static_cast<size_t>(r)] = std::move(nb);
    }
    res.final_delta = delta;
    if (delta < opts.tolerance) {
      res.converged = true;
      break;
    }
  }
  res.iterations = std::min(res.iterations, opts.max_iterations);

  // variable beliefs come from the smallest region containing the variable
  out.variable_beliefs.assign(static_cast<size_t>(g.num_variables()), {});
  for (int v = 0; v < g.num_variables(); ++v) {
    int best = -1;
    for (int r = 0; r < nr; ++r) {
      const auto& vars = rg.regions[static_cast<size_t>(r)].variables;
      if (!std::binary_search(vars.begin(), vars.end(), v)) continue;
      if (best == -1 ||
          vars.size() < rg.regions[static_cast<size_t>(best)].variables.size())
        best = r;
    }
    if (best == -1) {
      out.variable_beliefs[static_cast<size_t>(v)].assign(
          static_cast<size_t>(g.cardinality(v)), 1.0 / g.cardinality(v));
      continue;
    }
    const auto& reg = rg.regions[static_cast<size_t>(best)];
    Region single;
    single.variables = {v};
    const auto map = projection_map(g, reg, single);
    std::vector<double> b(static_cast<size_t>(g.cardinality(v)), 0.0);
    const auto& q = out.region_beliefs[static_cast<size_t>(best)];
    for (size_t j = 0; j < q.size(); ++j) b[map[j]] += q[j];
    normalize_sum(b);
    out.variable_beliefs[static_cast<size_t>(v)] = std::move(b);
  }
  out.factor_beliefs.clear();
  return res;
}

double region_free_energy(const RegionGraph& rg, const FactorGraph& g,
                          const std::vector<std::vector<double>>& region_beliefs,
                          double zero_floor) {
  if (region_beliefs.size() != rg.regions.size())
    throw std::invalid_argument("one belief table per region required");
  double fe = 0.0;
  for (int r = 0; r < rg.num_regions(); ++r) {
    const auto& reg = rg.regions[static_cast<size_t>(r)];
    const auto cards = scope_cards(g, reg.variables);
    const auto size = static_cast<size_t>(table_size(cards));
    const auto& q = region_beliefs[static_cast<size_t>(r)];
    if (q.size() != size) throw std::invalid_argument("belief table has wrong length");
    std::vector<double> h(size, 0.0);
    for (int a : reg.factors) {
      const auto& f = g.factors[static_cast<size_t>(a)];
      Region scope_region;
      scope_region.variables = f.scope;
      const auto map = projection_map(g, reg, scope_region);
      for (size_t j = 0; j < size; ++j) h[j] -= clamped_log(f.values[map[j]], zero_floor);
    }
    double term = 0.0;
    for (size_t j = 0; j < size; ++j) {
      if (q[j] == 0.0) continue;
      term += q[j] * (h[j] + clamped_log(q[j], zero_floor));
    }
    fe += rg.counting[static_cast<size_t>(r)] * term;
  }
  return fe;
}

std::vector<double> mean_field_magnetizations(
    int n, const std::vector<std::tuple<int, int, double>>& couplings,
    const std::vector<double>& fields, const SolverOptions& opts, SolveResult* result) {
  if (fields.size() != static_cast<size_t>(n)) throw std::invalid_argument("one field per site");
  std::vector<std::vector<std::pair<int, double>>> nbr(static_cast<size_t>(n));
  for (const auto& [i, j, jij] : couplings) {
    if (i < 0 || j < 0 || i >= n || j >= n || i == j)
      throw std::invalid_argument("bad coupling pair");
    nbr[static_cast<size_t>(i)].emplace_back(j, jij);
    nbr[static_cast<size_t>(j)].emplace_back(i, jij);
  }
  std::vector<double> m(static_cast<size_t>(n), 0.0), next(static_cast<size_t>(n));
  SolveResult res;
  for (res.iterations = 1; res.iterations <= opts.max_iterations; ++res.iterations) {
    double delta = 0.0;
    for (int i = 0; i < n; ++i) {
      double field = fields[static_cast<size_t>(i)];
      for (const auto& [j, jij] : nbr[static_cast<size_t>(i)])
        field += jij * m[static_cast<size_t>(j)];
      const double fresh = std::tanh(field);
      next[static_cast<size_t>(i)] =
          opts.damping * m[static_cast<size_t>(i)] + (1.0 - opts.damping) * fresh;
      delta = std::max(delta, std::abs(next[static_cast<size_t>(i)] - m[static_cast<size_t>(i)]));
    }
    m.swap(next);
    res.final_delta = delta;
    if (delta < opts.tolerance) {
      res.converged = true;
      break;
    }
  }
  res.iterations = std::min(res.iterations, opts.max_iterations);
  if (result) *result = res;
  return m;
}

}  // namespace dynbp
