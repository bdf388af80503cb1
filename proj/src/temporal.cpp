#include "dynbp/temporal.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>

namespace dynbp {

namespace {

std::vector<int> sorted_union(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<int> u;
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(u));
  return u;
}

// shadow static graph over the union scopes; drives region construction and
// structural validation
FactorGraph union_scope_graph(const TemporalModel& tm) {
  FactorGraph g;
  g.variables = tm.variables;
  g.factors.reserve(tm.factors.size());
  for (const auto& f : tm.factors) {
    FactorTable t;
    t.id = f.id;
    t.scope = sorted_union(f.past_scope, f.future_scope);
    t.values.assign(static_cast<size_t>(table_size(scope_cards(g, t.scope))), 1.0);
    g.factors.push_back(std::move(t));
  }
  return g;
}

std::vector<int> region_cards(const TemporalModel& tm, const Region& r) {
  std::vector<int> cards(r.variables.size());
  for (size_t k = 0; k < r.variables.size(); ++k)
    cards[k] = tm.cardinality(r.variables[k]);
  return cards;
}

size_t region_state_size(const TemporalModel& tm, const Region& r) {
  return static_cast<size_t>(table_size(region_cards(tm, r)));
}

// positions of the scope variables inside the (sorted) region variable list
std::vector<size_t> scope_positions(const Region& r, const std::vector<int>& scope) {
  std::vector<size_t> pos(scope.size());
  for (size_t k = 0; k < scope.size(); ++k) {
    const auto it = std::lower_bound(r.variables.begin(), r.variables.end(), scope[k]);
    if (it == r.variables.end() || *it != scope[k])
      throw std::invalid_argument("factor scope leaves its region");
    pos[k] = static_cast<size_t>(it - r.variables.begin());
  }
  return pos;
}

// map from a region path index (past * size + future) to the factor's own
// table index over (past scope, future scope), last variable fastest
std::vector<std::uint32_t> factor_path_map(const TemporalModel& tm, const Region& r,
                                           const TemporalFactor& f) {
  const auto cards = region_cards(tm, r);
  const size_t size = region_state_size(tm, r);
  const auto past_pos = scope_positions(r, f.past_scope);
  const auto future_pos = scope_positions(r, f.future_scope);

  std::vector<int> digits(cards.size());
  auto sub_index = [&](size_t state, const std::vector<size_t>& pos,
                       const std::vector<int>& scope) {
    index_to_state(cards, static_cast<std::int64_t>(state), digits);
    std::uint64_t idx = 0;
    for (size_t k = 0; k < pos.size(); ++k)
      idx = idx * static_cast<std::uint64_t>(tm.cardinality(scope[k])) +
            static_cast<std::uint64_t>(digits[pos[k]]);
    return idx;
  };

  std::vector<std::uint64_t> past_sub(size), future_sub(size);
  std::uint64_t future_block = 1;
  for (int v : f.future_scope) future_block *= static_cast<std::uint64_t>(tm.cardinality(v));
  for (size_t s = 0; s < size; ++s) {
    past_sub[s] = sub_index(s, past_pos, f.past_scope) * future_block;
    future_sub[s] = sub_index(s, future_pos, f.future_scope);
  }

  std::vector<std::uint32_t> map(size * size);
  for (size_t p = 0; p < size; ++p)
    for (size_t q = 0; q < size; ++q)
      map[p * size + q] = static_cast<std::uint32_t>(past_sub[p] + future_sub[q]);
  return map;
}

// path index map from a parent region onto a child region (both time slices)
std::vector<std::uint32_t> edge_path_map(const TemporalModel& tm, const Region& parent,
                                         const Region& child) {
  const auto pc = region_cards(tm, parent);
  const size_t psize = region_state_size(tm, parent);
  const size_t csize = region_state_size(tm, child);
  const auto pos = scope_positions(parent, child.variables);
  const auto cc = region_cards(tm, child);

  std::vector<std::uint32_t> state_map(psize);
  std::vector<int> digits(pc.size());
  for (size_t s = 0; s < psize; ++s) {
    index_to_state(pc, static_cast<std::int64_t>(s), digits);
    std::uint64_t idx = 0;
    for (size_t k = 0; k < pos.size(); ++k)
      idx = idx * static_cast<std::uint64_t>(cc[k]) + static_cast<std::uint64_t>(digits[pos[k]]);
    state_map[s] = static_cast<std::uint32_t>(idx);
  }

  std::vector<std::uint32_t> map(psize * psize);
  for (size_t p = 0; p < psize; ++p)
    for (size_t q = 0; q < psize; ++q)
      map[p * psize + q] =
          static_cast<std::uint32_t>(static_cast<size_t>(state_map[p]) * csize + state_map[q]);
  return map;
}

double clamped_log(double v, double floor) { return std::log(std::max(v, floor)); }

void max_normalize(std::vector<double>& logs) {
  const double mx = *std::max_element(logs.begin(), logs.end());
  for (auto& l : logs) l -= mx;
}

}  // namespace

TemporalModel make_temporal_model(std::vector<Variable> variables,
                                  std::vector<TemporalFactor> factors) {
  TemporalModel tm;
  tm.variables = std::move(variables);
  tm.factors = std::move(factors);
  const FactorGraph shadow = union_scope_graph(tm);
  tm.regions = build_bethe_regions(shadow);
  if (tm.regions.counting.empty()) compute_counting_numbers(tm.regions);
  return tm;
}

TemporalModel make_single_region_model(std::vector<Variable> variables,
                                       std::vector<TemporalFactor> factors) {
  TemporalModel tm;
  tm.variables = std::move(variables);
  tm.factors = std::move(factors);
  Region all;
  all.id = 0;
  all.variables.resize(tm.variables.size());
  for (size_t i = 0; i < tm.variables.size(); ++i) all.variables[i] = static_cast<int>(i);
  all.factors.resize(tm.factors.size());
  for (size_t i = 0; i < tm.factors.size(); ++i) all.factors[i] = static_cast<int>(i);
  tm.regions.regions.push_back(std::move(all));
  tm.regions.counting = {1.0};
  return tm;
}

ValidationReport validate_temporal_model(const TemporalModel& tm) {
  ValidationReport rep;
  for (size_t i = 0; i < tm.variables.size(); ++i) {
    const auto& v = tm.variables[i];
    if (v.id != static_cast<int>(i)) rep.add("variable", "ids must be dense and ascending");
    if (v.cardinality <= 0) rep.add("variable", "cardinality must be positive");
  }
  if (!rep.ok()) return rep;

  const int n = tm.num_variables();
  for (size_t i = 0; i < tm.factors.size(); ++i) {
    const auto& f = tm.factors[i];
    const std::string where = "transition factor " + std::to_string(f.id);
    if (f.id != static_cast<int>(i)) rep.add(where, "ids must be dense and ascending");
    auto check_scope = [&](const std::vector<int>& sc, const char* name) {
      for (size_t k = 0; k < sc.size(); ++k) {
        if (sc[k] < 0 || sc[k] >= n) {
          rep.add(where, std::string(name) + " references an unknown variable");
          return false;
        }
        if (k > 0 && sc[k] <= sc[k - 1]) {
          rep.add(where, std::string(name) + " must be sorted with no repeats");
          return false;
        }
      }
      return true;
    };
    if (!check_scope(f.past_scope, "past scope") || !check_scope(f.future_scope, "future scope"))
      continue;
    if (f.past_scope.empty() && f.future_scope.empty()) {
      rep.add(where, "at least one scope must be nonempty");
      continue;
    }
    std::uint64_t want = 1;
    for (int v : f.past_scope) want *= static_cast<std::uint64_t>(tm.cardinality(v));
    for (int v : f.future_scope) want *= static_cast<std::uint64_t>(tm.cardinality(v));
    if (f.values.size() != want) {
      rep.add(where, "table length does not match the scopes");
      continue;
    }
    bool any_positive = false;
    for (double x : f.values) {
      if (!(x >= 0.0) || !std::isfinite(x)) {
        rep.add(where, "table entries must be finite and nonnegative");
        any_positive = true;
        break;
      }
      if (x > 0.0) any_positive = true;
    }
    if (!any_positive) rep.add(where, "table must contain a positive entry");
  }
  if (!rep.ok()) return rep;

  const FactorGraph shadow = union_scope_graph(tm);
  auto region_rep = validate_region_graph(tm.regions, shadow);
  for (auto& issue : region_rep.issues) rep.issues.push_back(std::move(issue));
  return rep;
}

PathBeliefStore uniform_priors(const TemporalModel& tm) {
  PathBeliefStore st;
  st.prior.resize(tm.regions.regions.size());
  st.path.resize(tm.regions.regions.size());
  for (size_t r = 0; r < tm.regions.regions.size(); ++r) {
    const size_t size = region_state_size(tm, tm.regions.regions[r]);
    st.prior[r].assign(size, 1.0 / static_cast<double>(size));
    st.path[r].assign(size * size, 1.0 / static_cast<double>(size * size));
  }
  return st;
}

PathBeliefStore point_priors(const TemporalModel& tm, const std::vector<int>& full_state) {
  if (full_state.size() != static_cast<size_t>(tm.num_variables()))
    throw std::invalid_argument("one state entry per variable required");
  for (int v = 0; v < tm.num_variables(); ++v)
    if (full_state[static_cast<size_t>(v)] < 0 ||
        full_state[static_cast<size_t>(v)] >= tm.cardinality(v))
      throw std::out_of_range("state entry outside the variable's range");

  PathBeliefStore st;
  st.prior.resize(tm.regions.regions.size());
  st.path.resize(tm.regions.regions.size());
  for (size_t r = 0; r < tm.regions.regions.size(); ++r) {
    const auto& reg = tm.regions.regions[r];
    const size_t size = region_state_size(tm, reg);
    std::uint64_t idx = 0;
    for (int v : reg.variables)
      idx = idx * static_cast<std::uint64_t>(tm.cardinality(v)) +
            static_cast<std::uint64_t>(full_state[static_cast<size_t>(v)]);
    st.prior[r].assign(size, 0.0);
    st.prior[r][idx] = 1.0;
    st.path[r].assign(size * size, 0.0);
    for (size_t f = 0; f < size; ++f)
      st.path[r][static_cast<size_t>(idx) * size + f] = 1.0 / static_cast<double>(size);
  }
  return st;
}

double path_free_energy(const TemporalModel& tm, const PathBeliefStore& store,
                        double zero_floor) {
  if (store.prior.size() != tm.regions.regions.size() ||
      store.path.size() != tm.regions.regions.size())
    throw std::invalid_argument("store does not match the region graph");
  if (tm.regions.counting.size() != tm.regions.regions.size())
    throw std::invalid_argument("region graph has no counting numbers");

  double fe = 0.0;
  for (size_t r = 0; r < tm.regions.regions.size(); ++r) {
    const auto& reg = tm.regions.regions[r];
    const size_t size = region_state_size(tm, reg);
    const auto& b = store.path[r];
    const auto& prior = store.prior[r];
    if (b.size() != size * size || prior.size() != size)
      throw std::invalid_argument("store tables have the wrong length");

    std::vector<double> logf(size * size, 0.0);
    for (int a : reg.factors) {
      const auto& f = tm.factors[static_cast<size_t>(a)];
      const auto map = factor_path_map(tm, reg, f);
      for (size_t j = 0; j < logf.size(); ++j)
        logf[j] += clamped_log(f.values[map[j]], zero_floor);
    }

    double term = 0.0;
    for (size_t j = 0; j < b.size(); ++j) {
      if (b[j] <= 0.0) continue;
      const double lp = clamped_log(prior[j / size], zero_floor);
      term += b[j] * (-logf[j] + std::log(b[j]) - lp);
    }
    fe += tm.regions.counting[r] * term;
  }
  return fe;
}

struct PathSolver::Impl {
  const TemporalModel* model;
  SolverOptions opts;
  PriorCoupling coupling;

  struct RegionMeta {
    size_t size = 0;       // joint states of one time slice
    size_t path_size = 0;  // size * size
    double counting = 0.0;
    double inv_c = 0.0;  // zero when the counting number vanishes
    std::vector<std::pair<int, std::vector<std::uint32_t>>> factor_maps;
    std::vector<double> logf;       // accumulated factor logs over path states
    std::vector<double> log_rownorm;  // per past state; conditions the region
                                      // factor when no per-state coupling
                                      // cancels its row scale
    std::vector<double> log_prior;  // clamped log of the current prior
    std::vector<int> parent_edges;  // edges where this region is the child
    std::vector<int> child_edges;   // edges where this region is the parent
  };
  struct EdgeMeta {
    int parent = 0, child = 0;
    double exponent = 0.0;
    std::vector<std::uint32_t> proj;  // parent path index -> child path index
  };

  std::vector<RegionMeta> meta;
  std::vector<EdgeMeta> edges;
  std::vector<std::vector<double>> log_msg;        // per edge, child path states
  std::vector<std::vector<double>> log_prior_msg;  // per region, past states
  PathBeliefStore st;

  Impl(const TemporalModel& tm, const SolverOptions& options, PriorCoupling mode)
      : model(&tm), opts(options), coupling(mode) {
    const auto& rg = tm.regions;
    if (rg.regions.empty()) throw std::invalid_argument("temporal model has no regions");
    if (rg.counting.size() != rg.regions.size())
      throw std::invalid_argument("region graph has no counting numbers");

    meta.resize(rg.regions.size());
    for (size_t r = 0; r < rg.regions.size(); ++r) {
      auto& m = meta[r];
      const auto& reg = rg.regions[r];
      m.size = region_state_size(tm, reg);
      if (m.size > (1u << 12))
        throw std::length_error("region joint state space too large for path beliefs");
      m.path_size = m.size * m.size;
      m.counting = rg.counting[r];
      m.inv_c = m.counting == 0.0 ? 0.0 : 1.0 / m.counting;
      for (int a : reg.factors)
        m.factor_maps.emplace_back(a, factor_path_map(tm, reg, tm.factors[static_cast<size_t>(a)]));
      m.logf.assign(m.path_size, 0.0);
      m.log_prior.assign(m.size, 0.0);
    }

    edges.resize(rg.edges.size());
    for (size_t e = 0; e < rg.edges.size(); ++e) {
      auto& em = edges[e];
      em.parent = rg.edges[e].first;
      em.child = rg.edges[e].second;
      const double cp = rg.counting[static_cast<size_t>(em.parent)];
      const double cc = rg.counting[static_cast<size_t>(em.child)];
      if (cp + cc == 0.0) {
        if (opts.degenerate_policy == DegeneratePolicy::error)
          throw std::domain_error(
              "a parent/child pair has counting numbers summing to zero; "
              "use the fixed-exponent policy");
        em.exponent = opts.fixed_exponent;
      } else {
        em.exponent = cp * cc / (cp + cc);
      }
      em.proj = edge_path_map(tm, rg.regions[static_cast<size_t>(em.parent)],
                              rg.regions[static_cast<size_t>(em.child)]);
      meta[static_cast<size_t>(em.child)].parent_edges.push_back(static_cast<int>(e));
      meta[static_cast<size_t>(em.parent)].child_edges.push_back(static_cast<int>(e));
    }

    refresh_factor_tables();
    install(dynbp::uniform_priors(tm));
  }

  void refresh_factor_tables() {
    for (auto& m : meta) {
      std::fill(m.logf.begin(), m.logf.end(), 0.0);
      for (const auto& [a, map] : m.factor_maps) {
        const auto& vals = model->factors[static_cast<size_t>(a)].values;
        for (size_t j = 0; j < m.logf.size(); ++j)
          m.logf[j] += clamped_log(vals[map[j]], opts.zero_floor);
      }
      m.log_rownorm.assign(m.size, 0.0);
      if (coupling == PriorCoupling::normalization_only) {
        // belief updates see the region factor as a conditional; with the
        // per-state coupling the prior messages absorb any row scale, without
        // it the row normalizer has to be divided out explicitly
        for (size_t p = 0; p < m.size; ++p) {
          double hi = m.logf[p * m.size];
          for (size_t f = 1; f < m.size; ++f) hi = std::max(hi, m.logf[p * m.size + f]);
          double sum = 0.0;
          for (size_t f = 0; f < m.size; ++f) sum += std::exp(m.logf[p * m.size + f] - hi);
          m.log_rownorm[p] = hi + std::log(sum);
        }
      }
    }
  }

  void refresh_log_priors() {
    for (size_t r = 0; r < meta.size(); ++r)
      for (size_t p = 0; p < meta[r].size; ++p)
        meta[r].log_prior[p] = clamped_log(st.prior[r][p], opts.zero_floor);
  }

  void install(PathBeliefStore store) {
    if (store.prior.size() != meta.size() || store.path.size() != meta.size())
      throw std::invalid_argument("store does not match the region graph");
    for (size_t r = 0; r < meta.size(); ++r) {
      if (store.prior[r].size() != meta[r].size || store.path[r].size() != meta[r].path_size)
        throw std::invalid_argument("store tables have the wrong length");
      double ps = 0.0, bs = 0.0;
      for (double x : store.prior[r]) {
        if (!(x >= 0.0) || !std::isfinite(x))
          throw std::invalid_argument("priors must be finite and nonnegative");
        ps += x;
      }
      for (double x : store.path[r]) {
        if (!(x >= 0.0) || !std::isfinite(x))
          throw std::invalid_argument("beliefs must be finite and nonnegative");
        bs += x;
      }
      if (std::abs(ps - 1.0) > 1e-6 || std::abs(bs - 1.0) > 1e-6)
        throw std::invalid_argument("store tables must sum to one");
    }
    st = std::move(store);
    log_msg.assign(edges.size(), {});
    for (size_t e = 0; e < edges.size(); ++e)
      log_msg[e].assign(meta[static_cast<size_t>(edges[e].child)].path_size, 0.0);
    log_prior_msg.assign(meta.size(), {});
    for (size_t r = 0; r < meta.size(); ++r) log_prior_msg[r].assign(meta[r].size, 0.0);
    refresh_log_priors();
  }

  // belief of one region from the current prior and messages, normalized
  void compute_belief(size_t r, std::vector<double>& out) const {
    const auto& m = meta[r];
    out.resize(m.path_size);
    for (size_t j = 0; j < m.path_size; ++j)
      out[j] = m.logf[j] - m.log_rownorm[j / m.size] + m.log_prior[j / m.size];
    if (m.inv_c != 0.0) {
      std::vector<double> bracket(m.path_size, 0.0);
      if (coupling == PriorCoupling::per_state)
        for (size_t j = 0; j < m.path_size; ++j) bracket[j] += log_prior_msg[r][j / m.size];
      for (int e : m.child_edges) {
        const auto& em = edges[static_cast<size_t>(e)];
        const auto& msg = log_msg[static_cast<size_t>(e)];
        for (size_t j = 0; j < m.path_size; ++j) bracket[j] += msg[em.proj[j]];
      }
      for (int e : m.parent_edges) {
        const auto& msg = log_msg[static_cast<size_t>(e)];
        for (size_t j = 0; j < m.path_size; ++j) bracket[j] -= msg[j];
      }
      for (size_t j = 0; j < m.path_size; ++j) out[j] += m.inv_c * bracket[j];
    }
    max_normalize(out);
    double sum = 0.0;
    for (auto& x : out) {
      x = std::exp(x);
      sum += x;
    }
    for (auto& x : out) x /= sum;
  }

  double sweep() {
    double delta = 0.0;
    std::vector<double> fresh, proj, upd;
    const double log_floor = std::log(opts.message_floor);
    for (size_t r = 0; r < meta.size(); ++r) {
      const auto& m = meta[r];

      compute_belief(r, fresh);
      for (size_t j = 0; j < m.path_size; ++j)
        delta = std::max(delta, std::abs(fresh[j] - st.path[r][j]));
      st.path[r] = fresh;

      // pull each parent toward this region where their projections disagree
      for (int e : m.parent_edges) {
        const auto& em = edges[static_cast<size_t>(e)];
        const auto& pm = meta[static_cast<size_t>(em.parent)];
        proj.assign(m.path_size, 0.0);
        const auto& pb = st.path[static_cast<size_t>(em.parent)];
        for (size_t j = 0; j < pm.path_size; ++j) proj[em.proj[j]] += pb[j];
        auto& msg = log_msg[static_cast<size_t>(e)];
        upd.resize(m.path_size);
        for (size_t j = 0; j < m.path_size; ++j) {
          const double diff = clamped_log(st.path[r][j], opts.zero_floor) -
                              clamped_log(proj[j], opts.zero_floor);
          upd[j] = msg[j] + (1.0 - opts.damping) * em.exponent * diff;
        }
        max_normalize(upd);
        for (size_t j = 0; j < m.path_size; ++j) msg[j] = std::max(upd[j], log_floor);
      }

      // pull the belief's time-t marginal toward the prior
      if (coupling == PriorCoupling::per_state && m.counting != 0.0) {
        auto& msg = log_prior_msg[r];
        upd.resize(m.size);
        for (size_t p = 0; p < m.size; ++p) {
          double marg = 0.0;
          for (size_t f = 0; f < m.size; ++f) marg += st.path[r][p * m.size + f];
          const double diff = m.log_prior[p] - clamped_log(marg, opts.zero_floor);
          upd[p] = msg[p] + (1.0 - opts.damping) * m.counting * diff;
        }
        max_normalize(upd);
        for (size_t p = 0; p < m.size; ++p) msg[p] = std::max(upd[p], log_floor);
      }
    }
    return delta;
  }

  double objective() const {
    double fe = 0.0;
    for (size_t r = 0; r < meta.size(); ++r) {
      const auto& m = meta[r];
      double term = 0.0;
      for (size_t j = 0; j < m.path_size; ++j) {
        const double b = st.path[r][j];
        if (b <= 0.0) continue;
        term += b * (-m.logf[j] + std::log(b) - m.log_prior[j / m.size]);
      }
      fe += m.counting * term;
    }
    return fe;
  }

  double prior_residual() const {
    double res = 0.0;
    for (size_t r = 0; r < meta.size(); ++r) {
      const auto& m = meta[r];
      for (size_t p = 0; p < m.size; ++p) {
        double marg = 0.0;
        for (size_t f = 0; f < m.size; ++f) marg += st.path[r][p * m.size + f];
        res = std::max(res, std::abs(marg - st.prior[r][p]));
      }
    }
    return res;
  }

  double cross_residual() const {
    double res = 0.0;
    std::vector<double> proj;
    for (const auto& em : edges) {
      if (em.exponent == 0.0) continue;  // zero-counting child: belief is bookkeeping only
      const auto& cm = meta[static_cast<size_t>(em.child)];
      proj.assign(cm.path_size, 0.0);
      const auto& pb = st.path[static_cast<size_t>(em.parent)];
      for (size_t j = 0; j < pb.size(); ++j) proj[em.proj[j]] += pb[j];
      const auto& cb = st.path[static_cast<size_t>(em.child)];
      for (size_t j = 0; j < cm.path_size; ++j)
        res = std::max(res, std::abs(proj[j] - cb[j]));
    }
    return res;
  }

  StepDiagnostics step() {
    StepDiagnostics diag;
    for (int s = 1; s <= opts.max_iterations; ++s) {
      const double delta = sweep();
      diag.sweeps = s;
      diag.final_delta = delta;
      diag.sweep_delta.push_back(delta);
      diag.prior_residual.push_back(prior_residual());
      diag.cross_residual.push_back(cross_residual());
      const double obj = objective();
      if (diag.objective.size() >= 1 && obj > diag.objective.back())
        ++diag.objective_increases;
      diag.objective.push_back(obj);
      if (delta < opts.tolerance) {
        diag.converged = true;
        break;
      }
    }
    diag.free_energy = diag.objective.empty() ? objective() : diag.objective.back();

    // the time-t+dt marginals become the next priors; edge messages restart,
    // the marginal-consistency messages carry over
    for (size_t r = 0; r < meta.size(); ++r) {
      const auto& m = meta[r];
      std::vector<double> next(m.size, 0.0);
      for (size_t p = 0; p < m.size; ++p)
        for (size_t f = 0; f < m.size; ++f) next[f] += st.path[r][p * m.size + f];
      st.prior[r] = std::move(next);
    }
    refresh_log_priors();
    for (auto& msg : log_msg) std::fill(msg.begin(), msg.end(), 0.0);
    return diag;
  }

  // marginal of one region's prior onto a single variable, accumulated into b
  void accumulate_marginal(int region, int v, std::vector<double>& b) const {
    const auto& reg = model->regions.regions[static_cast<size_t>(region)];
    const auto cards = region_cards(*model, reg);
    std::vector<int> digits(cards.size());
    const size_t pos = static_cast<size_t>(
        std::lower_bound(reg.variables.begin(), reg.variables.end(), v) -
        reg.variables.begin());
    const auto& prior = st.prior[static_cast<size_t>(region)];
    double sum = 0.0;
    for (double x : prior) sum += x;
    if (sum <= 0.0) return;
    for (size_t s = 0; s < prior.size(); ++s) {
      index_to_state(cards, static_cast<std::int64_t>(s), digits);
      b[static_cast<size_t>(digits[pos])] += prior[s] / sum;
    }
  }

  // Per-node beliefs are read from the positively counted regions, which are
  // the ones whose beliefs stay anchored to the factor tables; zero- and
  // negative-counting regions are message bookkeeping and on graphs with
  // degenerate edge exponents their beliefs never reconcile with their
  // parents, so they are skipped whenever a counted alternative exists.
  std::vector<std::vector<double>> node_beliefs() const {
    const auto& rg = model->regions;
    const int n = model->num_variables();
    std::vector<std::vector<double>> out(static_cast<size_t>(n));
    for (int v = 0; v < n; ++v) {
      auto& b = out[static_cast<size_t>(v)];
      b.assign(static_cast<size_t>(model->cardinality(v)), 0.0);
      int hits = 0;
      for (size_t r = 0; r < rg.regions.size(); ++r) {
        const auto& vars = rg.regions[r].variables;
        if (meta[r].counting <= 0.0) continue;
        if (!std::binary_search(vars.begin(), vars.end(), v)) continue;
        accumulate_marginal(static_cast<int>(r), v, b);
        ++hits;
      }
      if (hits == 0) {
        // no positive region covers this variable: fall back to the smallest
        // region that does
        int best = -1;
        for (size_t r = 0; r < rg.regions.size(); ++r) {
          const auto& vars = rg.regions[r].variables;
          if (!std::binary_search(vars.begin(), vars.end(), v)) continue;
          if (best == -1 ||
              vars.size() < rg.regions[static_cast<size_t>(best)].variables.size())
            best = static_cast<int>(r);
        }
        if (best == -1) {
          b.assign(b.size(), 1.0 / static_cast<double>(b.size()));
          continue;
        }
        accumulate_marginal(best, v, b);
        ++hits;
      }
      for (auto& x : b) x /= static_cast<double>(hits);
      double sum = 0.0;
      for (double x : b) sum += x;
      if (sum > 0.0)
        for (auto& x : b) x /= sum;
    }
    return out;
  }
};

PathSolver::PathSolver(const TemporalModel& model, const SolverOptions& opts,
                       PriorCoupling coupling)
    : impl_(std::make_unique<Impl>(model, opts, coupling)) {}
PathSolver::~PathSolver() = default;
PathSolver::PathSolver(PathSolver&&) noexcept = default;

void PathSolver::refresh_factor_tables() { impl_->refresh_factor_tables(); }
void PathSolver::set_store(PathBeliefStore store) { impl_->install(std::move(store)); }
const PathBeliefStore& PathSolver::store() const { return impl_->st; }
double PathSolver::sweep() { return impl_->sweep(); }
StepDiagnostics PathSolver::step() { return impl_->step(); }

EvolveResult PathSolver::evolve(int steps) {
  EvolveResult out;
  if (steps < 0) throw std::invalid_argument("step count must be nonnegative");
  out.node_beliefs.reserve(static_cast<size_t>(steps));
  out.steps.reserve(static_cast<size_t>(steps));
  for (int s = 0; s < steps; ++s) {
    auto diag = impl_->step();
    out.all_converged = out.all_converged && diag.converged;
    out.steps.push_back(std::move(diag));
    out.node_beliefs.push_back(impl_->node_beliefs());
  }
  return out;
}

double PathSolver::objective() const { return impl_->objective(); }
std::vector<std::vector<double>> PathSolver::node_beliefs() const {
  return impl_->node_beliefs();
}

StepDiagnostics dynbp_step(const TemporalModel& tm, PathBeliefStore& store,
                           const SolverOptions& opts) {
  PathSolver solver(tm, opts, PriorCoupling::per_state);
  solver.set_store(std::move(store));
  auto diag = solver.step();
  store = solver.store();
  return diag;
}

EvolveResult dynbp_evolve(const TemporalModel& tm, PathBeliefStore store, int steps,
                          const SolverOptions& opts) {
  PathSolver solver(tm, opts, PriorCoupling::per_state);
  solver.set_store(std::move(store));
  return solver.evolve(steps);
}

EvolveResult extended_gbp_evolve(const TemporalModel& tm, PathBeliefStore store, int steps,
                                 const SolverOptions& opts) {
  PathSolver solver(tm, opts, PriorCoupling::normalization_only);
  solver.set_store(std::move(store));
  return solver.evolve(steps);
}

}  // namespace dynbp
