#include "dynbp/region_graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace dynbp {

namespace {

bool subset_of(const std::vector<int>& a, const std::vector<int>& b) {
  // both sorted
  return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

// small transitive-closure bitset, one word row per 64 regions
struct BitMatrix {
  int n = 0;
  size_t words = 0;
  std::vector<std::uint64_t> bits;

  explicit BitMatrix(int n_) : n(n_), words(static_cast<size_t>((n_ + 63) / 64)) {
    bits.assign(static_cast<size_t>(n) * words, 0);
  }
  void set(int row, int col) {
    bits[static_cast<size_t>(row) * words + static_cast<size_t>(col) / 64] |=
        std::uint64_t{1} << (col % 64);
  }
  bool get(int row, int col) const {
    return (bits[static_cast<size_t>(row) * words + static_cast<size_t>(col) / 64] >>
            (col % 64)) & 1;
  }
  void or_row(int dst, int src) {
    auto* d = &bits[static_cast<size_t>(dst) * words];
    const auto* s = &bits[static_cast<size_t>(src) * words];
    for (size_t w = 0; w < words; ++w) d[w] |= s[w];
  }
};

std::vector<int> topological_order(const RegionGraph& rg, const RegionAdjacency& adj) {
  const int n = rg.num_regions();
  std::vector<int> indeg(static_cast<size_t>(n), 0);
  for (int r = 0; r < n; ++r)
    indeg[static_cast<size_t>(r)] = static_cast<int>(adj.parents[static_cast<size_t>(r)].size());
  std::vector<int> order;
  order.reserve(static_cast<size_t>(n));
  std::vector<int> ready;
  for (int r = 0; r < n; ++r)
    if (indeg[static_cast<size_t>(r)] == 0) ready.push_back(r);
  // ascending-id pop keeps the order deterministic
  for (size_t head = 0; head < ready.size(); ++head) {
    std::sort(ready.begin() + static_cast<long>(head), ready.end());
    const int r = ready[head];
    order.push_back(r);
    for (int c : adj.children[static_cast<size_t>(r)])
      if (--indeg[static_cast<size_t>(c)] == 0) ready.push_back(c);
  }
  if (order.size() != static_cast<size_t>(n))
    throw std::runtime_error("region graph contains a cycle");
  return order;
}

BitMatrix ancestor_matrix(const RegionGraph& rg, const RegionAdjacency& adj) {
  const int n = rg.num_regions();
  BitMatrix anc(n);
  for (int r : topological_order(rg, adj)) {
    for (int p : adj.parents[static_cast<size_t>(r)]) {
      anc.set(r, p);
      anc.or_row(r, p);
    }
  }
  return anc;
}

}  // namespace

RegionAdjacency make_adjacency(const RegionGraph& rg) {
  RegionAdjacency adj;
  const auto n = static_cast<size_t>(rg.num_regions());
  adj.parents.assign(n, {});
  adj.children.assign(n, {});
  for (const auto& [p, c] : rg.edges) {
    adj.children[static_cast<size_t>(p)].push_back(c);
    adj.parents[static_cast<size_t>(c)].push_back(p);
  }
  return adj;
}

RegionGraph build_bethe_regions(const FactorGraph& g) {
  RegionGraph rg;
  const int m = g.num_factors();

  // A factor owns a large region unless its scope fits inside another factor's
  // scope (equal scopes collapse onto the lowest id). Dominated factors are
  // absorbed into the first large region that covers them, so e.g. single-site
  // fields ride along with a neighboring pair region instead of spawning
  // regions that would break the per-variable counting sums.
  std::vector<char> owner(static_cast<size_t>(m), 1);
  for (int a = 0; a < m; ++a) {
    const auto& sa = g.factors[static_cast<size_t>(a)].scope;
    for (int b = 0; b < m && owner[static_cast<size_t>(a)]; ++b) {
      if (b == a) continue;
      const auto& sb = g.factors[static_cast<size_t>(b)].scope;
      if (subset_of(sa, sb) && (sb.size() > sa.size() || b < a))
        owner[static_cast<size_t>(a)] = 0;
    }
  }
  for (int a = 0; a < m; ++a) {
    if (!owner[static_cast<size_t>(a)]) continue;
    Region r;
    r.id = rg.num_regions();
    r.variables = g.factors[static_cast<size_t>(a)].scope;
    rg.regions.push_back(std::move(r));
  }
  for (int a = 0; a < m; ++a) {
    for (auto& r : rg.regions) {
      if (subset_of(g.factors[static_cast<size_t>(a)].scope, r.variables)) {
        r.factors.push_back(a);
        break;
      }
    }
  }
  for (auto& r : rg.regions) std::sort(r.factors.begin(), r.factors.end());

  const int num_large = rg.num_regions();
  for (int v = 0; v < g.num_variables(); ++v) {
    Region r;
    r.id = num_large + v;
    r.variables = {v};
    rg.regions.push_back(std::move(r));
  }
  for (int lr = 0; lr < num_large; ++lr)
    for (int v : rg.regions[static_cast<size_t>(lr)].variables)
      rg.edges.emplace_back(lr, num_large + v);
  std::sort(rg.edges.begin(), rg.edges.end());

  compute_counting_numbers(rg);
  return rg;
}

void compute_counting_numbers(RegionGraph& rg) {
  const auto adj = make_adjacency(rg);
  const int n = rg.num_regions();
  const auto anc = ancestor_matrix(rg, adj);
  rg.counting.assign(static_cast<size_t>(n), 0.0);
  for (int r : topological_order(rg, adj)) {
    double sum = 0.0;
    for (int b = 0; b < n; ++b)
      if (anc.get(r, b)) sum += rg.counting[static_cast<size_t>(b)];
    rg.counting[static_cast<size_t>(r)] = 1.0 - sum;
  }
}

ValidationReport validate_region_graph(const RegionGraph& rg, const FactorGraph& g) {
  ValidationReport rep;
  const int n = rg.num_regions();
  for (int r = 0; r < n; ++r) {
    const auto& reg = rg.regions[static_cast<size_t>(r)];
    const std::string where = "region " + std::to_string(r);
    if (reg.id != r) rep.add(where, "ids not dense ascending");
    for (size_t k = 0; k < reg.variables.size(); ++k) {
      if (reg.variables[k] < 0 || reg.variables[k] >= g.num_variables())
        rep.add(where, "unknown variable " + std::to_string(reg.variables[k]));
      if (k > 0 && reg.variables[k] <= reg.variables[k - 1])
        rep.add(where, "variables not sorted strictly ascending");
    }
    if (reg.variables.empty()) rep.add(where, "empty variable set");
    for (size_t k = 0; k < reg.factors.size(); ++k) {
      const int a = reg.factors[k];
      if (a < 0 || a >= g.num_factors()) {
        rep.add(where, "unknown factor " + std::to_string(a));
        continue;
      }
      if (k > 0 && reg.factors[k] <= reg.factors[k - 1])
        rep.add(where, "factors not sorted strictly ascending");
      if (!subset_of(g.factors[static_cast<size_t>(a)].scope, reg.variables))
        rep.add(where, "factor " + std::to_string(a) + " scope not contained in region");
    }
  }
  for (const auto& [p, c] : rg.edges) {
    const std::string where = "edge (" + std::to_string(p) + "," + std::to_string(c) + ")";
    if (p < 0 || p >= n || c < 0 || c >= n) {
      rep.add(where, "region id out of range");
      continue;
    }
    if (p == c) {
      rep.add(where, "self edge");
      continue;
    }
    const auto& rp = rg.regions[static_cast<size_t>(p)];
    const auto& rc = rg.regions[static_cast<size_t>(c)];
    const bool vars_ok = subset_of(rc.variables, rp.variables);
    const bool factors_ok = subset_of(rc.factors, rp.factors);
    if (!vars_ok) rep.add(where, "child variables not a subset of parent");
    if (!factors_ok) rep.add(where, "child factors not a subset of parent");
    if (vars_ok && factors_ok && rc.variables == rp.variables && rc.factors == rp.factors)
      rep.add(where, "child equals parent");
  }
  if (!rep.ok()) return rep;

  const auto adj = make_adjacency(rg);
  try {
    topological_order(rg, adj);
  } catch (const std::exception&) {
    rep.add("region graph", "contains a cycle");
    return rep;
  }

  if (rg.counting.size() != static_cast<size_t>(n)) {
    rep.add("region graph", "counting numbers missing");
    return rep;
  }
  std::vector<double> var_sum(static_cast<size_t>(g.num_variables()), 0.0);
  std::vector<double> fac_sum(static_cast<size_t>(g.num_factors()), 0.0);
  for (int r = 0; r < n; ++r) {
    for (int v : rg.regions[static_cast<size_t>(r)].variables)
      var_sum[static_cast<size_t>(v)] += rg.counting[static_cast<size_t>(r)];
    for (int a : rg.regions[static_cast<size_t>(r)].factors)
      fac_sum[static_cast<size_t>(a)] += rg.counting[static_cast<size_t>(r)];
  }
  for (int v = 0; v < g.num_variables(); ++v)
    if (std::abs(var_sum[static_cast<size_t>(v)] - 1.0) > 1e-9)
      rep.add("variable " + std::to_string(v),
              "counting numbers sum to " + std::to_string(var_sum[static_cast<size_t>(v)]));
  for (int a = 0; a < g.num_factors(); ++a)
    if (std::abs(fac_sum[static_cast<size_t>(a)] - 1.0) > 1e-9)
      rep.add("factor " + std::to_string(a),
              "counting numbers sum to " + std::to_string(fac_sum[static_cast<size_t>(a)]));
  return rep;
}

std::vector<int> covering_set(const RegionGraph& rg, int region) {
  const auto adj = make_adjacency(rg);
  std::vector<char> seen(static_cast<size_t>(rg.num_regions()), 0);
  std::vector<int> stack{region};
  seen[static_cast<size_t>(region)] = 1;
  while (!stack.empty()) {
    const int r = stack.back();
    stack.pop_back();
    for (int c : adj.children[static_cast<size_t>(r)])
      if (!seen[static_cast<size_t>(c)]) {
        seen[static_cast<size_t>(c)] = 1;
        stack.push_back(c);
      }
  }
  std::vector<int> out;
  for (int r = 0; r < rg.num_regions(); ++r)
    if (seen[static_cast<size_t>(r)]) out.push_back(r);
  return out;
}

RelationSets relation_sets(const RegionGraph& rg, int parent, int child) {
  if (std::find(rg.edges.begin(), rg.edges.end(), std::make_pair(parent, child)) ==
      rg.edges.end())
    throw std::invalid_argument("relation_sets: not an edge");
  const auto n = static_cast<size_t>(rg.num_regions());
  std::vector<char> in_p(n, 0), in_c(n, 0);
  for (int r : covering_set(rg, parent)) in_p[static_cast<size_t>(r)] = 1;
  for (int r : covering_set(rg, child)) in_c[static_cast<size_t>(r)] = 1;

  RelationSets out;
  for (const auto& [i, j] : rg.edges) {
    const bool i_in_p = in_p[static_cast<size_t>(i)] != 0;
    const bool j_in_p = in_p[static_cast<size_t>(j)] != 0;
    const bool i_in_c = in_c[static_cast<size_t>(i)] != 0;
    const bool j_in_c = in_c[static_cast<size_t>(j)] != 0;
    if (j_in_p && !j_in_c && !i_in_p) out.numerator.emplace_back(i, j);
    // the edge being updated is the unknown, so it stays out of the denominator
    if (j_in_c && i_in_p && !i_in_c && !(i == parent && j == child))
      out.denominator.emplace_back(i, j);
  }
  return out;
}

}  // namespace dynbp
