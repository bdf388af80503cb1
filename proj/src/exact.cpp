#include "dynbp/exact.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace dynbp {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Enumerates all joint states in flat order while keeping one running table
// subindex per factor up to date (last variable fastest).
struct JointWalker {
  std::vector<int> cards;
  std::vector<int> digits;
  // per variable: list of (factor index, stride in that factor's table)
  std::vector<std::vector<std::pair<int, std::uint64_t>>> hooks;
  std::vector<std::uint64_t> sub;  // current subindex per factor

  JointWalker(const std::vector<int>& cards_, const std::vector<std::vector<int>>& scopes)
      : cards(cards_), digits(cards_.size(), 0), hooks(cards_.size()), sub(scopes.size(), 0) {
    for (size_t a = 0; a < scopes.size(); ++a) {
      std::uint64_t stride = 1;
      for (size_t k = scopes[a].size(); k-- > 0;) {
        const int v = scopes[a][k];
        hooks[static_cast<size_t>(v)].emplace_back(static_cast<int>(a), stride);
        stride *= static_cast<std::uint64_t>(cards[static_cast<size_t>(v)]);
      }
    }
  }

  // advance to the next state; false when wrapped around
  bool advance() {
    for (size_t k = cards.size(); k-- > 0;) {
      if (++digits[k] < cards[k]) {
        for (const auto& [a, stride] : hooks[k]) sub[static_cast<size_t>(a)] += stride;
        return true;
      }
      digits[k] = 0;
      for (const auto& [a, stride] : hooks[k])
        sub[static_cast<size_t>(a)] -= stride * static_cast<std::uint64_t>(cards[k] - 1);
    }
    return false;
  }
};

std::uint64_t checked_state_count(const FactorGraph& g, std::uint64_t max_states) {
  std::uint64_t total = 1;
  for (const auto& v : g.variables) {
    total *= static_cast<std::uint64_t>(v.cardinality);
    if (total > max_states) throw std::length_error("joint state space exceeds the cap");
  }
  return total;
}

std::vector<std::vector<double>> log_tables(const FactorGraph& g) {
  std::vector<std::vector<double>> lt(g.factors.size());
  for (size_t a = 0; a < g.factors.size(); ++a) {
    lt[a].resize(g.factors[a].values.size());
    for (size_t i = 0; i < lt[a].size(); ++i) {
      const double v = g.factors[a].values[i];
      lt[a][i] = v > 0.0 ? std::log(v) : kNegInf;
    }
  }
  return lt;
}

std::vector<std::vector<int>> factor_scopes(const FactorGraph& g) {
  std::vector<std::vector<int>> s(g.factors.size());
  for (size_t a = 0; a < g.factors.size(); ++a) s[a] = g.factors[a].scope;
  return s;
}

std::vector<int> all_cards(const FactorGraph& g) {
  std::vector<int> cards(g.variables.size());
  for (size_t v = 0; v < g.variables.size(); ++v) cards[v] = g.variables[v].cardinality;
  return cards;
}

struct RunningLse {
  double max = kNegInf;
  double acc = 0.0;
  void add(double s) {
    if (s == kNegInf) return;
    if (s <= max) {
      acc += std::exp(s - max);
    } else {
      acc = acc * std::exp(max - s) + 1.0;
      max = s;
    }
  }
  double value() const { return max == kNegInf ? kNegInf : max + std::log(acc); }
};

}  // namespace

double exact_log_partition(const FactorGraph& g, std::uint64_t max_states) {
  const std::uint64_t total = checked_state_count(g, max_states);
  const auto lt = log_tables(g);
  JointWalker walk(all_cards(g), factor_scopes(g));
  RunningLse lse;
  for (std::uint64_t s = 0; s < total; ++s) {
    double lw = 0.0;
    for (size_t a = 0; a < lt.size(); ++a) lw += lt[a][walk.sub[a]];
    lse.add(lw);
    walk.advance();
  }
  const double lz = lse.value();
  if (lz == kNegInf) throw std::domain_error("all joint weights are zero");
  return lz;
}

ExactDistribution exact_distribution(const FactorGraph& g, std::uint64_t max_states) {
  const std::uint64_t total = checked_state_count(g, max_states);
  const auto lt = log_tables(g);
  ExactDistribution out;
  out.probabilities.assign(total, 0.0);
  {
    JointWalker walk(all_cards(g), factor_scopes(g));
    for (std::uint64_t s = 0; s < total; ++s) {
      double lw = 0.0;
      for (size_t a = 0; a < lt.size(); ++a) lw += lt[a][walk.sub[a]];
      out.probabilities[s] = lw;
      walk.advance();
    }
  }
  const double mx = *std::max_element(out.probabilities.begin(), out.probabilities.end());
  if (mx == kNegInf) throw std::domain_error("all joint weights are zero");
  double sum = 0.0;
  for (auto& p : out.probabilities) {
    p = p == kNegInf ? 0.0 : std::exp(p - mx);
    sum += p;
  }
  for (auto& p : out.probabilities) p /= sum;
  out.log_z = mx + std::log(sum);
  return out;
}

std::vector<double> exact_marginal(const FactorGraph& g, const std::vector<int>& targets,
                                   std::uint64_t max_states) {
  for (size_t k = 0; k < targets.size(); ++k) {
    if (targets[k] < 0 || targets[k] >= g.num_variables())
      throw std::invalid_argument("marginal target out of range");
    if (k > 0 && targets[k] <= targets[k - 1])
      throw std::invalid_argument("marginal targets must be sorted ascending");
  }
  const std::uint64_t total = checked_state_count(g, max_states);
  const auto lt = log_tables(g);
  auto scopes = factor_scopes(g);
  scopes.push_back(targets);  // ride the walker for the target subindex
  const auto cards = all_cards(g);

  double mx = kNegInf;
  {
    JointWalker walk(cards, scopes);
    for (std::uint64_t s = 0; s < total; ++s) {
      double lw = 0.0;
      for (size_t a = 0; a < lt.size(); ++a) lw += lt[a][walk.sub[a]];
      mx = std::max(mx, lw);
      walk.advance();
    }
  }
  if (mx == kNegInf) throw std::domain_error("all joint weights are zero");

  std::uint64_t bins = 1;
  for (int v : targets) bins *= static_cast<std::uint64_t>(g.cardinality(v));
  std::vector<double> marg(bins, 0.0);
  JointWalker walk(cards, scopes);
  for (std::uint64_t s = 0; s < total; ++s) {
    double lw = 0.0;
    for (size_t a = 0; a < lt.size(); ++a) lw += lt[a][walk.sub[a]];
    if (lw != kNegInf) marg[walk.sub.back()] += std::exp(lw - mx);
    walk.advance();
  }
  double sum = 0.0;
  for (double m : marg) sum += m;
  for (auto& m : marg) m /= sum;
  return marg;
}

MapResult exact_map(const FactorGraph& g, std::uint64_t max_states) {
  const std::uint64_t total = checked_state_count(g, max_states);
  const auto lt = log_tables(g);
  JointWalker walk(all_cards(g), factor_scopes(g));
  double best = kNegInf;
  std::uint64_t best_index = 0;
  for (std::uint64_t s = 0; s < total; ++s) {
    double lw = 0.0;
    for (size_t a = 0; a < lt.size(); ++a) lw += lt[a][walk.sub[a]];
    if (lw > best) {  // strict: ties keep the smallest flat index
      best = lw;
      best_index = s;
    }
    walk.advance();
  }
  if (best == kNegInf) throw std::domain_error("all joint weights are zero");
  MapResult out;
  out.log_weight = best;
  index_to_state(all_cards(g), best_index, out.state);
  return out;
}

std::vector<double> marginal_of_joint(const std::vector<int>& cards,
                                      const std::vector<double>& joint,
                                      const std::vector<int>& keep) {
  std::uint64_t bins = 1;
  for (int v : keep) bins *= static_cast<std::uint64_t>(cards[static_cast<size_t>(v)]);
  std::vector<double> out(bins, 0.0);
  std::vector<std::vector<int>> scopes{keep};
  JointWalker walk(cards, scopes);
  for (double w : joint) {
    out[walk.sub[0]] += w;
    walk.advance();
  }
  return out;
}

std::vector<std::vector<double>> exact_temporal_evolve(const TemporalModel& tm,
                                                       std::vector<double> b0, int steps,
                                                       std::uint64_t max_states) {
  const size_t n = tm.variables.size();
  std::uint64_t total = 1;
  for (const auto& v : tm.variables) {
    total *= static_cast<std::uint64_t>(v.cardinality);
    if (total > max_states) throw std::length_error("joint state space exceeds the cap");
  }
  if (b0.size() != total) throw std::invalid_argument("initial distribution has wrong length");
  double s0 = 0.0;
  for (double p : b0) {
    if (p < 0.0) throw std::invalid_argument("initial distribution has a negative entry");
    s0 += p;
  }
  if (std::abs(s0 - 1.0) > 1e-6) throw std::invalid_argument("initial distribution not normalized");

  std::vector<int> cards(n);
  for (size_t v = 0; v < n; ++v) cards[v] = tm.variables[v].cardinality;

  // flat subindex of every joint state within each factor's past/future block
  const size_t nf = tm.factors.size();
  std::vector<std::vector<std::uint32_t>> past_sub(nf), future_sub(nf);
  std::vector<std::uint64_t> future_block(nf);
  {
    std::vector<std::vector<int>> pscopes(nf), fscopes(nf);
    for (size_t a = 0; a < nf; ++a) {
      pscopes[a] = tm.factors[a].past_scope;
      fscopes[a] = tm.factors[a].future_scope;
      std::uint64_t fb = 1;
      for (int v : tm.factors[a].future_scope)
        fb *= static_cast<std::uint64_t>(cards[static_cast<size_t>(v)]);
      future_block[a] = fb;
    }
    JointWalker pw(cards, pscopes);
    JointWalker fw(cards, fscopes);
    for (size_t a = 0; a < nf; ++a) {
      past_sub[a].resize(total);
      future_sub[a].resize(total);
    }
    for (std::uint64_t s = 0; s < total; ++s) {
      for (size_t a = 0; a < nf; ++a) {
        past_sub[a][s] = static_cast<std::uint32_t>(pw.sub[a]);
        future_sub[a][s] = static_cast<std::uint32_t>(fw.sub[a]);
      }
      pw.advance();
      fw.advance();
    }
  }

  auto fill_row = [&](std::uint64_t x, std::vector<double>& row) {
    std::fill(row.begin(), row.end(), 1.0);
    for (size_t a = 0; a < nf; ++a) {
      const double* base =
          tm.factors[a].values.data() + past_sub[a][x] * future_block[a];
      const auto* fs = future_sub[a].data();
      for (std::uint64_t y = 0; y < total; ++y) row[y] *= base[fs[y]];
    }
  };

  std::vector<std::vector<double>> trajectory;
  trajectory.reserve(static_cast<size_t>(steps));

  // With several steps and modest state counts it pays to keep the whole
  // normalized transition kernel around.
  const bool cache = steps > 1 && total * total * 8 <= (std::uint64_t{192} << 20);
  if (cache) {
    std::vector<double> kernel(total * total);
    std::vector<double> row(total);
    for (std::uint64_t x = 0; x < total; ++x) {
      fill_row(x, row);
      double z = 0.0;
      for (double w : row) z += w;
      if (z <= 0.0) {
        if (b0[x] > 0.0) throw std::domain_error("past state with mass has zero transition weight");
        std::fill(row.begin(), row.end(), 0.0);
      } else {
        for (auto& w : row) w /= z;
      }
      std::copy(row.begin(), row.end(), kernel.begin() + static_cast<long>(x * total));
    }
    std::vector<double> cur = std::move(b0);
    for (int t = 0; t < steps; ++t) {
      std::vector<double> next(total, 0.0);
      for (std::uint64_t x = 0; x < total; ++x) {
        const double bx = cur[x];
        if (bx == 0.0) continue;
        const double* krow = kernel.data() + x * total;
        for (std::uint64_t y = 0; y < total; ++y) next[y] += bx * krow[y];
      }
      double mass = 0.0;
      for (double p : next) mass += p;
      if (std::abs(mass - 1.0) > 1e-9)
        throw std::domain_error("probability mass lost during temporal step");
      trajectory.push_back(next);
      cur = std::move(next);
    }
    return trajectory;
  }

  std::vector<double> cur = std::move(b0);
  std::vector<double> row(total);
  for (int t = 0; t < steps; ++t) {
    std::vector<double> next(total, 0.0);
    for (std::uint64_t x = 0; x < total; ++x) {
      const double bx = cur[x];
      if (bx == 0.0) continue;
      fill_row(x, row);
      double z = 0.0;
      for (double w : row) z += w;
      if (z <= 0.0) throw std::domain_error("past state with mass has zero transition weight");
      const double scale = bx / z;
      for (std::uint64_t y = 0; y < total; ++y) next[y] += scale * row[y];
    }
    trajectory.push_back(next);
    cur = std::move(next);
  }
  return trajectory;
}

}  // namespace dynbp
