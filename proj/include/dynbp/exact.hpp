#pragma once
#include <cstdint>
#include <utility>
#include <vector>

#include "dynbp/model.hpp"
#include "dynbp/temporal.hpp"

namespace dynbp {

inline constexpr std::uint64_t kDefaultStaticCap = std::uint64_t{1} << 24;
inline constexpr std::uint64_t kDefaultTemporalCap = std::uint64_t{1} << 12;

// log of the sum of unnormalized joint weights, by enumeration
double exact_log_partition(const FactorGraph& g, std::uint64_t max_states = kDefaultStaticCap);

// normalized joint marginal over `targets` (sorted variable ids)
std::vector<double> exact_marginal(const FactorGraph& g, const std::vector<int>& targets,
                                   std::uint64_t max_states = kDefaultStaticCap);

struct MapResult {
  std::vector<int> state;
  double log_weight = 0.0;
};
// maximizing assignment; ties resolve to the smallest flat state index
MapResult exact_map(const FactorGraph& g, std::uint64_t max_states = kDefaultStaticCap);

struct ExactDistribution {
  double log_z = 0.0;
  std::vector<double> probabilities;  // flat over all joint states
};
ExactDistribution exact_distribution(const FactorGraph& g,
                                     std::uint64_t max_states = kDefaultStaticCap);

// Evolves a full joint distribution through the per-step conditional
//   b'(x') = sum_x [ prod_a f_a(x'|x) / Z(x) ] b(x).
// trajectory[t] holds the joint after t+1 transitions.
std::vector<std::vector<double>> exact_temporal_evolve(
    const TemporalModel& tm, std::vector<double> b0, int steps,
    std::uint64_t max_states = kDefaultTemporalCap);

// sum a flat joint over `cards` down to the sorted index subset `keep`
std::vector<double> marginal_of_joint(const std::vector<int>& cards,
                                      const std::vector<double>& joint,
                                      const std::vector<int>& keep);

}  // namespace dynbp
