#pragma once
#include <utility>
#include <vector>

#include "dynbp/model.hpp"
#include "dynbp/validation.hpp"

namespace dynbp {

// A region owns a sorted set of variable ids and a sorted set of factor ids
// assigned to it. Edges run parent -> child where the child is a proper
// subregion (componentwise subset, not equal as a pair).
struct Region {
  int id = 0;
  std::vector<int> variables;
  std::vector<int> factors;
};

struct RegionGraph {
  std::vector<Region> regions;            // ids dense 0..r-1
  std::vector<std::pair<int, int>> edges; // (parent, child), sorted, unique
  std::vector<double> counting;           // one number per region

  int num_regions() const { return static_cast<int>(regions.size()); }
};

struct RegionAdjacency {
  std::vector<std::vector<int>> parents;
  std::vector<std::vector<int>> children;
};
RegionAdjacency make_adjacency(const RegionGraph& rg);

// Two-level construction: one large region per maximal factor scope (factors
// whose scope is contained in another factor's scope are absorbed into the
// hosting large region), one small region per variable, edges large -> small.
RegionGraph build_bethe_regions(const FactorGraph& g);

// counting number = 1 minus the sum over all transitive ancestors,
// assigned in topological order; throws on a cyclic graph
void compute_counting_numbers(RegionGraph& rg);

// structure, factor closure, and the per-factor / per-variable sums of
// counting numbers (each must equal 1)
ValidationReport validate_region_graph(const RegionGraph& rg, const FactorGraph& g);

// region itself plus all transitive descendants, ascending
std::vector<int> covering_set(const RegionGraph& rg, int region);

// Message bookkeeping for one parent->child edge: which messages enter the
// update numerator and which divide it out in the denominator.
struct RelationSets {
  std::vector<std::pair<int, int>> numerator;
  std::vector<std::pair<int, int>> denominator;
};
RelationSets relation_sets(const RegionGraph& rg, int parent, int child);

}  // namespace dynbp
