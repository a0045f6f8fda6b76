#pragma once

// Constrained maximum-weight pairing of agents whose pair weight depends only
// on the two agents' types.
//
// Because weights are type functions, the agent-level integer program over
// C(n,2) edge indicators collapses to an integer program over the K(K+1)/2
// unordered type cells (solved exactly by branch-and-bound), followed by an
// agent-level realization of the chosen cell counts as a simple graph.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hgt/common.hpp"
#include "hgt/wsbm.hpp"

namespace hgt {

struct MatchConstraints {
  int m = 0;
  bool workload_enabled = false;
  int d_low = 0;
  int d_high = 0;
  std::optional<double> clipping_rate;  // lambda in [0, 0.5); nullopt disables clipping

  /// Throws ValidationError for malformed bounds and InfeasibleError when no
  /// plan on n agents can satisfy them (edge count or workload totals).
  void validate(int n) const;
};

/// Index of unordered cell (a, b), a <= b, in the order (0,0), (0,1), ..., (1,1), ...
int cell_index(int a, int b, int k);
int num_cells(int k);

/// Counts c_ab for unordered type cells a <= b.
struct TypeAllocation {
  int k = 0;
  std::vector<long long> counts;  // indexed by cell_index

  long long count(int a, int b) const { return counts[cell_index(a, b, k)]; }
  long long total() const;
  friend bool operator==(const TypeAllocation&, const TypeAllocation&) = default;
};

struct CellBounds {
  std::vector<long long> lower;
  std::vector<long long> upper;
  std::vector<std::string> warnings;
};

/// Capacity and clipping bounds per unordered cell for the given type counts.
/// Clipping lower bounds that exceed a cell's upper bound are relaxed down to
/// it, with a warning.
CellBounds cell_bounds(const std::vector<int>& type_counts, const MatchConstraints& constraints);

struct AllocationSolution {
  TypeAllocation allocation;
  double objective = 0.0;
  double lp_bound = 0.0;
  std::vector<std::string> warnings;
};

/// Symmetrized unordered-pair weights: (W_ab + W_ba) / 2.
Matrix pair_weights(const Matrix& weights);

/// Exact type-level optimum of sum_c count_c * weight_c subject to the edge
/// total, simple-graph capacities, per-type workload and clipping bounds.
/// Throws InfeasibleError naming the violated bound.
AllocationSolution solve_type_allocation(const Matrix& weights, const std::vector<int>& type_counts,
                                         const MatchConstraints& constraints);

/// Builds a simple graph whose type-cell counts equal `allocation` exactly and
/// whose degrees respect the workload bounds. Each cell's endpoints are spread
/// as evenly as possible over the agents of each type (rotating remainders so
/// that per-agent totals differ by at most one), then realized by Havel-Hakimi
/// (within a type) or Gale-Ryser greedy (across types). Agents are shuffled
/// within each type first. Throws InfeasibleError if the allocation is not
/// realizable for the type counts in z.
PairingPlan realize_edges(const TypeAllocation& allocation, const TypeVector& z,
                          const MatchConstraints& constraints, std::uint64_t seed);

enum class Optimality { kExact, kHeuristicRealization };

struct MatchResult {
  PairingPlan plan;
  TypeAllocation allocation;
  double objective = 0.0;
  Optimality optimality = Optimality::kExact;
  std::vector<std::string> warnings;
};

MatchResult solve_matching(const Matrix& weights, const TypeVector& z,
                           const MatchConstraints& constraints, std::uint64_t seed);

/// Exhaustive search over edge subsets of size m (with feasibility pruning).
/// Returns the lexicographically first maximum. Throws SizeError for n > 12.
MatchResult bruteforce_matching(const Matrix& weights, const TypeVector& z,
                                const MatchConstraints& constraints);

/// Type-cell counts induced by a plan under types z.
TypeAllocation induced_allocation(const PairingPlan& plan, const TypeVector& z);

/// Sum of pair weights over the plan's edges.
double plan_objective(const Matrix& weights, const PairingPlan& plan, const TypeVector& z);

}  // namespace hgt
