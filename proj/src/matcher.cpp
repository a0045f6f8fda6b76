#include "hgt/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "hgt/lp.hpp"

namespace hgt {

namespace {

long long cell_capacity(int a, int b, const std::vector<int>& counts) {
  const long long na = counts[a];
  const long long nb = counts[b];
  return a == b ? na * (na - 1) / 2 : na * nb;
}

std::string type_label(int a) { return "type " + std::to_string(a + 1); }

std::string cell_label(int a, int b) {
  return "cell (" + std::to_string(a + 1) + "," + std::to_string(b + 1) + ")";
}

// Per-type endpoint count implied by an allocation: 2 c_aa + sum_{b != a} c_ab.
long long endpoints(const TypeAllocation& alloc, int a) {
  long long e = 0;
  for (int b = 0; b < alloc.k; ++b) e += (a == b ? 2 : 1) * alloc.count(a, b);
  return e;
}

void shuffle(std::vector<int>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace

void MatchConstraints::validate(int n) const {
  if (m < 0) throw ValidationError("edge count m must be >= 0");
  const long long max_edges = static_cast<long long>(n) * (n - 1) / 2;
  if (m > max_edges) throw InfeasibleError("edge count m exceeds n(n-1)/2", "edge_count");
  if (workload_enabled) {
    if (d_low < 0 || d_low > d_high) throw ValidationError("workload bounds must satisfy 0 <= d_low <= d_high");
    if (2LL * m > static_cast<long long>(n) * d_high)
      throw InfeasibleError("workload: 2m exceeds n * d_high", "workload_high");
    if (2LL * m < static_cast<long long>(n) * d_low)
      throw InfeasibleError("workload: 2m is below n * d_low", "workload_low");
  }
  if (clipping_rate && !(*clipping_rate >= 0.0 && *clipping_rate < 0.5))
    throw ValidationError("clipping rate must lie in [0, 0.5)");
}

int num_cells(int k) { return k * (k + 1) / 2; }

int cell_index(int a, int b, int k) {
  if (a > b) std::swap(a, b);
  return a * k - a * (a - 1) / 2 + (b - a);
}

long long TypeAllocation::total() const {
  return std::accumulate(counts.begin(), counts.end(), 0LL);
}

Matrix pair_weights(const Matrix& weights) {
  const std::size_t k = weights.rows();
  if (weights.cols() != k) throw ValidationError("weights must be square");
  Matrix w(k, k);
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < k; ++b) w(a, b) = 0.5 * (weights(a, b) + weights(b, a));
  return w;
}

CellBounds cell_bounds(const std::vector<int>& type_counts, const MatchConstraints& constraints) {
  const int k = static_cast<int>(type_counts.size());
  CellBounds bounds;
  bounds.lower.assign(num_cells(k), 0);
  bounds.upper.assign(num_cells(k), 0);
  long long clip_low = 0;
  long long clip_high = constraints.m;
  if (constraints.clipping_rate) {
    const double lambda = *constraints.clipping_rate;
    clip_low = static_cast<long long>(std::ceil(constraints.m * lambda - 1e-9));
    clip_high = static_cast<long long>(std::floor(constraints.m * (1.0 - lambda) + 1e-9));
  }
  for (int a = 0; a < k; ++a) {
    for (int b = a; b < k; ++b) {
      const int c = cell_index(a, b, k);
      bounds.upper[c] = std::min(cell_capacity(a, b, type_counts), clip_high);
      bounds.lower[c] = clip_low;
      if (bounds.lower[c] > bounds.upper[c]) {
        bounds.warnings.push_back("clipping lower bound " + std::to_string(clip_low) + " for " +
                                  cell_label(a, b) + " relaxed to " +
                                  std::to_string(bounds.upper[c]));
        bounds.lower[c] = bounds.upper[c];
      }
    }
  }
  return bounds;
}

AllocationSolution solve_type_allocation(const Matrix& weights, const std::vector<int>& type_counts,
                                         const MatchConstraints& constraints) {
  const int k = static_cast<int>(type_counts.size());
  if (k < 1 || static_cast<int>(weights.rows()) != k || static_cast<int>(weights.cols()) != k)
    throw ValidationError("weights must be K x K with K = number of type counts");
  for (int c : type_counts)
    if (c < 0) throw ValidationError("negative type count");
  const int n = std::accumulate(type_counts.begin(), type_counts.end(), 0);
  constraints.validate(n);

  const int cells = num_cells(k);
  CellBounds bounds = cell_bounds(type_counts, constraints);
  const Matrix w = pair_weights(weights);

  const long long cap_total = std::accumulate(bounds.upper.begin(), bounds.upper.end(), 0LL);
  const long long low_total = std::accumulate(bounds.lower.begin(), bounds.lower.end(), 0LL);
  if (cap_total < constraints.m)
    throw InfeasibleError("cell upper bounds admit only " + std::to_string(cap_total) +
                              " edges but m = " + std::to_string(constraints.m),
                          "edge_count");
  if (low_total > constraints.m)
    throw InfeasibleError("clipping lower bounds require " + std::to_string(low_total) +
                              " edges but m = " + std::to_string(constraints.m),
                          "clipping_lower");
  if (constraints.workload_enabled) {
    for (int a = 0; a < k; ++a) {
      long long max_end = 0;
      long long min_end = 0;
      for (int b = 0; b < k; ++b) {
        const int c = cell_index(a, b, k);
        max_end += (a == b ? 2 : 1) * bounds.upper[c];
        min_end += (a == b ? 2 : 1) * bounds.lower[c];
      }
      if (max_end < static_cast<long long>(type_counts[a]) * constraints.d_low)
        throw InfeasibleError(type_label(a) + " cannot reach the workload lower bound",
                              "workload_low[" + std::to_string(a + 1) + "]");
      if (min_end > static_cast<long long>(type_counts[a]) * constraints.d_high)
        throw InfeasibleError(type_label(a) + " must exceed the workload upper bound",
                              "workload_high[" + std::to_string(a + 1) + "]");
    }
  }

  double scale = 0.0;
  for (int a = 0; a < k; ++a)
    for (int b = a; b < k; ++b) scale = std::max(scale, std::abs(w(a, b)));
  if (scale == 0.0) scale = 1.0;

  lp::Problem problem;
  problem.objective.resize(cells);
  problem.lower.resize(cells);
  problem.upper.resize(cells);
  for (int a = 0; a < k; ++a) {
    for (int b = a; b < k; ++b) {
      const int c = cell_index(a, b, k);
      problem.objective[c] = w(a, b) / scale;
      problem.lower[c] = static_cast<double>(bounds.lower[c]);
      problem.upper[c] = static_cast<double>(bounds.upper[c]);
    }
  }
  problem.rows.push_back({std::vector<double>(cells, 1.0), lp::Sense::kEqual,
                          static_cast<double>(constraints.m)});
  if (constraints.workload_enabled) {
    for (int a = 0; a < k; ++a) {
      std::vector<double> coef(cells, 0.0);
      for (int b = 0; b < k; ++b) coef[cell_index(a, b, k)] = a == b ? 2.0 : 1.0;
      problem.rows.push_back({coef, lp::Sense::kGreaterEqual,
                              static_cast<double>(type_counts[a]) * constraints.d_low});
      problem.rows.push_back({coef, lp::Sense::kLessEqual,
                              static_cast<double>(type_counts[a]) * constraints.d_high});
    }
  }

  const lp::IntegerSolution sol = lp::solve_integer(problem);
  if (sol.status != lp::Status::kOptimal)
    throw InfeasibleError("no integer type allocation satisfies the edge total, capacity, "
                          "workload and clipping bounds jointly",
                          "joint_allocation");

  AllocationSolution out;
  out.allocation.k = k;
  out.allocation.counts = sol.x;
  out.lp_bound = sol.root_bound * scale;
  out.warnings = std::move(bounds.warnings);
  for (int a = 0; a < k; ++a)
    for (int b = a; b < k; ++b)
      out.objective += static_cast<double>(out.allocation.count(a, b)) * w(a, b);
  return out;
}

TypeAllocation induced_allocation(const PairingPlan& plan, const TypeVector& z) {
  TypeAllocation alloc{z.k(), std::vector<long long>(num_cells(z.k()), 0)};
  for (const Edge& e : plan.edges()) ++alloc.counts[cell_index(z[e.first], z[e.second], z.k())];
  return alloc;
}

double plan_objective(const Matrix& weights, const PairingPlan& plan, const TypeVector& z) {
  const Matrix w = pair_weights(weights);
  double total = 0.0;
  for (const Edge& e : plan.edges()) total += w(z[e.first], z[e.second]);
  return total;
}

PairingPlan realize_edges(const TypeAllocation& allocation, const TypeVector& z,
                          const MatchConstraints& constraints, std::uint64_t seed) {
  const int k = z.k();
  const int n = z.n();
  if (allocation.k != k || static_cast<int>(allocation.counts.size()) != num_cells(k))
    throw ValidationError("allocation does not match the number of types");
  constraints.validate(n);
  const std::vector<int> counts = z.counts();
  if (allocation.total() != constraints.m)
    throw InfeasibleError("allocation total differs from m", "edge_count");
  for (int a = 0; a < k; ++a) {
    for (int b = a; b < k; ++b) {
      const long long c = allocation.count(a, b);
      if (c < 0 || c > cell_capacity(a, b, counts))
        throw InfeasibleError("allocation exceeds simple-graph capacity of " + cell_label(a, b),
                              "capacity[" + std::to_string(a + 1) + "," + std::to_string(b + 1) + "]");
    }
    if (constraints.workload_enabled) {
      const long long e = endpoints(allocation, a);
      if (e < static_cast<long long>(counts[a]) * constraints.d_low ||
          e > static_cast<long long>(counts[a]) * constraints.d_high)
        throw InfeasibleError(type_label(a) + " endpoints violate the workload bounds",
                              "workload[" + std::to_string(a + 1) + "]");
    }
  }

  Rng rng(seed);
  std::vector<std::vector<int>> members(k);
  for (int i = 0; i < n; ++i) members[z[i]].push_back(i);
  for (auto& group : members) shuffle(group, rng);

  // quota(i, b): edges agent i must have to agents of type b.
  std::vector<std::vector<long long>> quota(n, std::vector<long long>(k, 0));
  for (int a = 0; a < k; ++a) {
    const long long na = static_cast<long long>(members[a].size());
    if (na == 0) continue;
    long long offset = 0;
    for (int b = 0; b < k; ++b) {
      const long long ends = (a == b ? 2 : 1) * allocation.count(a, b);
      const long long base = ends / na;
      const long long extra = ends % na;
      for (long long idx = 0; idx < na; ++idx) {
        const int agent = members[a][static_cast<std::size_t>((offset + idx) % na)];
        quota[agent][b] = base + (idx < extra ? 1 : 0);
      }
      offset = (offset + extra) % na;
    }
  }

  std::vector<Edge> edges;
  edges.reserve(static_cast<std::size_t>(constraints.m));
  auto add_edge = [&](int u, int v) { edges.push_back(u < v ? Edge{u, v} : Edge{v, u}); };
  auto fail = [&](int a, int b) {
    throw InfeasibleError("degree quotas for " + cell_label(a, b) + " are not realizable",
                          "realization[" + std::to_string(a + 1) + "," + std::to_string(b + 1) + "]");
  };

  for (int a = 0; a < k; ++a) {
    const auto& group = members[a];
    const int size = static_cast<int>(group.size());
    // Havel-Hakimi within the type.
    std::vector<long long> residual(size);
    for (int p = 0; p < size; ++p) residual[p] = quota[group[p]][a];
    std::vector<bool> done(size, false);
    std::vector<int> order;
    while (true) {
      int u = -1;
      for (int p = 0; p < size; ++p)
        if (!done[p] && (u < 0 || residual[p] > residual[u])) u = p;
      if (u < 0 || residual[u] == 0) break;
      done[u] = true;
      order.clear();
      for (int p = 0; p < size; ++p)
        if (!done[p]) order.push_back(p);
      std::stable_sort(order.begin(), order.end(),
                       [&](int x, int y) { return residual[x] > residual[y]; });
      const long long d = residual[u];
      if (d > static_cast<long long>(order.size())) fail(a, a);
      for (long long t = 0; t < d; ++t) {
        const int v = order[static_cast<std::size_t>(t)];
        if (residual[v] == 0) fail(a, a);
        --residual[v];
        add_edge(group[u], group[v]);
      }
      residual[u] = 0;
    }

    // Greedy bipartite realization against each later type.
    for (int b = a + 1; b < k; ++b) {
      const auto& other = members[b];
      std::vector<long long> right(other.size());
      for (std::size_t p = 0; p < other.size(); ++p) right[p] = quota[other[p]][a];
      std::vector<int> right_order(other.size());
      for (int left : group) {
        const long long d = quota[left][b];
        if (d == 0) continue;
        std::iota(right_order.begin(), right_order.end(), 0);
        std::stable_sort(right_order.begin(), right_order.end(),
                         [&](int x, int y) { return right[x] > right[y]; });
        if (d > static_cast<long long>(other.size())) fail(a, b);
        for (long long t = 0; t < d; ++t) {
          const int p = right_order[static_cast<std::size_t>(t)];
          if (right[p] == 0) fail(a, b);
          --right[p];
          add_edge(left, other[p]);
        }
      }
      for (long long r : right)
        if (r != 0) fail(a, b);
    }
  }

  std::sort(edges.begin(), edges.end());
  PairingPlan plan(n, std::move(edges));
  if (induced_allocation(plan, z) != allocation)
    throw InfeasibleError("realized cell counts differ from allocation", "realization");
  return plan;
}

MatchResult solve_matching(const Matrix& weights, const TypeVector& z,
                           const MatchConstraints& constraints, std::uint64_t seed) {
  AllocationSolution sol = solve_type_allocation(weights, z.counts(), constraints);
  MatchResult result;
  result.plan = realize_edges(sol.allocation, z, constraints, seed);
  result.allocation = std::move(sol.allocation);
  result.objective = plan_objective(weights, result.plan, z);
  result.optimality = Optimality::kExact;
  result.warnings = std::move(sol.warnings);
  return result;
}

MatchResult bruteforce_matching(const Matrix& weights, const TypeVector& z,
                                const MatchConstraints& constraints) {
  const int n = z.n();
  const int k = z.k();
  if (n > 12) throw SizeError("bruteforce matching supports n <= 12");
  if (static_cast<int>(weights.rows()) != k || static_cast<int>(weights.cols()) != k)
    throw ValidationError("weights must be K x K");
  constraints.validate(n);
  const int m = constraints.m;
  const Matrix w = pair_weights(weights);
  const int cells = num_cells(k);

  std::vector<Edge> all;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) all.push_back({i, j});
  const int total = static_cast<int>(all.size());
  std::vector<int> edge_cell(total);
  std::vector<double> edge_weight(total);
  for (int e = 0; e < total; ++e) {
    edge_cell[e] = cell_index(z[all[e].first], z[all[e].second], k);
    edge_weight[e] = w(z[all[e].first], z[all[e].second]);
  }

  // Cell bounds restated directly: count of realizable pairs, clipped.
  std::vector<long long> cap(cells, 0);
  for (int e = 0; e < total; ++e) ++cap[edge_cell[e]];
  std::vector<long long> lo(cells, 0), hi(cap);
  if (constraints.clipping_rate) {
    const double lambda = *constraints.clipping_rate;
    const auto clip_lo = static_cast<long long>(std::ceil(m * lambda - 1e-9));
    const auto clip_hi = static_cast<long long>(std::floor(m * (1.0 - lambda) + 1e-9));
    for (int c = 0; c < cells; ++c) {
      hi[c] = std::min(cap[c], clip_hi);
      lo[c] = std::min(clip_lo, hi[c]);
    }
  }
  std::vector<double> cell_weight(cells, 0.0);
  for (int a = 0; a < k; ++a)
    for (int b = a; b < k; ++b) cell_weight[cell_index(a, b, k)] = w(a, b);
  std::vector<int> cells_by_weight(cells);
  std::iota(cells_by_weight.begin(), cells_by_weight.end(), 0);
  std::stable_sort(cells_by_weight.begin(), cells_by_weight.end(),
                   [&](int x, int y) { return cell_weight[x] > cell_weight[y]; });

  // Suffix counts for pruning: edges at positions >= p touching agent i / in cell c.
  std::vector<std::vector<int>> rem_agent(total + 1, std::vector<int>(n, 0));
  std::vector<std::vector<long long>> rem_cell(total + 1, std::vector<long long>(cells, 0));
  for (int p = total - 1; p >= 0; --p) {
    rem_agent[p] = rem_agent[p + 1];
    rem_cell[p] = rem_cell[p + 1];
    ++rem_agent[p][all[p].first];
    ++rem_agent[p][all[p].second];
    ++rem_cell[p][edge_cell[p]];
  }

  const bool workload = constraints.workload_enabled;
  const int d_low = constraints.d_low;
  const int d_high = constraints.d_high;
  std::vector<int> degree(n, 0);
  std::vector<long long> cell_count(cells, 0);
  std::vector<int> chosen;
  std::vector<int> best_set;
  bool found = false;
  double best = 0.0;

  std::function<void(int, double)> search = [&](int p, double value) {
    const int need = m - static_cast<int>(chosen.size());
    if (need > total - p) return;
    // Counting arguments over the edges still available.
    long long cell_room = 0, cell_short = 0;
    for (int c = 0; c < cells; ++c) {
      if (cell_count[c] + rem_cell[p][c] < lo[c]) return;
      cell_room += std::min(rem_cell[p][c], hi[c] - cell_count[c]);
      cell_short += std::max(0LL, lo[c] - cell_count[c]);
    }
    if (cell_room < need || cell_short > need) return;
    if (workload) {
      long long room = 0, missing = 0;
      for (int i = 0; i < n; ++i) {
        if (degree[i] + rem_agent[p][i] < d_low) return;
        room += std::min(rem_agent[p][i], d_high - degree[i]);
        missing += std::max(0, d_low - degree[i]);
      }
      if (room < 2LL * need || missing > 2LL * need) return;
    }
    if (need == 0) {
      if (!found || value > best + 1e-12 * (1.0 + std::abs(best))) {
        found = true;
        best = value;
        best_set = chosen;
      }
      return;
    }
    if (found) {
      double bound = value;
      long long left = need;
      for (int c : cells_by_weight) {
        if (left == 0) break;
        const long long take = std::min({left, rem_cell[p][c], hi[c] - cell_count[c]});
        if (take <= 0) continue;
        bound += static_cast<double>(take) * cell_weight[c];
        left -= take;
      }
      if (bound <= best + 1e-12 * (1.0 + std::abs(best))) return;
    }
    const Edge& e = all[p];
    const int c = edge_cell[p];
    if ((!workload || (degree[e.first] < d_high && degree[e.second] < d_high)) && cell_count[c] < hi[c]) {
      ++degree[e.first];
      ++degree[e.second];
      ++cell_count[c];
      chosen.push_back(p);
      search(p + 1, value + edge_weight[p]);
      chosen.pop_back();
      --cell_count[c];
      --degree[e.second];
      --degree[e.first];
    }
    search(p + 1, value);
  };
  search(0, 0.0);
  if (!found) throw InfeasibleError("no edge subset satisfies the constraints", "bruteforce");

  std::vector<Edge> edges;
  for (int p : best_set) edges.push_back(all[p]);
  MatchResult result;
  result.plan = PairingPlan(n, std::move(edges));
  result.allocation = induced_allocation(result.plan, z);
  result.objective = 0.0;
  for (int p : best_set) result.objective += edge_weight[p];
  return result;
}

}  // namespace hgt
