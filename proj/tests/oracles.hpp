#pragma once

// Reference implementations used as test oracles. They are written
// independently of the library code paths they check: plain loops, no
// clamping, no shared helpers beyond the value types.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "hgt/matcher.hpp"
#include "hgt/variational_em.hpp"
#include "hgt/wsbm.hpp"

namespace oracle {

using namespace hgt;

inline double log_or_neginf(double x) { return x > 0.0 ? std::log(x) : -INFINITY; }

/// log pi(z) + sum_j log p(y_j | theta), term by term.
inline double loglik_direct(const OutcomeVector& y, const PairingPlan& plan, const std::vector<int>& z,
                            const std::vector<double>& pi, const Matrix& theta) {
  double total = 0.0;
  for (int t : z) total += log_or_neginf(pi[t]);
  for (int j = 0; j < plan.m(); ++j) {
    const double p = theta(z[plan[j].first], z[plan[j].second]);
    total += log_or_neginf(y[j] ? p : 1.0 - p);
  }
  return total;
}

/// log of the sum over all K^n assignments, by recursion over agents.
inline double marginal_direct(const OutcomeVector& y, const PairingPlan& plan, const std::vector<double>& pi,
                              const Matrix& theta) {
  const int n = plan.n();
  const int k = static_cast<int>(pi.size());
  std::vector<double> terms;
  std::vector<int> z(n, 0);
  std::function<void(int)> rec = [&](int i) {
    if (i == n) {
      terms.push_back(loglik_direct(y, plan, z, pi, theta));
      return;
    }
    for (int a = 0; a < k; ++a) {
      z[i] = a;
      rec(i + 1);
    }
  };
  rec(0);
  const double mx = *std::max_element(terms.begin(), terms.end());
  if (std::isinf(mx)) return mx;
  double s = 0.0;
  for (double t : terms) s += std::exp(t - mx);
  return mx + std::log(s);
}

/// The variational objective written out directly.
inline double elbo_direct(const OutcomeVector& y, const PairingPlan& plan, const std::vector<double>& pi,
                          const Matrix& theta, const Matrix& q) {
  const int n = static_cast<int>(q.rows());
  const int k = static_cast<int>(q.cols());
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int a = 0; a < k; ++a) {
      if (q(i, a) == 0.0) continue;
      total += q(i, a) * (std::log(pi[a]) - std::log(q(i, a)));
    }
  }
  for (int j = 0; j < plan.m(); ++j) {
    for (int a = 0; a < k; ++a) {
      for (int b = 0; b < k; ++b) {
        const double w = q(plan[j].first, a) * q(plan[j].second, b);
        if (w == 0.0) continue;
        const double p = theta(a, b);
        total += w * std::log(y[j] ? p : 1.0 - p);
      }
    }
  }
  return total;
}

/// Best theta on a grid {step, 2 step, ...} < 1 at fixed q. For fixed q and
/// pi the objective separates over cells (symmetric pooling merges (a,b) with
/// (b,a)), so the joint grid optimum is assembled cell by cell from
/// q-weighted success and failure masses computed here.
inline Matrix grid_best_theta(const OutcomeVector& y, const PairingPlan& plan, const Matrix& q, bool symmetric,
                              double step) {
  const int k = static_cast<int>(q.cols());
  Matrix succ(k, k), fail(k, k);
  for (int j = 0; j < plan.m(); ++j)
    for (int a = 0; a < k; ++a)
      for (int b = 0; b < k; ++b) {
        const double w = q(plan[j].first, a) * q(plan[j].second, b);
        (y[j] ? succ : fail)(a, b) += w;
      }
  Matrix best(k, k, 0.5);
  const int steps = static_cast<int>(std::lround(1.0 / step));
  for (int a = 0; a < k; ++a) {
    for (int b = 0; b < k; ++b) {
      if (symmetric && b < a) continue;
      double s = succ(a, b), f = fail(a, b);
      if (symmetric && a != b) {
        s += succ(b, a);
        f += fail(b, a);
      }
      double top = -INFINITY;
      for (int g = 1; g < steps; ++g) {
        const double t = g * step;
        const double v = s * std::log(t) + f * std::log(1.0 - t);
        if (v > top) {
          top = v;
          best(a, b) = t;
        }
      }
      if (symmetric) best(b, a) = best(a, b);
    }
  }
  return best;
}

inline Matrix random_q(int n, int k, Rng& rng) {
  Matrix q(n, k);
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int a = 0; a < k; ++a) s += (q(i, a) = uniform01(rng) + 1e-3);
    for (int a = 0; a < k; ++a) q(i, a) /= s;
  }
  return q;
}

/// Random simple graph with min(m, n(n-1)/2) edges on n agents (uniform over
/// edge subsets).
inline PairingPlan random_plan(int n, int m, Rng& rng) {
  std::vector<Edge> all;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) all.push_back({i, j});
  m = std::min<int>(m, static_cast<int>(all.size()));
  for (int p = 0; p < m; ++p) {
    const int q = p + static_cast<int>(rng() % (all.size() - p));
    std::swap(all[p], all[q]);
  }
  all.resize(m);
  return PairingPlan(n, all);
}

/// Independent feasibility check of a plan. Returns an empty string when valid.
inline std::string check_plan(const PairingPlan& plan, const TypeVector& z, const MatchConstraints& c,
                              const TypeAllocation* expected = nullptr) {
  if (plan.n() != z.n()) return "n mismatch";
  if (plan.m() != c.m) return "edge count " + std::to_string(plan.m()) + " != " + std::to_string(c.m);
  std::set<std::pair<int, int>> seen;
  std::vector<int> degree(z.n(), 0);
  std::map<std::pair<int, int>, long long> cells;
  for (const Edge& e : plan.edges()) {
    if (e.first == e.second) return "self loop";
    const auto key = std::minmax(e.first, e.second);
    if (!seen.insert(key).second) return "duplicate edge";
    ++degree[e.first];
    ++degree[e.second];
    ++cells[std::minmax(z[e.first], z[e.second])];
  }
  if (c.workload_enabled)
    for (int d : degree)
      if (d < c.d_low || d > c.d_high) return "degree " + std::to_string(d) + " outside workload";
  if (expected) {
    for (int a = 0; a < z.k(); ++a)
      for (int b = a; b < z.k(); ++b) {
        const auto it = cells.find({a, b});
        const long long got = it == cells.end() ? 0 : it->second;
        if (got != expected->count(a, b)) return "cell count mismatch";
      }
  }
  return "";
}

/// Exhaustive search over K=2 allocations (c11, c12, c22). Returns the best
/// objective (-inf when infeasible) and the first maximizing allocation in
/// lexicographic order.
inline std::pair<double, std::vector<long long>> best_allocation_k2(const Matrix& w, int n1, int n2,
                                                                   const MatchConstraints& c) {
  const long long cap11 = 1LL * n1 * (n1 - 1) / 2, cap12 = 1LL * n1 * n2, cap22 = 1LL * n2 * (n2 - 1) / 2;
  const double w12 = (w(0, 1) + w(1, 0)) / 2.0;
  double best = -INFINITY;
  std::vector<long long> arg;
  for (long long c11 = 0; c11 <= std::min<long long>(cap11, c.m); ++c11) {
    for (long long c12 = 0; c12 <= std::min<long long>(cap12, c.m - c11); ++c12) {
      const long long c22 = c.m - c11 - c12;
      if (c22 > cap22) continue;
      if (c.workload_enabled) {
        const long long e1 = 2 * c11 + c12, e2 = 2 * c22 + c12;
        if (e1 < 1LL * n1 * c.d_low || e1 > 1LL * n1 * c.d_high) continue;
        if (e2 < 1LL * n2 * c.d_low || e2 > 1LL * n2 * c.d_high) continue;
      }
      const double v = c11 * w(0, 0) + c12 * w12 + c22 * w(1, 1);
      if (v > best) {
        best = v;
        arg = {c11, c12, c22};
      }
    }
  }
  return {best, arg};
}

}  // namespace oracle
