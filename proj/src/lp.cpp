#include "hgt/lp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace hgt::lp {

namespace {

constexpr double kPivotEps = 1e-9;
constexpr int kMaxPivots = 100000;

class Tableau {
 public:
  Tableau(int rows, int cols) : rows_(rows), cols_(cols), t_((rows + 1) * (cols + 1), 0.0) {}

  double& at(int r, int c) { return t_[r * (cols_ + 1) + c]; }
  double at(int r, int c) const { return t_[r * (cols_ + 1) + c]; }
  double& rhs(int r) { return at(r, cols_); }
  double& cost(int c) { return at(rows_, c); }
  int rows() const { return rows_; }
  int cols() const { return cols_; }

  void pivot(int pr, int pc) {
    const double p = at(pr, pc);
    for (int c = 0; c <= cols_; ++c) at(pr, c) /= p;
    for (int r = 0; r <= rows_; ++r) {
      if (r == pr) continue;
      const double f = at(r, pc);
      if (f == 0.0) continue;
      for (int c = 0; c <= cols_; ++c) at(r, c) -= f * at(pr, c);
      at(r, pc) = 0.0;
    }
    at(pr, pc) = 1.0;
  }

 private:
  int rows_;
  int cols_;
  std::vector<double> t_;
};

// Runs Bland's-rule pivots until optimal. Returns false when unbounded.
bool iterate(Tableau& t, std::vector<int>& basis, const std::vector<bool>& allowed) {
  for (int it = 0; it < kMaxPivots; ++it) {
    int enter = -1;
    for (int c = 0; c < t.cols(); ++c) {
      if (allowed[c] && t.cost(c) < -kPivotEps) {
        enter = c;
        break;
      }
    }
    if (enter < 0) return true;
    int leave = -1;
    double best_ratio = 0.0;
    for (int r = 0; r < t.rows(); ++r) {
      const double a = t.at(r, enter);
      if (a <= kPivotEps) continue;
      const double ratio = t.rhs(r) / a;
      if (leave < 0 || ratio < best_ratio - kPivotEps ||
          (ratio <= best_ratio + kPivotEps && basis[r] < basis[leave])) {
        leave = r;
        best_ratio = ratio;
      }
    }
    if (leave < 0) return false;
    t.pivot(leave, enter);
    basis[leave] = enter;
  }
  throw std::runtime_error("simplex pivot limit exceeded");
}

struct Row {
  std::vector<double> coef;
  Sense sense;
  double rhs;
};

}  // namespace

Solution solve(const Problem& problem) {
  const int n = static_cast<int>(problem.objective.size());
  if (static_cast<int>(problem.lower.size()) != n || static_cast<int>(problem.upper.size()) != n)
    throw std::invalid_argument("bounds size mismatch");

  Solution infeasible{Status::kInfeasible, {}, 0.0};
  std::vector<Row> rows;
  for (const Constraint& c : problem.rows) {
    if (static_cast<int>(c.coef.size()) != n) throw std::invalid_argument("row size mismatch");
    double b = c.rhs;
    for (int v = 0; v < n; ++v) b -= c.coef[v] * problem.lower[v];
    rows.push_back({c.coef, c.sense, b});
  }
  for (int v = 0; v < n; ++v) {
    if (problem.upper[v] < problem.lower[v]) return infeasible;
    if (std::isfinite(problem.upper[v])) {
      std::vector<double> e(n, 0.0);
      e[v] = 1.0;
      rows.push_back({std::move(e), Sense::kLessEqual, problem.upper[v] - problem.lower[v]});
    }
  }
  double scale = 1.0;
  for (Row& r : rows) {
    if (r.rhs < 0.0) {
      for (double& a : r.coef) a = -a;
      r.rhs = -r.rhs;
      if (r.sense == Sense::kLessEqual)
        r.sense = Sense::kGreaterEqual;
      else if (r.sense == Sense::kGreaterEqual)
        r.sense = Sense::kLessEqual;
    }
    scale = std::max(scale, r.rhs);
  }

  const int num_rows = static_cast<int>(rows.size());
  int num_slack = 0;
  int num_art = 0;
  for (const Row& r : rows) {
    if (r.sense != Sense::kEqual) ++num_slack;
    if (r.sense != Sense::kLessEqual) ++num_art;
  }
  const int cols = n + num_slack + num_art;
  Tableau t(num_rows, cols);
  std::vector<int> basis(num_rows);
  std::vector<bool> is_art(cols, false);
  int next_slack = n;
  int next_art = n + num_slack;
  for (int r = 0; r < num_rows; ++r) {
    for (int v = 0; v < n; ++v) t.at(r, v) = rows[r].coef[v];
    t.rhs(r) = rows[r].rhs;
    if (rows[r].sense == Sense::kLessEqual) {
      t.at(r, next_slack) = 1.0;
      basis[r] = next_slack++;
    } else {
      if (rows[r].sense == Sense::kGreaterEqual) t.at(r, next_slack++) = -1.0;
      t.at(r, next_art) = 1.0;
      is_art[next_art] = true;
      basis[r] = next_art++;
    }
  }

  std::vector<bool> allowed(cols, true);
  if (num_art > 0) {
    // Phase 1: maximize -(sum of artificials).
    for (int c = 0; c < cols; ++c) t.cost(c) = is_art[c] ? 1.0 : 0.0;
    t.cost(cols) = 0.0;
    for (int r = 0; r < num_rows; ++r) {
      if (!is_art[basis[r]]) continue;
      for (int c = 0; c <= cols; ++c) t.cost(c) -= t.at(r, c);
    }
    iterate(t, basis, allowed);
    if (t.cost(cols) < -1e-7 * scale) return infeasible;
    for (int r = 0; r < num_rows; ++r) {
      if (!is_art[basis[r]]) continue;
      for (int c = 0; c < cols; ++c) {
        if (!is_art[c] && std::abs(t.at(r, c)) > kPivotEps) {
          t.pivot(r, c);
          basis[r] = c;
          break;
        }
      }
    }
    for (int c = 0; c < cols; ++c)
      if (is_art[c]) allowed[c] = false;
  }

  // Phase 2.
  for (int c = 0; c <= cols; ++c) t.cost(c) = 0.0;
  for (int v = 0; v < n; ++v) t.cost(v) = -problem.objective[v];
  for (int r = 0; r < num_rows; ++r) {
    const int b = basis[r];
    if (b >= n) continue;
    const double cb = problem.objective[b];
    if (cb == 0.0) continue;
    for (int c = 0; c <= cols; ++c) t.cost(c) += cb * t.at(r, c);
  }
  if (!iterate(t, basis, allowed)) return {Status::kUnbounded, {}, 0.0};

  Solution sol;
  sol.status = Status::kOptimal;
  sol.x = problem.lower;
  for (int r = 0; r < num_rows; ++r)
    if (basis[r] < n) sol.x[basis[r]] += t.rhs(r);
  sol.objective = 0.0;
  for (int v = 0; v < n; ++v) sol.objective += problem.objective[v] * sol.x[v];
  return sol;
}

IntegerSolution solve_integer(const Problem& problem) {
  const int n = static_cast<int>(problem.objective.size());
  IntegerSolution out;
  const Solution root = solve(problem);
  if (root.status != Status::kOptimal) {
    out.status = root.status;
    return out;
  }
  out.root_bound = root.objective;

  struct Node {
    std::vector<double> lower, upper;
  };
  std::vector<Node> stack{{problem.lower, problem.upper}};
  bool have_incumbent = false;
  double best = -std::numeric_limits<double>::infinity();
  auto tol = [&] { return 1e-9 * (1.0 + std::abs(best)); };

  Problem sub = problem;
  while (!stack.empty()) {
    Node node = std::move(stack.back());
    stack.pop_back();
    ++out.nodes;
    sub.lower = node.lower;
    sub.upper = node.upper;
    const Solution sol = solve(sub);
    if (sol.status != Status::kOptimal) continue;
    if (have_incumbent && sol.objective <= best + tol()) continue;

    int branch = -1;
    double best_dist = 0.0;
    for (int v = 0; v < n; ++v) {
      const double frac = sol.x[v] - std::floor(sol.x[v]);
      const double dist = std::min(frac, 1.0 - frac);
      if (dist > 1e-7 && dist > best_dist + 1e-12) {
        branch = v;
        best_dist = dist;
      }
    }
    if (branch < 0) {
      std::vector<long long> xi(n);
      for (int v = 0; v < n; ++v) xi[v] = std::llround(sol.x[v]);
      bool feasible = true;
      for (int v = 0; v < n && feasible; ++v)
        feasible = xi[v] >= node.lower[v] - 1e-9 && xi[v] <= node.upper[v] + 1e-9;
      for (const Constraint& c : problem.rows) {
        if (!feasible) break;
        double lhs = 0.0;
        for (int v = 0; v < n; ++v) lhs += c.coef[v] * static_cast<double>(xi[v]);
        const double slack = 1e-6 * (1.0 + std::abs(c.rhs));
        if (c.sense == Sense::kLessEqual) feasible = lhs <= c.rhs + slack;
        if (c.sense == Sense::kGreaterEqual) feasible = lhs >= c.rhs - slack;
        if (c.sense == Sense::kEqual) feasible = std::abs(lhs - c.rhs) <= slack;
      }
      if (!feasible) continue;
      double obj = 0.0;
      for (int v = 0; v < n; ++v) obj += problem.objective[v] * static_cast<double>(xi[v]);
      if (!have_incumbent || obj > best + tol()) {
        have_incumbent = true;
        best = obj;
        out.x = std::move(xi);
      }
      continue;
    }

    const double value = sol.x[branch];
    Node down = node;
    down.upper[branch] = std::floor(value);
    Node up = std::move(node);
    up.lower[branch] = std::ceil(value);
    // LIFO: the nearer side is explored first.
    if (value - std::floor(value) >= 0.5) {
      stack.push_back(std::move(down));
      stack.push_back(std::move(up));
    } else {
      stack.push_back(std::move(up));
      stack.push_back(std::move(down));
    }
  }
  if (!have_incumbent) {
    out.status = Status::kInfeasible;
    return out;
  }
  out.status = Status::kOptimal;
  out.objective = best;
  return out;
}

}  // namespace hgt::lp
