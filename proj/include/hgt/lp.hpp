#pragma once

// Dense two-phase tableau simplex with Bland's rule, and a depth-first
// branch-and-bound on top of it. Sized for a handful of variables.

#include <vector>

namespace hgt::lp {

enum class Sense { kLessEqual, kEqual, kGreaterEqual };

struct Constraint {
  std::vector<double> coef;
  Sense sense = Sense::kLessEqual;
  double rhs = 0.0;
};

/// maximize objective . x  s.t. rows, lower <= x <= upper.
struct Problem {
  std::vector<double> objective;
  std::vector<Constraint> rows;
  std::vector<double> lower;
  std::vector<double> upper;
};

enum class Status { kOptimal, kInfeasible, kUnbounded };

struct Solution {
  Status status = Status::kInfeasible;
  std::vector<double> x;
  double objective = 0.0;
};

Solution solve(const Problem& problem);

struct IntegerSolution {
  Status status = Status::kInfeasible;
  std::vector<long long> x;
  double objective = 0.0;
  double root_bound = 0.0;  // LP relaxation optimum at the root
  int nodes = 0;
};

/// Pure integer program by branch-and-bound: branches on the most fractional
/// variable (lowest index on ties), depth-first, pruning nodes whose LP bound
/// cannot strictly beat the incumbent.
IntegerSolution solve_integer(const Problem& problem);

}  // namespace hgt::lp
