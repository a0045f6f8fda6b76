#include "hgt/wsbm.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

namespace hgt {

ProductionMatrix::ProductionMatrix(Matrix values, bool symmetric)
    : values_(std::move(values)), symmetric_(symmetric) {
  if (values_.rows() != values_.cols() || values_.rows() == 0)
    throw ValidationError("production matrix must be square and non-empty");
  const int k = this->k();
  for (int a = 0; a < k; ++a) {
    for (int b = 0; b < k; ++b) {
      const double v = values_(a, b);
      if (!(v >= 0.0 && v <= 1.0))
        throw ValidationError("production matrix entry outside [0,1] at (" + std::to_string(a) +
                              "," + std::to_string(b) + ")");
      if (symmetric_ && v != values_(b, a))
        throw ValidationError("production matrix flagged symmetric but is not");
    }
  }
}

TypeDistribution::TypeDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) throw ValidationError("type distribution is empty");
  double sum = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0)) throw ValidationError("type probability is negative or NaN");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw ValidationError("type probabilities do not sum to 1");
}

TypeDistribution TypeDistribution::uniform(int k) {
  if (k < 1) throw ValidationError("k must be >= 1");
  return TypeDistribution(std::vector<double>(k, 1.0 / k));
}

TypeVector::TypeVector(std::vector<int> types, int k) : types_(std::move(types)), k_(k) {
  if (k_ < 1) throw ValidationError("k must be >= 1");
  for (int t : types_)
    if (t < 0 || t >= k_) throw ValidationError("type index out of range");
}

std::vector<int> TypeVector::counts() const {
  std::vector<int> c(k_, 0);
  for (int t : types_) ++c[t];
  return c;
}

void TypeVector::set(int i, int type) {
  if (type < 0 || type >= k_) throw ValidationError("type index out of range");
  types_.at(i) = type;
}

PairingPlan::PairingPlan(int n, std::vector<Edge> edges) : n_(n), edges_(std::move(edges)) {
  if (n_ < 0) throw ValidationError("negative agent count");
  std::set<Edge> seen;
  for (const Edge& e : edges_) {
    if (e.first >= e.second) throw ValidationError("edge must satisfy first < second");
    if (e.first < 0 || e.second >= n_) throw ValidationError("edge endpoint out of range");
    if (!seen.insert(e).second) throw ValidationError("duplicate edge in pairing plan");
  }
}

std::vector<int> PairingPlan::degrees() const {
  std::vector<int> d(n_, 0);
  for (const Edge& e : edges_) {
    ++d[e.first];
    ++d[e.second];
  }
  return d;
}

OutcomeVector::OutcomeVector(std::vector<std::uint8_t> values) : values_(std::move(values)) {
  for (auto v : values_)
    if (v > 1) throw ValidationError("outcome must be 0 or 1");
}

TypeVector sample_types(int n, const TypeDistribution& pi, std::uint64_t seed) {
  if (n < 1) throw ValidationError("n must be >= 1");
  Rng rng(seed);
  std::vector<int> z(n);
  for (int i = 0; i < n; ++i) z[i] = sample_categorical(pi.probs(), rng);
  return TypeVector(std::move(z), pi.k());
}

OutcomeVector sample_outcomes(const PairingPlan& plan, const TypeVector& z,
                              const ProductionMatrix& theta, std::uint64_t seed) {
  if (plan.n() != z.n()) throw ValidationError("plan and type vector disagree on n");
  if (theta.k() != z.k()) throw ValidationError("theta and type vector disagree on k");
  Rng rng(seed);
  std::vector<std::uint8_t> y(plan.m());
  for (int j = 0; j < plan.m(); ++j) {
    const double p = theta(z[plan[j].first], z[plan[j].second]);
    y[j] = uniform01(rng) < p ? 1 : 0;
  }
  return OutcomeVector(std::move(y));
}

double expected_weight(const ProductionMatrix& theta, int a, int b) {
  if (a < 0 || b < 0 || a >= theta.k() || b >= theta.k())
    throw std::out_of_range("type index out of range");
  return theta(a, b);
}

double bernoulli_logpmf(int y, double theta) {
  const double p = y == 1 ? theta : 1.0 - theta;
  return p > 0.0 ? std::log(p) : kNegInf;
}

void check_dimensions(const OutcomeVector& y, const PairingPlan& plan, int k) {
  if (y.size() != plan.m()) throw ValidationError("outcome count differs from edge count");
  if (k < 1) throw ValidationError("k must be >= 1");
}

double complete_loglik(const OutcomeVector& y, const PairingPlan& plan, const TypeVector& z,
                       const TypeDistribution& pi, const ProductionMatrix& theta) {
  check_dimensions(y, plan, theta.k());
  if (z.n() != plan.n() || z.k() != theta.k() || pi.k() != theta.k())
    throw ValidationError("inconsistent dimensions");
  double total = 0.0;
  for (int i = 0; i < z.n(); ++i) {
    const double p = pi(z[i]);
    if (p <= 0.0) return kNegInf;
    total += std::log(p);
  }
  for (int j = 0; j < plan.m(); ++j) {
    const double l = bernoulli_logpmf(y[j], theta(z[plan[j].first], z[plan[j].second]));
    if (l == kNegInf) return kNegInf;
    total += l;
  }
  return total;
}

double marginal_loglik_bruteforce(const OutcomeVector& y, const PairingPlan& plan,
                                  const TypeDistribution& pi, const ProductionMatrix& theta) {
  check_dimensions(y, plan, theta.k());
  const int n = plan.n();
  const int k = theta.k();
  double configs = std::pow(static_cast<double>(k), n);
  if (configs > 1e7) throw SizeError("K^n exceeds enumeration limit of 1e7");

  std::vector<int> e(n, 0);
  double acc = kNegInf;
  while (true) {
    acc = log_add(acc, complete_loglik(y, plan, TypeVector(e, k), pi, theta));
    int pos = 0;
    while (pos < n && ++e[pos] == k) e[pos++] = 0;
    if (pos == n) break;
  }
  return acc;
}

}  // namespace hgt
