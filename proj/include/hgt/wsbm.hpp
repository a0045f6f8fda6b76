#pragma once

// Weighted stochastic block model with Bernoulli edge outcomes: data types,
// samplers, and exact likelihoods used as test oracles.
//
// Type indices are 0-based everywhere in the library. The 1-based labels used
// in scenario documentation are converted at the I/O boundary.

#include <cstdint>
#include <vector>

#include "hgt/common.hpp"

namespace hgt {

/// K x K matrix of Bernoulli success probabilities, one per ordered type pair.
class ProductionMatrix {
 public:
  ProductionMatrix() = default;
  /// Throws ValidationError if an entry lies outside [0,1], the matrix is not
  /// square, or `symmetric` is set and values[a][b] != values[b][a].
  ProductionMatrix(Matrix values, bool symmetric);

  int k() const noexcept { return static_cast<int>(values_.rows()); }
  bool symmetric() const noexcept { return symmetric_; }
  double operator()(int a, int b) const { return values_(a, b); }
  const Matrix& values() const noexcept { return values_; }

  friend bool operator==(const ProductionMatrix&, const ProductionMatrix&) = default;

 private:
  Matrix values_;
  bool symmetric_ = false;
};

class TypeDistribution {
 public:
  TypeDistribution() = default;
  /// Probabilities must be nonnegative and sum to one within 1e-12.
  explicit TypeDistribution(std::vector<double> probs);
  static TypeDistribution uniform(int k);

  int k() const noexcept { return static_cast<int>(probs_.size()); }
  double operator()(int a) const { return probs_[a]; }
  const std::vector<double>& probs() const noexcept { return probs_; }

  friend bool operator==(const TypeDistribution&, const TypeDistribution&) = default;

 private:
  std::vector<double> probs_;
};

class TypeVector {
 public:
  TypeVector() = default;
  /// Entries are 0-based type indices in [0, k).
  TypeVector(std::vector<int> types, int k);

  int n() const noexcept { return static_cast<int>(types_.size()); }
  int k() const noexcept { return k_; }
  int operator[](int i) const { return types_[i]; }
  const std::vector<int>& types() const noexcept { return types_; }
  /// Number of agents of each type.
  std::vector<int> counts() const;

  void set(int i, int type);

  friend bool operator==(const TypeVector&, const TypeVector&) = default;

 private:
  std::vector<int> types_;
  int k_ = 0;
};

struct Edge {
  int first = 0;   // always < second
  int second = 0;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// Simple undirected edge list over agents 0..n-1. Edges are stored with
/// first < second, without duplicates, in the order given.
class PairingPlan {
 public:
  PairingPlan() = default;
  PairingPlan(int n, std::vector<Edge> edges);

  int n() const noexcept { return n_; }
  int m() const noexcept { return static_cast<int>(edges_.size()); }
  const Edge& operator[](int j) const { return edges_[j]; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  std::vector<int> degrees() const;

  friend bool operator==(const PairingPlan&, const PairingPlan&) = default;

 private:
  int n_ = 0;
  std::vector<Edge> edges_;
};

class OutcomeVector {
 public:
  OutcomeVector() = default;
  explicit OutcomeVector(std::vector<std::uint8_t> values);

  int size() const noexcept { return static_cast<int>(values_.size()); }
  int operator[](int j) const { return values_[j]; }
  const std::vector<std::uint8_t>& values() const noexcept { return values_; }

  friend bool operator==(const OutcomeVector&, const OutcomeVector&) = default;

 private:
  std::vector<std::uint8_t> values_;
};

TypeVector sample_types(int n, const TypeDistribution& pi, std::uint64_t seed);

OutcomeVector sample_outcomes(const PairingPlan& plan, const TypeVector& z,
                              const ProductionMatrix& theta, std::uint64_t seed);

/// Expected outcome of an (a, b) pair; the success probability for Bernoulli outcomes.
double expected_weight(const ProductionMatrix& theta, int a, int b);

/// log pi(z) + log p(y | z, theta). Returns -inf when a term has zero probability
/// (pi(z_i) = 0, or theta at 0/1 contradicting an observed outcome).
double complete_loglik(const OutcomeVector& y, const PairingPlan& plan, const TypeVector& z,
                       const TypeDistribution& pi, const ProductionMatrix& theta);

/// log sum_z exp(complete_loglik) over all K^n assignments. Throws SizeError
/// when K^n exceeds 1e7.
double marginal_loglik_bruteforce(const OutcomeVector& y, const PairingPlan& plan,
                                  const TypeDistribution& pi, const ProductionMatrix& theta);

/// log p(y | theta) for a single outcome, without clamping.
double bernoulli_logpmf(int y, double theta);

/// Throws ValidationError unless y, plan, z and theta have consistent sizes.
void check_dimensions(const OutcomeVector& y, const PairingPlan& plan, int k);

}  // namespace hgt
