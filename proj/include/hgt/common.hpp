#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hgt {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Input violates a documented invariant.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Instance too large for an enumeration oracle.
class SizeError : public std::length_error {
 public:
  using std::length_error::length_error;
};

/// Non-finite value where a finite one is required.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, std::string payload)
      : std::runtime_error(what), payload_(std::move(payload)) {}
  const std::string& payload() const noexcept { return payload_; }

 private:
  std::string payload_;
};

/// Every estimation chain failed.
class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Constraint system has no solution. `bound` names the violated bound.
class InfeasibleError : public std::runtime_error {
 public:
  InfeasibleError(const std::string& what, std::string bound)
      : std::runtime_error(what), bound_(std::move(bound)) {}
  const std::string& bound() const noexcept { return bound_; }

 private:
  std::string bound_;
};

/// Dense row-major matrix of doubles. Small (K x K, n x K) use only.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  static Matrix from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  const std::vector<double>& data() const noexcept { return data_; }
  std::vector<std::vector<double>> to_rows() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

using Rng = std::mt19937_64;

/// Derives an independent substream seed from a parent seed and a stream id
/// (splitmix64 finalizer over the pair).
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t stream);

/// Uniform draw in [0, 1).
double uniform01(Rng& rng);

/// Draws an index from a probability row by inverse CDF.
int sample_categorical(std::span<const double> probs, Rng& rng);

/// log(exp(a) + exp(b)) with -inf handled.
double log_add(double a, double b);

}  // namespace hgt
