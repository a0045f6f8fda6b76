#pragma once

// Cross-batch aggregation of batch signals: Gaussian updating of each theta
// cell, categorical updating of each agent's type belief, label alignment
// and MAP classification.

#include <span>
#include <utility>
#include <vector>

#include "hgt/common.hpp"
#include "hgt/variational_em.hpp"
#include "hgt/wsbm.hpp"

namespace hgt {

/// Normal belief stored by precision; precision 0 is the uninformative
/// (infinite-variance) belief.
struct GaussianBelief {
  double mean = 0.0;
  double precision = 0.0;

  static GaussianBelief uninformative() { return {}; }
  /// Throws ValidationError unless variance > 0.
  static GaussianBelief from_variance(double mean, double variance);

  bool informative() const noexcept { return precision > 0.0; }
  double variance() const noexcept { return precision > 0.0 ? 1.0 / precision : kInf; }

  friend bool operator==(const GaussianBelief&, const GaussianBelief&) = default;
};

struct PosteriorState {
  int k = 0;
  int batch_index = 0;
  std::vector<GaussianBelief> theta;  // row-major K x K
  Matrix omega;                       // n x K

  /// Uninformative theta beliefs and uniform type beliefs.
  static PosteriorState uninformative(int n, int k);

  int n() const noexcept { return static_cast<int>(omega.rows()); }
  const GaussianBelief& belief(int a, int b) const { return theta[a * k + b]; }
  GaussianBelief& belief(int a, int b) { return theta[a * k + b]; }

  /// Throws ValidationError if shapes disagree or an omega row is not a distribution.
  void validate() const;

  friend bool operator==(const PosteriorState&, const PosteriorState&) = default;
};

/// perm[a] is the estimate label that becomes label a.
struct LabelPermutation {
  std::vector<int> perm;

  static LabelPermutation identity(int k);
  bool is_identity() const;
  friend bool operator==(const LabelPermutation&, const LabelPermutation&) = default;
};

/// Precision-weighted combination of prior and signal. An infinite signal_se
/// returns the prior unchanged.
GaussianBelief update_gaussian(const GaussianBelief& prior, double signal_mean, double signal_se);

struct CategoricalUpdate {
  std::vector<double> row;
  bool degenerate = false;  // product was identically zero; row is the prior
};

/// Elementwise product of prior and signal, renormalized.
CategoricalUpdate update_categorical(std::span<const double> prior_row,
                                     std::span<const double> signal_row);

/// Applies perm jointly to theta_hat, pi_hat, se, effective counts and every q row.
BatchEstimate relabel(const BatchEstimate& estimate, const LabelPermutation& perm);

/// Picks the relabeling of `estimate` closest to the running posterior:
/// minimize sum_ab w_ab (theta_hat[s(a)][s(b)] - mu_ab)^2 with w_ab the prior
/// precision (cells whose estimate is flagged carry no weight); ties go to the
/// larger sum_i sum_a omega_i(a) q_i(s(a)), then to the lexicographically
/// smallest permutation. Requires K <= 8.
std::pair<BatchEstimate, LabelPermutation> align_labels(const BatchEstimate& estimate,
                                                        const PosteriorState& state);

/// Row-wise argmax of omega; ties go to the lowest type index.
TypeVector map_types(const PosteriorState& state);

PosteriorState reset_agent(const PosteriorState& state, int agent);

/// Folds an aligned batch estimate into the state: one Gaussian update per
/// finite-SE cell and one categorical update per agent. `degenerate_rows`
/// (optional) receives the number of agents whose update was degenerate.
PosteriorState absorb_batch(const PosteriorState& state, const BatchEstimate& aligned,
                            int* degenerate_rows = nullptr);

}  // namespace hgt
