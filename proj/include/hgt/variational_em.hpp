#pragma once

// Batch-level mean-field variational EM for the Bernoulli WSBM.
//
// The ELBO maximized here is
//   sum_i sum_a q_i(a) (log pi(a) - log q_i(a))
//     + sum_j sum_{a,b} q_{i1(j)}(a) q_{i2(j)}(b) log p(y_j | theta_ab)
// with 0 log 0 = 0 and theta clamped to [1e-6, 1 - 1e-6] inside the logs.

#include <cstdint>
#include <span>
#include <vector>

#include "hgt/common.hpp"
#include "hgt/wsbm.hpp"

namespace hgt {

inline constexpr double kThetaClamp = 1e-6;

/// n x K matrix; row i is agent i's categorical approximation over types.
class VariationalPosterior {
 public:
  VariationalPosterior() = default;
  /// Rows must be nonnegative and sum to one within 1e-10.
  explicit VariationalPosterior(Matrix q);
  static VariationalPosterior indicators(const TypeVector& z);
  static VariationalPosterior uniform(int n, int k);

  int n() const noexcept { return static_cast<int>(q_.rows()); }
  int k() const noexcept { return static_cast<int>(q_.cols()); }
  double operator()(int i, int a) const { return q_(i, a); }
  std::span<const double> row(int i) const { return q_.row(i); }
  const Matrix& matrix() const noexcept { return q_; }

  friend bool operator==(const VariationalPosterior&, const VariationalPosterior&) = default;

 private:
  Matrix q_;
};

struct EmSettings {
  int max_outer_iters = 500;
  int max_estep_sweeps = 25;
  double tol_elbo = 1e-7;
  double tol_q = 1e-7;
  int restarts = 10;
  double min_effective_count = 1.0;
  bool symmetric = true;

  /// Throws ValidationError on non-positive tolerances or restarts < 1.
  void validate() const;
};

struct BatchEstimate {
  ProductionMatrix theta_hat;
  TypeDistribution pi_hat;
  VariationalPosterior q_hat;
  Matrix se;                // +inf marks an uninformative (flagged) cell
  Matrix effective_counts;  // pooled over (a,b)/(b,a) when symmetric
  double elbo = kNegInf;
  bool converged = false;
  int restarts_used = 0;
  int iterations = 0;           // outer iterations of the selected chain
  double max_elbo_drop = 0.0;   // largest per-step ELBO decrease over all chains
};

double elbo(const OutcomeVector& y, const PairingPlan& plan, const TypeDistribution& pi,
            const ProductionMatrix& theta, const VariationalPosterior& q);

struct EStepResult {
  VariationalPosterior q;
  int sweeps = 0;
  bool converged = false;
  std::vector<double> elbo_trace;  // one value per sweep, when requested
};

/// Mean-field coordinate ascent on q at fixed (pi, theta). Each agent row is
/// set to softmax(log pi(a) + sum over incident edges of the partner-averaged
/// log-likelihood), sweeping agents in `order` (default 0..n-1) until the
/// largest row change drops below tol_q or max_estep_sweeps is reached.
EStepResult e_step(const OutcomeVector& y, const PairingPlan& plan, const TypeDistribution& pi,
                   const ProductionMatrix& theta, const VariationalPosterior& q_init,
                   const EmSettings& settings, bool trace_elbo = false,
                   std::span<const int> order = {});

struct MStepResult {
  TypeDistribution pi;
  ProductionMatrix theta;
  Matrix effective_counts;
  std::vector<std::vector<bool>> flagged;
};

/// Closed-form maximizer of the ELBO over (pi, theta) at fixed q. Cells whose
/// effective count is below `min_effective_count` are set to 0.5 and flagged.
MStepResult m_step(const OutcomeVector& y, const PairingPlan& plan, const VariationalPosterior& q,
                   bool symmetric, double min_effective_count = 1.0);

/// q-weighted edge count per type cell; (a,b) and (b,a) pooled when symmetric.
Matrix effective_counts(const PairingPlan& plan, const VariationalPosterior& q, bool symmetric);

/// Plug-in binomial standard errors sqrt(theta (1 - theta) / m_ab) using the
/// effective pair count m_ab. +inf when m_ab < min_effective_count or theta
/// sits on {0, 1}. Pooling follows theta_hat.symmetric().
Matrix standard_errors(const ProductionMatrix& theta_hat, const VariationalPosterior& q_hat,
                       const PairingPlan& plan, double min_effective_count);

/// Full estimation: `restarts` EM chains from random q, best final ELBO wins
/// (ties go to the lowest chain index).
BatchEstimate fit(const OutcomeVector& y, const PairingPlan& plan, int k,
                  const EmSettings& settings, std::uint64_t seed);

/// One EM chain from a given q.
BatchEstimate fit_from(const OutcomeVector& y, const PairingPlan& plan,
                       const VariationalPosterior& q_init, const EmSettings& settings);

}  // namespace hgt
