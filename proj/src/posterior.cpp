#include "hgt/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace hgt {

GaussianBelief GaussianBelief::from_variance(double mean, double variance) {
  if (!(variance > 0.0)) throw ValidationError("belief variance must be > 0");
  if (std::isinf(variance)) return {mean, 0.0};
  return {mean, 1.0 / variance};
}

PosteriorState PosteriorState::uninformative(int n, int k) {
  if (k < 1 || n < 0) throw ValidationError("invalid posterior dimensions");
  PosteriorState s;
  s.k = k;
  s.theta.assign(static_cast<std::size_t>(k) * k, GaussianBelief::uninformative());
  s.omega = Matrix(n, k, 1.0 / k);
  return s;
}

void PosteriorState::validate() const {
  if (k < 1) throw ValidationError("posterior k must be >= 1");
  if (theta.size() != static_cast<std::size_t>(k) * k)
    throw ValidationError("posterior theta beliefs must be K x K");
  if (omega.cols() != static_cast<std::size_t>(k))
    throw ValidationError("posterior type beliefs must have K columns");
  for (const auto& b : theta)
    if (!(b.precision >= 0.0) || !std::isfinite(b.mean))
      throw ValidationError("invalid Gaussian belief");
  for (std::size_t i = 0; i < omega.rows(); ++i) {
    double sum = 0.0;
    for (double v : omega.row(i)) {
      if (!(v >= 0.0)) throw ValidationError("type belief has a negative or NaN entry");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-10)
      throw ValidationError("type belief row " + std::to_string(i) + " does not sum to 1");
  }
}

LabelPermutation LabelPermutation::identity(int k) {
  LabelPermutation p;
  p.perm.resize(k);
  std::iota(p.perm.begin(), p.perm.end(), 0);
  return p;
}

bool LabelPermutation::is_identity() const {
  for (std::size_t a = 0; a < perm.size(); ++a)
    if (perm[a] != static_cast<int>(a)) return false;
  return true;
}

GaussianBelief update_gaussian(const GaussianBelief& prior, double signal_mean, double signal_se) {
  if (std::isinf(signal_se)) return prior;
  if (!(signal_se > 0.0)) throw ValidationError("signal standard error must be > 0 or infinite");
  const double signal_precision = 1.0 / (signal_se * signal_se);
  if (!prior.informative()) return {signal_mean, signal_precision};
  const double precision = prior.precision + signal_precision;
  const double mean = (prior.mean * prior.precision + signal_mean * signal_precision) / precision;
  return {mean, precision};
}

CategoricalUpdate update_categorical(std::span<const double> prior_row,
                                     std::span<const double> signal_row) {
  if (prior_row.size() != signal_row.size())
    throw ValidationError("categorical rows differ in length");
  CategoricalUpdate out;
  out.row.resize(prior_row.size());
  double norm = 0.0;
  for (std::size_t a = 0; a < prior_row.size(); ++a) {
    out.row[a] = prior_row[a] * signal_row[a];
    norm += out.row[a];
  }
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    out.row.assign(prior_row.begin(), prior_row.end());
    out.degenerate = true;
    return out;
  }
  for (double& v : out.row) v /= norm;
  return out;
}

BatchEstimate relabel(const BatchEstimate& estimate, const LabelPermutation& perm) {
  const int k = estimate.theta_hat.k();
  if (static_cast<int>(perm.perm.size()) != k) throw ValidationError("permutation size mismatch");
  const auto& s = perm.perm;

  Matrix theta(k, k), se(k, k), counts(k, k);
  for (int a = 0; a < k; ++a) {
    for (int b = 0; b < k; ++b) {
      theta(a, b) = estimate.theta_hat(s[a], s[b]);
      se(a, b) = estimate.se(s[a], s[b]);
      counts(a, b) = estimate.effective_counts(s[a], s[b]);
    }
  }
  std::vector<double> pi(k);
  for (int a = 0; a < k; ++a) pi[a] = estimate.pi_hat(s[a]);

  const int n = estimate.q_hat.n();
  Matrix q(n, k);
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < k; ++a) q(i, a) = estimate.q_hat(i, s[a]);

  BatchEstimate out = estimate;
  out.theta_hat = ProductionMatrix(std::move(theta), estimate.theta_hat.symmetric());
  out.se = std::move(se);
  out.effective_counts = std::move(counts);
  out.pi_hat = TypeDistribution(std::move(pi));
  out.q_hat = VariationalPosterior(std::move(q));
  return out;
}

std::pair<BatchEstimate, LabelPermutation> align_labels(const BatchEstimate& estimate,
                                                        const PosteriorState& state) {
  const int k = estimate.theta_hat.k();
  if (k > 8) throw ValidationError("label alignment enumerates permutations; K must be <= 8");
  if (state.k != k || state.n() != estimate.q_hat.n())
    throw ValidationError("estimate and posterior state disagree on dimensions");

  auto distance = [&](const std::vector<int>& s) {
    double d = 0.0;
    for (int a = 0; a < k; ++a) {
      for (int b = 0; b < k; ++b) {
        const GaussianBelief& prior = state.belief(a, b);
        if (!prior.informative() || std::isinf(estimate.se(s[a], s[b]))) continue;
        const double diff = estimate.theta_hat(s[a], s[b]) - prior.mean;
        d += prior.precision * diff * diff;
      }
    }
    return d;
  };
  auto agreement = [&](const std::vector<int>& s) {
    double g = 0.0;
    for (int i = 0; i < state.n(); ++i)
      for (int a = 0; a < k; ++a) g += state.omega(i, a) * estimate.q_hat(i, s[a]);
    return g;
  };
  auto tied = [](double x, double y) { return std::abs(x - y) <= 1e-9 * (1.0 + std::abs(y)); };

  std::vector<int> s(k);
  std::iota(s.begin(), s.end(), 0);
  std::vector<int> best = s;
  double best_distance = distance(s);
  double best_agreement = agreement(s);
  while (std::next_permutation(s.begin(), s.end())) {
    const double d = distance(s);
    if (tied(d, best_distance)) {
      const double g = agreement(s);
      if (g > best_agreement && !tied(g, best_agreement)) {
        best = s;
        best_distance = d;
        best_agreement = g;
      }
    } else if (d < best_distance) {
      best = s;
      best_distance = d;
      best_agreement = agreement(s);
    }
  }
  LabelPermutation perm{best};
  return {relabel(estimate, perm), perm};
}

TypeVector map_types(const PosteriorState& state) {
  const int n = state.n();
  std::vector<int> z(n);
  for (int i = 0; i < n; ++i) {
    const auto row = state.omega.row(i);
    z[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return TypeVector(std::move(z), state.k);
}

PosteriorState reset_agent(const PosteriorState& state, int agent) {
  if (agent < 0 || agent >= state.n()) throw std::out_of_range("agent index out of range");
  PosteriorState out = state;
  for (double& v : out.omega.row(agent)) v = 1.0 / state.k;
  return out;
}

PosteriorState absorb_batch(const PosteriorState& state, const BatchEstimate& aligned,
                            int* degenerate_rows) {
  const int k = state.k;
  if (aligned.theta_hat.k() != k || aligned.q_hat.n() != state.n())
    throw ValidationError("estimate and posterior state disagree on dimensions");
  PosteriorState out = state;
  for (int a = 0; a < k; ++a)
    for (int b = 0; b < k; ++b)
      out.belief(a, b) = update_gaussian(state.belief(a, b), aligned.theta_hat(a, b), aligned.se(a, b));
  int degenerate = 0;
  for (int i = 0; i < state.n(); ++i) {
    CategoricalUpdate u = update_categorical(state.omega.row(i), aligned.q_hat.row(i));
    if (u.degenerate) ++degenerate;
    std::copy(u.row.begin(), u.row.end(), out.omega.row(i).begin());
  }
  out.batch_index = state.batch_index + 1;
  if (degenerate_rows) *degenerate_rows = degenerate;
  return out;
}

}  // namespace hgt
