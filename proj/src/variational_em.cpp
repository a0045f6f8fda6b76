#include "hgt/variational_em.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>

namespace hgt {

namespace {

// Clamped log-likelihood tables: table[y](a, b) = log p(y | theta_ab).
struct LogLikTable {
  Matrix success;
  Matrix failure;

  explicit LogLikTable(const ProductionMatrix& theta) {
    const int k = theta.k();
    success = Matrix(k, k);
    failure = Matrix(k, k);
    for (int a = 0; a < k; ++a) {
      for (int b = 0; b < k; ++b) {
        const double t = std::clamp(theta(a, b), kThetaClamp, 1.0 - kThetaClamp);
        success(a, b) = std::log(t);
        failure(a, b) = std::log1p(-t);
      }
    }
  }
  const Matrix& operator[](int y) const { return y == 1 ? success : failure; }
};

struct Incidence {
  int edge;
  int partner;
  bool first_slot;  // agent is i1(j)
};

std::vector<std::vector<Incidence>> incidence_lists(const PairingPlan& plan) {
  std::vector<std::vector<Incidence>> adj(plan.n());
  for (int j = 0; j < plan.m(); ++j) {
    adj[plan[j].first].push_back({j, plan[j].second, true});
    adj[plan[j].second].push_back({j, plan[j].first, false});
  }
  return adj;
}

void check_inputs(const OutcomeVector& y, const PairingPlan& plan, const TypeDistribution& pi,
                  const ProductionMatrix& theta, const VariationalPosterior& q) {
  check_dimensions(y, plan, theta.k());
  if (pi.k() != theta.k() || q.k() != theta.k() || q.n() != plan.n())
    throw ValidationError("inconsistent dimensions between pi, theta, q and plan");
}

}  // namespace

VariationalPosterior::VariationalPosterior(Matrix q) : q_(std::move(q)) {
  for (std::size_t i = 0; i < q_.rows(); ++i) {
    double sum = 0.0;
    for (double v : q_.row(i)) {
      if (!(v >= 0.0)) throw ValidationError("variational row has a negative or NaN entry");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-10)
      throw ValidationError("variational row " + std::to_string(i) + " does not sum to 1");
  }
}

VariationalPosterior VariationalPosterior::indicators(const TypeVector& z) {
  Matrix q(z.n(), z.k(), 0.0);
  for (int i = 0; i < z.n(); ++i) q(i, z[i]) = 1.0;
  return VariationalPosterior(std::move(q));
}

VariationalPosterior VariationalPosterior::uniform(int n, int k) {
  return VariationalPosterior(Matrix(n, k, 1.0 / k));
}

void EmSettings::validate() const {
  if (!(tol_elbo > 0.0) || !(tol_q > 0.0)) throw ValidationError("EM tolerances must be > 0");
  if (restarts < 1) throw ValidationError("restarts must be >= 1");
  if (max_outer_iters < 1 || max_estep_sweeps < 1)
    throw ValidationError("iteration limits must be >= 1");
  if (!(min_effective_count >= 0.0)) throw ValidationError("min_effective_count must be >= 0");
}

double elbo(const OutcomeVector& y, const PairingPlan& plan, const TypeDistribution& pi,
            const ProductionMatrix& theta, const VariationalPosterior& q) {
  check_inputs(y, plan, pi, theta, q);
  const int k = theta.k();
  double total = 0.0;
  for (int i = 0; i < q.n(); ++i) {
    for (int a = 0; a < k; ++a) {
      const double qa = q(i, a);
      if (qa <= 0.0) continue;
      if (pi(a) <= 0.0) return kNegInf;
      total += qa * (std::log(pi(a)) - std::log(qa));
    }
  }
  const LogLikTable table(theta);
  for (int j = 0; j < plan.m(); ++j) {
    const Matrix& ll = table[y[j]];
    const auto q1 = q.row(plan[j].first);
    const auto q2 = q.row(plan[j].second);
    for (int a = 0; a < k; ++a) {
      if (q1[a] == 0.0) continue;
      double inner = 0.0;
      for (int b = 0; b < k; ++b) inner += q2[b] * ll(a, b);
      total += q1[a] * inner;
    }
  }
  return total;
}

EStepResult e_step(const OutcomeVector& y, const PairingPlan& plan, const TypeDistribution& pi,
                   const ProductionMatrix& theta, const VariationalPosterior& q_init,
                   const EmSettings& settings, bool trace_elbo, std::span<const int> order) {
  check_inputs(y, plan, pi, theta, q_init);
  const int n = plan.n();
  const int k = theta.k();
  const LogLikTable table(theta);
  const auto adj = incidence_lists(plan);

  std::vector<int> sweep_order;
  if (order.empty()) {
    sweep_order.resize(n);
    for (int i = 0; i < n; ++i) sweep_order[i] = i;
  } else {
    if (static_cast<int>(order.size()) != n) throw ValidationError("sweep order has wrong length");
    sweep_order.assign(order.begin(), order.end());
  }

  std::vector<double> log_pi(k);
  for (int a = 0; a < k; ++a) log_pi[a] = pi(a) > 0.0 ? std::log(pi(a)) : kNegInf;

  Matrix q = q_init.matrix();
  std::vector<double> logits(k);
  EStepResult result;
  for (int sweep = 0; sweep < settings.max_estep_sweeps; ++sweep) {
    double max_change = 0.0;
    for (int i : sweep_order) {
      std::copy(log_pi.begin(), log_pi.end(), logits.begin());
      for (const Incidence& inc : adj[i]) {
        const Matrix& ll = table[y[inc.edge]];
        const auto qp = q.row(inc.partner);
        for (int a = 0; a < k; ++a) {
          double s = 0.0;
          if (inc.first_slot) {
            for (int b = 0; b < k; ++b) s += qp[b] * ll(a, b);
          } else {
            for (int b = 0; b < k; ++b) s += qp[b] * ll(b, a);
          }
          logits[a] += s;
        }
      }
      const double hi = *std::max_element(logits.begin(), logits.end());
      if (!std::isfinite(hi)) {
        std::ostringstream payload;
        payload << "agent=" << i << " sweep=" << sweep << " logits=[";
        for (int a = 0; a < k; ++a) payload << (a ? "," : "") << logits[a];
        payload << "]";
        throw NumericalError("non-finite E-step logits", payload.str());
      }
      double norm = 0.0;
      for (int a = 0; a < k; ++a) {
        logits[a] = std::exp(logits[a] - hi);
        norm += logits[a];
      }
      auto row = q.row(i);
      for (int a = 0; a < k; ++a) {
        const double v = logits[a] / norm;
        max_change = std::max(max_change, std::abs(v - row[a]));
        row[a] = v;
      }
    }
    result.sweeps = sweep + 1;
    if (trace_elbo) result.elbo_trace.push_back(elbo(y, plan, pi, theta, VariationalPosterior(q)));
    if (max_change < settings.tol_q) {
      result.converged = true;
      break;
    }
  }
  result.q = VariationalPosterior(std::move(q));
  return result;
}

Matrix effective_counts(const PairingPlan& plan, const VariationalPosterior& q, bool symmetric) {
  const int k = q.k();
  Matrix counts(k, k, 0.0);
  for (int j = 0; j < plan.m(); ++j) {
    const auto q1 = q.row(plan[j].first);
    const auto q2 = q.row(plan[j].second);
    for (int a = 0; a < k; ++a)
      for (int b = 0; b < k; ++b) counts(a, b) += q1[a] * q2[b];
  }
  if (symmetric) {
    for (int a = 0; a < k; ++a) {
      for (int b = a + 1; b < k; ++b) {
        const double pooled = counts(a, b) + counts(b, a);
        counts(a, b) = pooled;
        counts(b, a) = pooled;
      }
    }
  }
  return counts;
}

MStepResult m_step(const OutcomeVector& y, const PairingPlan& plan, const VariationalPosterior& q,
                   bool symmetric, double min_effective_count) {
  check_dimensions(y, plan, q.k());
  if (q.n() != plan.n()) throw ValidationError("q and plan disagree on n");
  const int n = q.n();
  const int k = q.k();

  std::vector<double> pi(k, 0.0);
  if (n > 0) {
    for (int i = 0; i < n; ++i)
      for (int a = 0; a < k; ++a) pi[a] += q(i, a);
    double sum = 0.0;
    for (double& p : pi) {
      p /= n;
      sum += p;
    }
    for (double& p : pi) p /= sum;
  } else {
    pi.assign(k, 1.0 / k);
  }

  Matrix num(k, k, 0.0);
  Matrix den(k, k, 0.0);
  for (int j = 0; j < plan.m(); ++j) {
    const auto q1 = q.row(plan[j].first);
    const auto q2 = q.row(plan[j].second);
    for (int a = 0; a < k; ++a) {
      for (int b = 0; b < k; ++b) {
        const double w = q1[a] * q2[b];
        den(a, b) += w;
        if (y[j] == 1) num(a, b) += w;
      }
    }
  }
  if (symmetric) {
    for (int a = 0; a < k; ++a) {
      for (int b = a + 1; b < k; ++b) {
        num(a, b) = num(b, a) = num(a, b) + num(b, a);
        den(a, b) = den(b, a) = den(a, b) + den(b, a);
      }
    }
  }

  Matrix theta(k, k, 0.5);
  std::vector<std::vector<bool>> flagged(k, std::vector<bool>(k, false));
  for (int a = 0; a < k; ++a) {
    for (int b = 0; b < k; ++b) {
      if (den(a, b) <= 0.0 || den(a, b) < min_effective_count) {
        flagged[a][b] = true;
        continue;
      }
      theta(a, b) = std::clamp(num(a, b) / den(a, b), 0.0, 1.0);
    }
  }
  return MStepResult{TypeDistribution(std::move(pi)), ProductionMatrix(std::move(theta), symmetric),
                     std::move(den), std::move(flagged)};
}

Matrix standard_errors(const ProductionMatrix& theta_hat, const VariationalPosterior& q_hat,
                       const PairingPlan& plan, double min_effective_count) {
  const int k = theta_hat.k();
  if (q_hat.k() != k || q_hat.n() != plan.n()) throw ValidationError("inconsistent dimensions");
  const Matrix counts = effective_counts(plan, q_hat, theta_hat.symmetric());
  Matrix se(k, k, kInf);
  for (int a = 0; a < k; ++a) {
    for (int b = 0; b < k; ++b) {
      const double t = theta_hat(a, b);
      const double m = counts(a, b);
      if (m <= 0.0 || m < min_effective_count || t <= 0.0 || t >= 1.0) continue;
      se(a, b) = std::sqrt(t * (1.0 - t) / m);
    }
  }
  return se;
}

namespace {

struct ChainOutcome {
  VariationalPosterior q;
  double elbo = kNegInf;
  bool converged = false;
  int iterations = 0;
  double max_drop = 0.0;
};

// Flagged cells stay at their ratio value inside the chain (threshold 0) so
// the M-step remains an exact maximizer and the ELBO never decreases.
ChainOutcome run_chain(const OutcomeVector& y, const PairingPlan& plan, VariationalPosterior q,
                       const EmSettings& settings) {
  ChainOutcome out;
  MStepResult params = m_step(y, plan, q, settings.symmetric, 0.0);
  double current = elbo(y, plan, params.pi, params.theta, q);
  auto record = [&](double next) {
    out.max_drop = std::max(out.max_drop, current - next);
    current = next;
  };
  for (int it = 0; it < settings.max_outer_iters; ++it) {
    const double start = current;
    q = e_step(y, plan, params.pi, params.theta, q, settings).q;
    record(elbo(y, plan, params.pi, params.theta, q));
    params = m_step(y, plan, q, settings.symmetric, 0.0);
    record(elbo(y, plan, params.pi, params.theta, q));
    out.iterations = it + 1;
    if (current - start < settings.tol_elbo) {
      out.converged = true;
      break;
    }
  }
  out.q = std::move(q);
  out.elbo = current;
  return out;
}

BatchEstimate finalize(const OutcomeVector& y, const PairingPlan& plan, const ChainOutcome& chain,
                       const EmSettings& settings) {
  MStepResult params = m_step(y, plan, chain.q, settings.symmetric, settings.min_effective_count);
  BatchEstimate est;
  est.se = standard_errors(params.theta, chain.q, plan, settings.min_effective_count);
  est.effective_counts = std::move(params.effective_counts);
  est.elbo = elbo(y, plan, params.pi, params.theta, chain.q);
  est.theta_hat = std::move(params.theta);
  est.pi_hat = std::move(params.pi);
  est.q_hat = chain.q;
  est.converged = chain.converged;
  est.iterations = chain.iterations;
  return est;
}

}  // namespace

BatchEstimate fit_from(const OutcomeVector& y, const PairingPlan& plan,
                       const VariationalPosterior& q_init, const EmSettings& settings) {
  settings.validate();
  check_dimensions(y, plan, q_init.k());
  ChainOutcome chain = run_chain(y, plan, q_init, settings);
  BatchEstimate est = finalize(y, plan, chain, settings);
  est.restarts_used = 1;
  est.max_elbo_drop = chain.max_drop;
  return est;
}

BatchEstimate fit(const OutcomeVector& y, const PairingPlan& plan, int k,
                  const EmSettings& settings, std::uint64_t seed) {
  settings.validate();
  if (k < 1) throw ValidationError("k must be >= 1");
  check_dimensions(y, plan, k);
  const int n = plan.n();

  std::optional<ChainOutcome> best;
  double max_drop = 0.0;
  int attempted = 0;
  std::string last_error;
  for (int r = 0; r < settings.restarts; ++r) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
    Matrix q0(n, k);
    for (int i = 0; i < n; ++i) {
      double sum = 0.0;
      for (int a = 0; a < k; ++a) {
        // Strictly positive so no row starts on the simplex boundary.
        q0(i, a) = uniform01(rng) + 1e-12;
        sum += q0(i, a);
      }
      for (int a = 0; a < k; ++a) q0(i, a) /= sum;
    }
    ++attempted;
    try {
      ChainOutcome chain = run_chain(y, plan, VariationalPosterior(std::move(q0)), settings);
      max_drop = std::max(max_drop, chain.max_drop);
      if (!best || chain.elbo > best->elbo) best = std::move(chain);
    } catch (const NumericalError& e) {
      last_error = std::string(e.what()) + ": " + e.payload();
    }
  }
  if (!best) throw EstimationError("all EM chains failed; last error: " + last_error);

  BatchEstimate est = finalize(y, plan, *best, settings);
  est.restarts_used = attempted;
  est.max_elbo_drop = max_drop;
  return est;
}

}  // namespace hgt
