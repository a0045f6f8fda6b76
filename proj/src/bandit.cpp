#include "hgt/bandit.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <mutex>
#include <numeric>
#include <thread>

namespace hgt {

namespace {

enum Stream : std::uint64_t {
  kRealizeStream = 1,
  kMatchStream = 2,
  kOutcomeStream = 3,
  kFitStream = 4,
};

constexpr std::uint64_t kTruthStream = 0;
constexpr std::uint64_t kBatchStreamBase = 100;
constexpr std::uint64_t kTurnoverStreamBase = 200;

}  // namespace

void ScenarioConfig::validate() const {
  if (n < 2) throw ValidationError("scenario needs n >= 2");
  if (k < 1) throw ValidationError("scenario needs k >= 1");
  if (batches < 1) throw ValidationError("scenario needs at least one batch");
  if (replications < 1) throw ValidationError("scenario needs at least one replication");
  if (pi_true.k() != k || theta_true.k() != k)
    throw ValidationError("pi_true and theta_true must have K entries per axis");
  if (constraints.m != m_per_batch) throw ValidationError("constraints.m must equal m_per_batch");
  constraints.validate(n);
  if (turnover_xi < 0 || turnover_xi > n) throw ValidationError("turnover_xi must lie in [0, n]");
  em.validate();
  priors.validate();
  if (priors.k != k || priors.n() != n) throw ValidationError("prior state dimensions disagree with n, K");
}

std::pair<Matrix, TypeVector> realize_parameters(const PosteriorState& state, std::uint64_t seed) {
  state.validate();
  const int k = state.k;
  Matrix theta(k, k);
  for (int a = 0; a < k; ++a) {
    for (int b = 0; b < k; ++b) {
      const GaussianBelief& belief = state.belief(a, b);
      theta(a, b) = belief.informative() ? std::clamp(belief.mean, 0.0, 1.0) : 0.5;
    }
  }
  Rng rng(seed);
  std::vector<int> z(state.n());
  for (int i = 0; i < state.n(); ++i) z[i] = sample_categorical(state.omega.row(i), rng);
  return {std::move(theta), TypeVector(std::move(z), k)};
}

BatchPlan plan_batch(const PosteriorState& state, const MatchConstraints& constraints,
                     std::uint64_t seed) {
  auto [theta_tilde, z_tilde] = realize_parameters(state, derive_seed(seed, kRealizeStream));
  MatchResult match = solve_matching(theta_tilde, z_tilde, constraints, derive_seed(seed, kMatchStream));
  return BatchPlan{std::move(theta_tilde), std::move(z_tilde), std::move(match)};
}

std::pair<MatchResult, double> oracle_policy(const ProductionMatrix& theta_true,
                                             const TypeVector& z_true,
                                             const MatchConstraints& constraints) {
  MatchResult match = solve_matching(theta_true.values(), z_true, constraints, 0);
  const double value = match.objective;
  return {std::move(match), value};
}

double expected_output(const PairingPlan& plan, const ProductionMatrix& theta_true,
                       const TypeVector& z_true) {
  return plan_objective(theta_true.values(), plan, z_true);
}

double false_labeling_rate(const PosteriorState& state, const TypeVector& z_true) {
  const TypeVector z_hat = map_types(state);
  if (z_hat.n() != z_true.n() || z_hat.k() != z_true.k())
    throw ValidationError("state and truth disagree on dimensions");
  const int n = z_true.n();
  if (n == 0) return 0.0;
  std::vector<int> perm(z_true.k());
  std::iota(perm.begin(), perm.end(), 0);
  int best = n;
  do {
    int wrong = 0;
    for (int i = 0; i < n; ++i) wrong += perm[z_hat[i]] != z_true[i] ? 1 : 0;
    best = std::min(best, wrong);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(best) / n;
}

std::pair<PosteriorState, TypeVector> apply_turnover(const PosteriorState& state,
                                                     const TypeVector& z_true, int xi,
                                                     const TypeDistribution& pi_true,
                                                     std::uint64_t seed) {
  const int n = z_true.n();
  if (xi < 0 || xi > n) throw ValidationError("turnover count must lie in [0, n]");
  if (state.n() != n) throw ValidationError("state and truth disagree on n");
  PosteriorState next = state;
  TypeVector z = z_true;
  if (xi == 0) return {std::move(next), std::move(z)};

  Rng rng(seed);
  std::vector<int> agents(n);
  std::iota(agents.begin(), agents.end(), 0);
  for (int p = 0; p < xi; ++p) {
    const int q = p + static_cast<int>(rng() % static_cast<std::uint64_t>(n - p));
    std::swap(agents[p], agents[q]);
  }
  std::sort(agents.begin(), agents.begin() + xi);
  for (int p = 0; p < xi; ++p) {
    const int agent = agents[p];
    z.set(agent, sample_categorical(pi_true.probs(), rng));
    next = reset_agent(next, agent);
  }
  return {std::move(next), std::move(z)};
}

std::pair<BatchRecord, PosteriorState> run_batch(const PosteriorState& state,
                                                 const ScenarioConfig& config, const Truth& truth,
                                                 std::uint64_t seed, const Estimator& estimator,
                                                 std::optional<double> oracle_output) {
  BatchRecord record;
  record.batch_index = state.batch_index + 1;

  // The plan is built before any batch-t data exists.
  BatchPlan plan = plan_batch(state, config.constraints, seed);
  record.warnings = plan.match.warnings;
  record.theta_tilde = std::move(plan.theta_tilde);
  record.z_tilde = std::move(plan.z_tilde);
  record.plan = std::move(plan.match.plan);
  record.z_true = truth.z;

  record.outcomes = sample_outcomes(record.plan, truth.z, truth.theta, derive_seed(seed, kOutcomeStream));

  const std::uint64_t fit_seed = derive_seed(seed, kFitStream);
  record.estimate = estimator ? estimator(record.outcomes, record.plan, config.k, config.em, fit_seed)
                              : fit(record.outcomes, record.plan, config.k, config.em, fit_seed);

  auto [aligned, perm] = align_labels(record.estimate, state);
  record.permutation = std::move(perm);
  PosteriorState next = absorb_batch(state, aligned, &record.degenerate_rows);
  if (record.degenerate_rows > 0)
    record.warnings.push_back(std::to_string(record.degenerate_rows) +
                              " agent type updates were degenerate; prior kept");

  record.hgt_expected_output = expected_output(record.plan, truth.theta, truth.z);
  record.oracle_expected_output = oracle_output
                                      ? *oracle_output
                                      : oracle_policy(truth.theta, truth.z, config.constraints).second;
  record.regret_abs = record.oracle_expected_output - record.hgt_expected_output;
  record.regret_pct = record.oracle_expected_output > 0.0
                          ? 100.0 * record.regret_abs / record.oracle_expected_output
                          : 0.0;
  record.flr = false_labeling_rate(next, truth.z);
  record.posterior_after = next;
  return {std::move(record), std::move(next)};
}

TypeVector initial_truth(const ScenarioConfig& config, int replication) {
  const std::uint64_t seed = derive_seed(config.master_seed, static_cast<std::uint64_t>(replication));
  return sample_types(config.n, config.pi_true, derive_seed(seed, kTruthStream));
}

RunResult run_replication(const ScenarioConfig& config, int replication,
                          const Estimator& estimator) {
  const auto start = std::chrono::steady_clock::now();
  RunResult result;
  result.replication = replication;
  result.seed = derive_seed(config.master_seed, static_cast<std::uint64_t>(replication));
  try {
    config.validate();
    Truth truth{config.theta_true, initial_truth(config, replication)};
    result.z_initial = truth.z;
    PosteriorState state = config.priors;
    state.batch_index = 0;
    std::optional<double> oracle;
    for (int t = 1; t <= config.batches; ++t) {
      if (!oracle) oracle = oracle_policy(truth.theta, truth.z, config.constraints).second;
      auto [record, next] = run_batch(state, config, truth,
                                      derive_seed(result.seed, kBatchStreamBase + t), estimator,
                                      oracle);
      result.batches.push_back(std::move(record));
      state = std::move(next);
      if (t < config.batches && config.turnover_xi > 0) {
        auto [after, z] = apply_turnover(state, truth.z, config.turnover_xi, config.pi_true,
                                         derive_seed(result.seed, kTurnoverStreamBase + t));
        state = std::move(after);
        truth.z = std::move(z);
        oracle.reset();
      }
    }
    result.final_posterior = std::move(state);
  } catch (const InfeasibleError& e) {
    result.failed = true;
    result.error_kind = "infeasible";
    result.error = e.what();
  } catch (const NumericalError& e) {
    result.failed = true;
    result.error_kind = "numerical";
    result.error = e.what();
  } catch (const EstimationError& e) {
    result.failed = true;
    result.error_kind = "estimation";
    result.error = e.what();
  } catch (const ValidationError& e) {
    result.failed = true;
    result.error_kind = "validation";
    result.error = e.what();
  } catch (const std::exception& e) {
    result.failed = true;
    result.error_kind = "other";
    result.error = e.what();
  }
  result.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

std::vector<RunResult> run_scenario(const ScenarioConfig& config, int jobs, std::vector<int> order,
                                    const RunCallback& on_complete) {
  config.validate();
  const int reps = config.replications;
  if (order.empty()) {
    order.resize(reps);
    std::iota(order.begin(), order.end(), 0);
  } else {
    std::vector<int> sorted = order;
    std::sort(sorted.begin(), sorted.end());
    for (int r = 0; r < reps; ++r)
      if (static_cast<int>(sorted.size()) != reps || sorted[r] != r)
        throw ValidationError("replication order must be a permutation of 0..replications-1");
  }
  std::vector<RunResult> results(reps);
  std::atomic<int> next{0};
  std::mutex callback_mutex;
  auto worker = [&] {
    for (int slot = next++; slot < reps; slot = next++) {
      const int rep = order[slot];
      results[rep] = run_replication(config, rep);
      if (on_complete) {
        std::lock_guard lock(callback_mutex);
        on_complete(results[rep]);
      }
    }
  };
  const int threads = std::clamp(jobs, 1, reps);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  return results;
}

}  // namespace hgt
