#pragma once

// Hybrid greedy-Thompson network formation over T batches: posterior means
// for theta (greedy), categorical draws for agent types (Thompson), exact
// constrained matching, batch variational EM and Bayesian aggregation.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hgt/matcher.hpp"
#include "hgt/posterior.hpp"
#include "hgt/variational_em.hpp"
#include "hgt/wsbm.hpp"

namespace hgt {

struct ScenarioConfig {
  std::string name = "scenario";
  int n = 0;
  int k = 0;
  int batches = 0;
  int m_per_batch = 0;
  TypeDistribution pi_true;
  ProductionMatrix theta_true;
  MatchConstraints constraints;  // constraints.m mirrors m_per_batch
  int turnover_xi = 0;
  EmSettings em;
  PosteriorState priors;
  int replications = 1;
  std::uint64_t master_seed = 0;

  void validate() const;
};

struct Truth {
  ProductionMatrix theta;
  TypeVector z;
};

struct BatchRecord {
  int batch_index = 0;  // 1-based
  Matrix theta_tilde;
  TypeVector z_tilde;
  TypeVector z_true;
  PairingPlan plan;
  OutcomeVector outcomes;
  BatchEstimate estimate;  // as returned by the estimator, before alignment
  LabelPermutation permutation;
  PosteriorState posterior_after;
  double hgt_expected_output = 0.0;
  double oracle_expected_output = 0.0;
  double regret_abs = 0.0;
  double regret_pct = 0.0;
  double flr = 0.0;
  int degenerate_rows = 0;
  std::vector<std::string> warnings;
};

struct RunResult {
  int replication = 0;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error_kind;  // "infeasible", "numerical", "estimation", "validation" or "other"
  std::string error;
  TypeVector z_initial;
  std::vector<BatchRecord> batches;
  PosteriorState final_posterior;
  double elapsed_seconds = 0.0;  // not serialized
};

using Estimator = std::function<BatchEstimate(const OutcomeVector&, const PairingPlan&, int,
                                              const EmSettings&, std::uint64_t)>;

/// theta_tilde = posterior means clamped to [0,1] (0.5 for uninformative
/// cells); z_tilde drawn from each agent's categorical belief.
std::pair<Matrix, TypeVector> realize_parameters(const PosteriorState& state, std::uint64_t seed);

struct BatchPlan {
  Matrix theta_tilde;
  TypeVector z_tilde;
  MatchResult match;
};

/// The policy for the next batch. Depends on the posterior state only.
BatchPlan plan_batch(const PosteriorState& state, const MatchConstraints& constraints,
                     std::uint64_t seed);

/// Solves the constrained matching at the true parameters. Returns the
/// match and its expected output.
std::pair<MatchResult, double> oracle_policy(const ProductionMatrix& theta_true,
                                             const TypeVector& z_true,
                                             const MatchConstraints& constraints);

/// Expected output of a plan under the true parameters.
double expected_output(const PairingPlan& plan, const ProductionMatrix& theta_true,
                       const TypeVector& z_true);

/// Fraction of agents whose MAP type differs from the truth, minimized over
/// label permutations.
double false_labeling_rate(const PosteriorState& state, const TypeVector& z_true);

/// Replaces xi agents drawn uniformly without replacement: new true types
/// from pi_true, type beliefs reset to uniform. Theta beliefs are untouched.
std::pair<PosteriorState, TypeVector> apply_turnover(const PosteriorState& state,
                                                     const TypeVector& z_true, int xi,
                                                     const TypeDistribution& pi_true,
                                                     std::uint64_t seed);

/// Steps 1-4 of one batch plus metrics. `oracle_output` is the oracle's
/// expected output for truth.z (computed by the caller when not supplied).
std::pair<BatchRecord, PosteriorState> run_batch(const PosteriorState& state,
                                                 const ScenarioConfig& config, const Truth& truth,
                                                 std::uint64_t seed,
                                                 const Estimator& estimator = {},
                                                 std::optional<double> oracle_output = {});

/// True types at the start of a replication (fixed unless turnover is on).
TypeVector initial_truth(const ScenarioConfig& config, int replication);

/// One replication: sample truth, run T batches with turnover between them.
RunResult run_replication(const ScenarioConfig& config, int replication,
                          const Estimator& estimator = {});

using RunCallback = std::function<void(const RunResult&)>;

/// All replications, `jobs` at a time. `order` (optional) fixes the execution
/// order; results are indexed by replication regardless. `on_complete` is
/// called once per finished replication, serialized across workers.
std::vector<RunResult> run_scenario(const ScenarioConfig& config, int jobs = 1,
                                    std::vector<int> order = {},
                                    const RunCallback& on_complete = {});

}  // namespace hgt
