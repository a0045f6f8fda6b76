#include <doctest.h>

#include <algorithm>

#include "hgt/bandit.hpp"
#include "hgt/io.hpp"
#include "oracles.hpp"

using namespace hgt;

namespace {

ScenarioConfig small_config(const Matrix& theta, int n = 12, int m = 18, int batches = 4) {
  ScenarioConfig c;
  c.name = "small";
  c.n = n;
  c.k = static_cast<int>(theta.rows());
  c.batches = batches;
  c.m_per_batch = m;
  c.pi_true = TypeDistribution::uniform(c.k);
  c.theta_true = ProductionMatrix(theta, true);
  c.constraints.m = m;
  c.constraints.workload_enabled = true;
  c.constraints.d_low = 2 * m / n - 1;
  c.constraints.d_high = 2 * m / n + 1;
  c.em.restarts = 3;
  c.priors = PosteriorState::uninformative(n, c.k);
  c.replications = 3;
  c.master_seed = 99;
  return c;
}

Matrix two_type_theta() { return Matrix::from_rows({{0.7, 0.2}, {0.2, 0.6}}); }

// Returns the true parameters with tight standard errors, whatever the data.
Estimator truth_estimator(const ScenarioConfig& config, const TypeVector& z) {
  return [config, z](const OutcomeVector&, const PairingPlan&, int, const EmSettings&, std::uint64_t) {
    BatchEstimate e;
    e.theta_hat = config.theta_true;
    e.pi_hat = config.pi_true;
    e.q_hat = VariationalPosterior::indicators(z);
    e.se = Matrix(config.k, config.k, 0.01);
    e.effective_counts = Matrix(config.k, config.k, 100.0);
    e.elbo = 0.0;
    e.converged = true;
    e.restarts_used = 1;
    return e;
  };
}

}  // namespace

TEST_SUITE("bandit") {

TEST_CASE("realize_parameters: cold start, certainty and fixture means") {
  const PosteriorState cold = PosteriorState::uninformative(400, 2);
  const auto [theta, z] = realize_parameters(cold, 1);
  CHECK(theta == Matrix(2, 2, 0.5));
  const std::vector<int> counts = z.counts();
  CHECK(counts[0] > 150);
  CHECK(counts[1] > 150);

  PosteriorState s = PosteriorState::uninformative(3, 2);
  s.omega = Matrix::from_rows({{1.0, 0.0}, {0.0, 1.0}, {1.0, 0.0}});
  s.belief(0, 0) = GaussianBelief::from_variance(0.31, 0.01);
  s.belief(0, 1) = GaussianBelief::from_variance(0.12, 0.02);
  s.belief(1, 0) = GaussianBelief::from_variance(0.12, 0.02);
  s.belief(1, 1) = GaussianBelief::from_variance(1.2, 0.5);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto [t, zz] = realize_parameters(s, seed);
    CHECK(zz.types() == std::vector<int>{0, 1, 0});
    CHECK(t == Matrix::from_rows({{0.31, 0.12}, {0.12, 1.0}}));
  }
}

TEST_CASE("oracle_policy: single type and brute force agreement") {
  MatchConstraints c;
  c.m = 10;
  const auto [match, value] = oracle_policy(ProductionMatrix(Matrix(1, 1, 0.375), true),
                                            TypeVector(std::vector<int>(6, 0), 1), c);
  CHECK(value == 10 * 0.375);

  Rng rng(31);
  for (int t = 0; t < 40; ++t) {
    std::vector<int> types(6);
    for (int& x : types) x = static_cast<int>(rng() % 2);
    const TypeVector z(types, 2);
    Matrix w(2, 2);
    for (int a = 0; a < 2; ++a)
      for (int b = a; b < 2; ++b) w(a, b) = w(b, a) = static_cast<double>(rng() % 257) / 256.0;
    MatchConstraints cc;
    cc.m = 5;
    cc.workload_enabled = true;
    cc.d_low = 1;
    cc.d_high = 2;
    const double value6 = oracle_policy(ProductionMatrix(w, true), z, cc).second;
    CHECK(value6 == bruteforce_matching(w, z, cc).objective);
  }
}

TEST_CASE("false_labeling_rate") {
  PosteriorState s = PosteriorState::uninformative(4, 2);
  s.omega = Matrix::from_rows({{0.9, 0.1}, {0.8, 0.2}, {0.1, 0.9}, {0.3, 0.7}});
  CHECK(false_labeling_rate(s, TypeVector({0, 0, 1, 1}, 2)) == 0.0);
  CHECK(false_labeling_rate(s, TypeVector({1, 1, 0, 0}, 2)) == 0.0);
  CHECK(false_labeling_rate(s, TypeVector({0, 1, 1, 0}, 2)) == 0.5);
  CHECK(false_labeling_rate(s, TypeVector({0, 0, 1, 0}, 2)) == 0.25);

  PosteriorState s3 = PosteriorState::uninformative(3, 3);
  s3.omega = Matrix::from_rows({{0.1, 0.8, 0.1}, {0.1, 0.1, 0.8}, {0.8, 0.1, 0.1}});
  CHECK(false_labeling_rate(s3, TypeVector({0, 1, 2}, 3)) == 0.0);
}

TEST_CASE("apply_turnover") {
  Rng rng(32);
  PosteriorState s = PosteriorState::uninformative(10, 3);
  s.omega = oracle::random_q(10, 3, rng);
  s.belief(0, 0) = GaussianBelief::from_variance(0.4, 0.01);
  const TypeVector z({0, 1, 2, 0, 1, 2, 0, 1, 2, 0}, 3);
  const TypeDistribution pi = TypeDistribution::uniform(3);

  const auto [same, z0] = apply_turnover(s, z, 0, pi, 1);
  CHECK(same == s);
  CHECK(z0 == z);

  const auto [all, zn] = apply_turnover(s, z, 10, pi, 2);
  for (int i = 0; i < 10; ++i)
    for (int a = 0; a < 3; ++a) CHECK(all.omega(i, a) == doctest::Approx(1.0 / 3.0));
  CHECK(all.theta == s.theta);

  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto [two, z2] = apply_turnover(s, z, 2, pi, seed);
    int reset = 0, untouched = 0, changed = 0;
    for (int i = 0; i < 10; ++i) {
      const bool same_row = std::equal(two.omega.row(i).begin(), two.omega.row(i).end(), s.omega.row(i).begin());
      untouched += same_row;
      reset += !same_row;
      changed += z2[i] != z[i];
    }
    CHECK(reset == 2);
    CHECK(untouched == 8);
    CHECK(changed <= 2);
    CHECK(two.theta == s.theta);
  }
}

TEST_CASE("constant theta gives zero regret in every batch") {
  const ScenarioConfig c = small_config(Matrix(2, 2, 0.35));
  const RunResult r = run_replication(c, 0);
  REQUIRE(!r.failed);
  for (const BatchRecord& b : r.batches) CHECK(std::abs(b.regret_abs) <= 1e-9);
}

TEST_CASE("an estimator that returns the truth removes regret after the first batch") {
  const ScenarioConfig c = small_config(two_type_theta());
  for (int rep = 0; rep < 3; ++rep) {
    const TypeVector z = initial_truth(c, rep);
    const RunResult r = run_replication(c, rep, truth_estimator(c, z));
    REQUIRE(!r.failed);
    REQUIRE(r.batches.size() == 4);
    for (std::size_t t = 1; t < r.batches.size(); ++t) CHECK(std::abs(r.batches[t].regret_abs) <= 1e-9);
    CHECK(r.batches.back().flr == 0.0);
  }
}

TEST_CASE("run_replication: invariants on a small scenario") {
  const ScenarioConfig c = small_config(two_type_theta(), 16, 24, 5);
  for (int rep = 0; rep < 3; ++rep) {
    const RunResult r = run_replication(c, rep);
    REQUIRE(!r.failed);
    REQUIRE(static_cast<int>(r.batches.size()) == c.batches);
    std::vector<double> prev_var(4, kInf);
    for (const BatchRecord& b : r.batches) {
      CHECK(b.regret_abs >= -1e-9);
      CHECK(b.regret_abs == doctest::Approx(b.oracle_expected_output - b.hgt_expected_output));
      CHECK(oracle::check_plan(b.plan, b.z_true, c.constraints) == "");
      CHECK(b.hgt_expected_output == doctest::Approx(expected_output(b.plan, c.theta_true, b.z_true)));
      for (int cell = 0; cell < 4; ++cell) {
        const double v = b.posterior_after.theta[cell].variance();
        // A cell's variance falls whenever its aligned signal was finite.
        if (std::isfinite(v)) CHECK(v <= prev_var[cell]);
        prev_var[cell] = v;
      }
    }
    CHECK(r.final_posterior == r.batches.back().posterior_after);
  }
}

TEST_CASE("posterior variance strictly decreases when every signal is finite") {
  const ScenarioConfig c = small_config(two_type_theta());
  const TypeVector z = initial_truth(c, 0);
  const RunResult r = run_replication(c, 0, truth_estimator(c, z));
  REQUIRE(!r.failed);
  for (std::size_t t = 1; t < r.batches.size(); ++t)
    for (int cell = 0; cell < 4; ++cell)
      CHECK(r.batches[t].posterior_after.theta[cell].variance() <
            r.batches[t - 1].posterior_after.theta[cell].variance());
}

TEST_CASE("turnover redraws truth and the oracle follows it") {
  ScenarioConfig c = small_config(two_type_theta());
  c.turnover_xi = 3;
  const RunResult r = run_replication(c, 1);
  REQUIRE(!r.failed);
  CHECK(r.batches.front().z_true == r.z_initial);
  for (const BatchRecord& b : r.batches)
    CHECK(b.oracle_expected_output == oracle_policy(c.theta_true, b.z_true, c.constraints).second);
}

TEST_CASE("determinism across invocations, job counts and execution orders") {
  ScenarioConfig c = small_config(two_type_theta());
  c.turnover_xi = 1;
  c.replications = 4;
  auto dump_all = [&](const std::vector<RunResult>& runs) {
    std::string s;
    for (const RunResult& r : runs) s += io::run_to_json(r, c.name).dump();
    return s;
  };
  const std::string base = dump_all(run_scenario(c));
  CHECK(base == dump_all(run_scenario(c)));
  CHECK(base == dump_all(run_scenario(c, 3)));
  CHECK(base == dump_all(run_scenario(c, 1, {3, 1, 0, 2})));
  CHECK(base == dump_all(run_scenario(c, 2, {2, 3, 1, 0})));
  std::vector<int> seen;
  run_scenario(c, 2, {}, [&](const RunResult& r) { seen.push_back(r.replication); });
  std::sort(seen.begin(), seen.end());
  CHECK(seen == std::vector<int>{0, 1, 2, 3});
  CHECK_THROWS_AS(run_scenario(c, 1, {0, 1, 1, 2}), ValidationError);
}

TEST_CASE("a failing estimator is recorded, not thrown") {
  const ScenarioConfig c = small_config(two_type_theta());
  const Estimator broken = [](const OutcomeVector&, const PairingPlan&, int, const EmSettings&,
                              std::uint64_t) -> BatchEstimate { throw EstimationError("no chain converged"); };
  const RunResult r = run_replication(c, 0, broken);
  CHECK(r.failed);
  CHECK(r.error_kind == "estimation");
  CHECK(r.error.find("no chain converged") != std::string::npos);
}

TEST_CASE("scenario validation") {
  ScenarioConfig c = small_config(two_type_theta());
  c.turnover_xi = 13;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = small_config(two_type_theta());
  c.constraints.m = 5;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = small_config(two_type_theta());
  c.priors = PosteriorState::uninformative(11, 2);
  CHECK_THROWS_AS(c.validate(), ValidationError);
}

}
