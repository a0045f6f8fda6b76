#include "hgt/io.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <system_error>

namespace hgt::io {

namespace {

using json = Json;

[[noreturn]] void fail(const std::string& path, const std::string& message) {
  throw SchemaError(path + ": " + message);
}

// Tracks which keys of an object were consumed so unknown keys can be rejected.
class Fields {
 public:
  Fields(const json& object, std::string path) : object_(object), path_(std::move(path)) {
    if (!object_.is_object()) fail(path_, "expected an object");
  }

  const json& required(const std::string& key) {
    seen_.insert(key);
    const auto it = object_.find(key);
    if (it == object_.end()) fail(path_, "missing required key '" + key + "'");
    return *it;
  }

  // Absent and null are equivalent.
  const json* optional(const std::string& key) {
    seen_.insert(key);
    const auto it = object_.find(key);
    if (it == object_.end() || it->is_null()) return nullptr;
    return &*it;
  }

  std::string at(const std::string& key) const { return path_ + "." + key; }

  void finish() const {
    for (auto it = object_.begin(); it != object_.end(); ++it)
      if (!seen_.contains(it.key())) fail(path_, "unknown key '" + it.key() + "'");
  }

 private:
  const json& object_;
  std::string path_;
  std::set<std::string> seen_;
};

long long as_integer(const json& v, const std::string& path) {
  if (!v.is_number_integer()) fail(path, "expected an integer");
  if (v.is_number_unsigned()) {
    const auto u = v.get<std::uint64_t>();
    if (u > static_cast<std::uint64_t>(std::numeric_limits<long long>::max())) fail(path, "integer out of range");
    return static_cast<long long>(u);
  }
  return v.get<long long>();
}

int as_int(const json& v, const std::string& path) {
  const long long x = as_integer(v, path);
  if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max())
    fail(path, "integer out of range");
  return static_cast<int>(x);
}

std::uint64_t as_uint64(const json& v, const std::string& path) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<long long>() >= 0) return static_cast<std::uint64_t>(v.get<long long>());
  fail(path, "expected a nonnegative integer");
}

double as_double(const json& v, const std::string& path) {
  if (!v.is_number()) fail(path, "expected a number");
  return v.get<double>();
}

// null encodes a non-finite value (`when_null`).
double as_double_or(const json& v, const std::string& path, double when_null) {
  return v.is_null() ? when_null : as_double(v, path);
}

bool as_bool(const json& v, const std::string& path) {
  if (!v.is_boolean()) fail(path, "expected a boolean");
  return v.get<bool>();
}

std::string as_string(const json& v, const std::string& path) {
  if (!v.is_string()) fail(path, "expected a string");
  return v.get<std::string>();
}

const json& as_array(const json& v, const std::string& path) {
  if (!v.is_array()) fail(path, "expected an array");
  return v;
}

std::vector<double> as_doubles(const json& v, const std::string& path, double when_null = kNegInf,
                               bool allow_null = false) {
  std::vector<double> out;
  for (std::size_t i = 0; i < as_array(v, path).size(); ++i) {
    const std::string p = path + "[" + std::to_string(i) + "]";
    out.push_back(allow_null ? as_double_or(v[i], p, when_null) : as_double(v[i], p));
  }
  return out;
}

Matrix as_matrix(const json& v, const std::string& path, bool allow_null = false,
                 double when_null = kInf) {
  std::vector<std::vector<double>> rows;
  for (std::size_t r = 0; r < as_array(v, path).size(); ++r)
    rows.push_back(as_doubles(v[r], path + "[" + std::to_string(r) + "]", when_null, allow_null));
  for (const auto& row : rows)
    if (row.size() != rows.front().size()) fail(path, "rows have different lengths");
  if (rows.empty()) return Matrix();
  return Matrix::from_rows(rows);
}

// 1-based labels in [1, k] to 0-based indices.
std::vector<int> as_labels(const json& v, const std::string& path, int k) {
  std::vector<int> out;
  for (std::size_t i = 0; i < as_array(v, path).size(); ++i) {
    const int label = as_int(v[i], path + "[" + std::to_string(i) + "]");
    if (label < 1 || label > k) fail(path, "label out of range [1, K]");
    out.push_back(label - 1);
  }
  return out;
}

json finite_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

json matrix_json(const Matrix& m, bool nulls_for_nonfinite = false) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (std::size_t c = 0; c < m.cols(); ++c)
      row.push_back(nulls_for_nonfinite ? finite_or_null(m(r, c)) : json(m(r, c)));
    rows.push_back(std::move(row));
  }
  return rows;
}

json labels_json(const std::vector<int>& zero_based) {
  json out = json::array();
  for (int x : zero_based) out.push_back(x + 1);
  return out;
}

json plan_json(const PairingPlan& plan) {
  json out = json::array();
  for (const Edge& e : plan.edges()) out.push_back(json::array({e.first + 1, e.second + 1}));
  return out;
}

PairingPlan plan_from(const json& v, const std::string& path, int n) {
  std::vector<Edge> edges;
  for (std::size_t j = 0; j < as_array(v, path).size(); ++j) {
    const std::string p = path + "[" + std::to_string(j) + "]";
    if (!v[j].is_array() || v[j].size() != 2) fail(p, "expected an [i, j] pair");
    edges.push_back({as_int(v[j][0], p) - 1, as_int(v[j][1], p) - 1});
  }
  return PairingPlan(n, std::move(edges));
}

std::string outcomes_string(const OutcomeVector& y) {
  std::string s;
  s.reserve(y.size());
  for (int j = 0; j < y.size(); ++j) s.push_back(y[j] ? '1' : '0');
  return s;
}

OutcomeVector outcomes_from(const json& v, const std::string& path) {
  const std::string s = as_string(v, path);
  std::vector<std::uint8_t> values;
  for (char c : s) {
    if (c != '0' && c != '1') fail(path, "outcomes must be a string of 0/1");
    values.push_back(c == '1' ? 1 : 0);
  }
  return OutcomeVector(std::move(values));
}

json belief_json(const GaussianBelief& b) {
  json cell = json::object();
  cell["mean"] = b.mean;
  cell["precision"] = b.precision;
  cell["variance"] = finite_or_null(b.variance());
  cell["uninformative"] = !b.informative();
  return cell;
}

GaussianBelief belief_from(const json& v, const std::string& path) {
  if (v.is_string()) {
    if (v.get<std::string>() != "uninformative") fail(path, "expected \"uninformative\" or an object");
    return GaussianBelief::uninformative();
  }
  Fields f(v, path);
  GaussianBelief b;
  if (const json* m = f.optional("mean")) b.mean = as_double(*m, f.at("mean"));
  const json* precision = f.optional("precision");
  const json* variance = f.optional("variance");
  const json* uninformative = f.optional("uninformative");
  f.finish();
  const bool flat = uninformative && as_bool(*uninformative, path + ".uninformative");
  if (precision) {
    b.precision = as_double(*precision, path + ".precision");
    if (!(b.precision >= 0.0) || !std::isfinite(b.precision)) fail(path, "precision must be finite and >= 0");
  } else if (variance) {
    const double var = as_double(*variance, path + ".variance");
    if (!(var > 0.0)) fail(path, "variance must be > 0");
    b.precision = 1.0 / var;
  } else if (!flat) {
    fail(path, "belief needs precision, variance or uninformative: true");
  }
  if (flat) {
    if (b.precision != 0.0) fail(path, "uninformative belief cannot carry a precision");
  }
  return b;
}

PosteriorState posterior_from(const json& v, const std::string& path, std::optional<int> expect_n,
                              std::optional<int> expect_k) {
  Fields f(v, path);
  if (const json* sv = f.optional("schema_version"))
    if (as_int(*sv, f.at("schema_version")) != kSchemaVersion) fail(path, "unsupported schema_version");
  PosteriorState state;
  state.k = as_int(f.required("k"), f.at("k"));
  const int n = as_int(f.required("n"), f.at("n"));
  if (expect_k && state.k != *expect_k) fail(path, "k disagrees with the scenario");
  if (expect_n && n != *expect_n) fail(path, "n disagrees with the scenario");
  if (state.k < 1 || n < 0) fail(path, "k must be >= 1 and n >= 0");
  if (const json* b = f.optional("batch_index")) state.batch_index = as_int(*b, f.at("batch_index"));

  const json& theta = as_array(f.required("theta"), f.at("theta"));
  if (static_cast<int>(theta.size()) != state.k) fail(f.at("theta"), "expected K rows");
  for (int a = 0; a < state.k; ++a) {
    const std::string row_path = f.at("theta") + "[" + std::to_string(a) + "]";
    const json& row = as_array(theta[a], row_path);
    if (static_cast<int>(row.size()) != state.k) fail(row_path, "expected K cells");
    for (int b = 0; b < state.k; ++b)
      state.theta.push_back(belief_from(row[b], row_path + "[" + std::to_string(b) + "]"));
  }

  const json& omega = f.required("omega");
  if (omega.is_string()) {
    if (omega.get<std::string>() != "uniform") fail(f.at("omega"), "expected \"uniform\" or an n x K matrix");
    state.omega = Matrix(n, state.k, 1.0 / state.k);
  } else {
    state.omega = as_matrix(omega, f.at("omega"));
    if (static_cast<int>(state.omega.rows()) != n ||
        (n > 0 && static_cast<int>(state.omega.cols()) != state.k))
      fail(f.at("omega"), "expected an n x K matrix");
    if (n == 0) state.omega = Matrix(0, state.k);
  }
  f.finish();
  try {
    state.validate();
  } catch (const ValidationError& e) {
    fail(path, e.what());
  }
  return state;
}

struct Moments {
  double mean = 0.0;
  double sd = 0.0;
  int count = 0;
};

Moments moments(const std::vector<double>& xs) {
  Moments m;
  m.count = static_cast<int>(xs.size());
  if (xs.empty()) return m;
  double sum = 0.0;
  for (double x : xs) sum += x;
  m.mean = sum / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - m.mean) * (x - m.mean);
    m.sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return m;
}

Json moments_json(const std::vector<double>& xs) {
  const Moments m = moments(xs);
  Json out = Json::object();
  out["mean"] = m.mean;
  out["sd"] = m.sd;
  return out;
}

int histogram_bin(double x) {
  const double clamped = std::clamp(x, 0.0, 1.0);
  return std::min(kHistogramBins - 1, static_cast<int>(std::floor(clamped * kHistogramBins + 1e-9)));
}

}  // namespace

std::string format_double(double value) {
  char buf[64];
  const auto result = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, result.ptr);
}

ScenarioFile parse_scenario(const Json& doc) {
  Fields f(doc, "scenario");
  const int version = as_int(f.required("schema_version"), f.at("schema_version"));
  if (version != kSchemaVersion) fail(f.at("schema_version"), "unsupported schema_version " + std::to_string(version));

  ScenarioFile out;
  ScenarioConfig& c = out.config;
  c.name = as_string(f.required("name"), f.at("name"));
  if (c.name.empty() || c.name.find_first_of("/\\") != std::string::npos)
    fail(f.at("name"), "name must be non-empty and contain no path separators");
  c.n = as_int(f.required("n"), f.at("n"));
  c.k = as_int(f.required("K"), f.at("K"));
  c.batches = as_int(f.required("T"), f.at("T"));
  c.m_per_batch = as_int(f.required("m_per_batch"), f.at("m_per_batch"));

  if (const json* em = f.optional("em")) {
    Fields e(*em, f.at("em"));
    if (const json* v = e.optional("max_outer_iters")) c.em.max_outer_iters = as_int(*v, e.at("max_outer_iters"));
    if (const json* v = e.optional("max_estep_sweeps")) c.em.max_estep_sweeps = as_int(*v, e.at("max_estep_sweeps"));
    if (const json* v = e.optional("tol_elbo")) c.em.tol_elbo = as_double(*v, e.at("tol_elbo"));
    if (const json* v = e.optional("tol_q")) c.em.tol_q = as_double(*v, e.at("tol_q"));
    if (const json* v = e.optional("restarts")) c.em.restarts = as_int(*v, e.at("restarts"));
    if (const json* v = e.optional("min_effective_count"))
      c.em.min_effective_count = as_double(*v, e.at("min_effective_count"));
    if (const json* v = e.optional("symmetric")) c.em.symmetric = as_bool(*v, e.at("symmetric"));
    e.finish();
  }

  try {
    c.pi_true = TypeDistribution(as_doubles(f.required("pi_true"), f.at("pi_true")));
    c.theta_true = ProductionMatrix(as_matrix(f.required("theta_true"), f.at("theta_true")), c.em.symmetric);
  } catch (const SchemaError&) {
    throw;
  } catch (const ValidationError& e) {
    fail("scenario", e.what());
  }

  c.constraints.m = c.m_per_batch;
  if (const json* cons = f.optional("constraints")) {
    Fields k(*cons, f.at("constraints"));
    if (const json* w = k.optional("workload")) {
      Fields wf(*w, k.at("workload"));
      c.constraints.workload_enabled = true;
      c.constraints.d_low = as_int(wf.required("d_low"), wf.at("d_low"));
      c.constraints.d_high = as_int(wf.required("d_high"), wf.at("d_high"));
      wf.finish();
    }
    if (const json* v = k.optional("clipping_rate")) c.constraints.clipping_rate = as_double(*v, k.at("clipping_rate"));
    k.finish();
  }
  if (const json* v = f.optional("turnover_xi")) c.turnover_xi = as_int(*v, f.at("turnover_xi"));
  c.replications = as_int(f.required("replications"), f.at("replications"));
  c.master_seed = as_uint64(f.required("master_seed"), f.at("master_seed"));

  if (c.n < 1 || c.k < 1) fail("scenario", "n and K must be positive");
  if (const json* p = f.optional("priors"))
    c.priors = posterior_from(*p, f.at("priors"), c.n, c.k);
  else
    c.priors = PosteriorState::uninformative(c.n, c.k);

  if (const json* v = f.optional("output_dir")) out.output_dir = as_string(*v, f.at("output_dir"));
  if (const json* v = f.optional("verbosity")) {
    out.verbosity = as_int(*v, f.at("verbosity"));
    if (out.verbosity < 0 || out.verbosity > 2) fail(f.at("verbosity"), "must be 0, 1 or 2");
  }
  f.finish();
  c.validate();
  return out;
}

ScenarioFile load_scenario(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError(path.string() + ": not valid JSON: " + e.what());
  }
  return parse_scenario(doc);
}

Json scenario_to_json(const ScenarioFile& scenario) {
  const ScenarioConfig& c = scenario.config;
  Json out = Json::object();
  out["schema_version"] = kSchemaVersion;
  out["name"] = c.name;
  out["n"] = c.n;
  out["K"] = c.k;
  out["T"] = c.batches;
  out["m_per_batch"] = c.m_per_batch;
  out["pi_true"] = c.pi_true.probs();
  out["theta_true"] = matrix_json(c.theta_true.values());
  Json cons = Json::object();
  if (c.constraints.workload_enabled)
    cons["workload"] = Json{{"d_low", c.constraints.d_low}, {"d_high", c.constraints.d_high}};
  else
    cons["workload"] = nullptr;
  cons["clipping_rate"] = c.constraints.clipping_rate ? Json(*c.constraints.clipping_rate) : Json(nullptr);
  out["constraints"] = std::move(cons);
  out["turnover_xi"] = c.turnover_xi;
  out["em"] = Json{{"max_outer_iters", c.em.max_outer_iters},
                   {"max_estep_sweeps", c.em.max_estep_sweeps},
                   {"tol_elbo", c.em.tol_elbo},
                   {"tol_q", c.em.tol_q},
                   {"restarts", c.em.restarts},
                   {"min_effective_count", c.em.min_effective_count},
                   {"symmetric", c.em.symmetric}};
  if (!(c.priors == PosteriorState::uninformative(c.n, c.k))) out["priors"] = posterior_to_json(c.priors);
  out["replications"] = c.replications;
  out["master_seed"] = c.master_seed;
  if (scenario.output_dir) out["output_dir"] = *scenario.output_dir;
  out["verbosity"] = scenario.verbosity;
  return out;
}

Json posterior_to_json(const PosteriorState& state) {
  Json out = Json::object();
  out["schema_version"] = kSchemaVersion;
  out["k"] = state.k;
  out["n"] = state.n();
  out["batch_index"] = state.batch_index;
  Json theta = Json::array();
  for (int a = 0; a < state.k; ++a) {
    Json row = Json::array();
    for (int b = 0; b < state.k; ++b) row.push_back(belief_json(state.belief(a, b)));
    theta.push_back(std::move(row));
  }
  out["theta"] = std::move(theta);
  out["omega"] = matrix_json(state.omega);
  return out;
}

PosteriorState posterior_from_json(const Json& doc) {
  return posterior_from(doc, "posterior", std::nullopt, std::nullopt);
}

Json match_to_json(const MatchResult& match) {
  Json out = Json::object();
  out["objective"] = match.objective;
  out["optimality"] = match.optimality == Optimality::kExact ? "exact" : "heuristic_realization";
  Json cells = Json::array();
  const int k = match.allocation.k;
  for (int a = 0; a < k; ++a)
    for (int b = a; b < k; ++b)
      cells.push_back(Json{{"a", a + 1}, {"b", b + 1}, {"count", match.allocation.count(a, b)}});
  out["allocation"] = std::move(cells);
  out["plan"] = plan_json(match.plan);
  out["warnings"] = match.warnings;
  return out;
}

std::string log_file_name(int replication) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "replication_%04d.json", replication);
  return buf;
}

Json run_to_json(const RunResult& run, const std::string& scenario_name) {
  Json out = Json::object();
  out["schema_version"] = kSchemaVersion;
  out["scenario"] = scenario_name;
  out["replication"] = run.replication;
  out["seed"] = run.seed;
  out["failed"] = run.failed;
  out["error_kind"] = run.error_kind;
  out["error"] = run.error;
  out["z_initial"] = labels_json(run.z_initial.types());
  Json batches = Json::array();
  for (const BatchRecord& rec : run.batches) {
    Json b = Json::object();
    b["batch"] = rec.batch_index;
    b["theta_tilde"] = matrix_json(rec.theta_tilde);
    b["z_tilde"] = labels_json(rec.z_tilde.types());
    b["z_true"] = labels_json(rec.z_true.types());
    b["plan"] = plan_json(rec.plan);
    b["outcomes"] = outcomes_string(rec.outcomes);
    const BatchEstimate& e = rec.estimate;
    b["estimate"] = Json{{"theta_hat", matrix_json(e.theta_hat.values())},
                         {"symmetric", e.theta_hat.symmetric()},
                         {"pi_hat", e.pi_hat.probs()},
                         {"q_hat", matrix_json(e.q_hat.matrix())},
                         {"se", matrix_json(e.se, true)},
                         {"effective_counts", matrix_json(e.effective_counts)},
                         {"elbo", finite_or_null(e.elbo)},
                         {"converged", e.converged},
                         {"restarts_used", e.restarts_used},
                         {"iterations", e.iterations},
                         {"max_elbo_drop", e.max_elbo_drop}};
    b["permutation"] = labels_json(rec.permutation.perm);
    b["posterior_after"] = posterior_to_json(rec.posterior_after);
    b["hgt_expected"] = rec.hgt_expected_output;
    b["oracle_expected"] = rec.oracle_expected_output;
    b["regret_abs"] = rec.regret_abs;
    b["regret_pct"] = rec.regret_pct;
    b["flr"] = rec.flr;
    b["degenerate_rows"] = rec.degenerate_rows;
    b["warnings"] = rec.warnings;
    batches.push_back(std::move(b));
  }
  out["batches"] = std::move(batches);
  out["final_posterior"] = run.failed ? Json(nullptr) : posterior_to_json(run.final_posterior);
  return out;
}

RunResult run_from_json(const Json& doc) {
  try {
    Fields f(doc, "log");
    if (as_int(f.required("schema_version"), f.at("schema_version")) != kSchemaVersion)
      fail("log", "unsupported schema_version");
    as_string(f.required("scenario"), f.at("scenario"));
    RunResult run;
    run.replication = as_int(f.required("replication"), f.at("replication"));
    run.seed = as_uint64(f.required("seed"), f.at("seed"));
    run.failed = as_bool(f.required("failed"), f.at("failed"));
    run.error_kind = as_string(f.required("error_kind"), f.at("error_kind"));
    run.error = as_string(f.required("error"), f.at("error"));

    std::optional<PosteriorState> final_state;
    if (const json* p = f.optional("final_posterior"))
      final_state = posterior_from(*p, f.at("final_posterior"), std::nullopt, std::nullopt);
    const json& batches = as_array(f.required("batches"), f.at("batches"));
    // K and n come from the first available posterior.
    int k = final_state ? final_state->k : 0;
    int n = final_state ? final_state->n() : 0;
    if (!final_state && !batches.empty()) {
      const json& p = batches[0].at("posterior_after");
      k = as_int(p.at("k"), "log.batches[0].posterior_after.k");
      n = as_int(p.at("n"), "log.batches[0].posterior_after.n");
    }
    const json& z0 = f.required("z_initial");
    if (!z0.empty()) {
      if (k == 0) fail(f.at("z_initial"), "types present without a posterior to fix K");
      run.z_initial = TypeVector(as_labels(z0, f.at("z_initial"), k), k);
    }

    for (std::size_t t = 0; t < batches.size(); ++t) {
      const std::string bp = f.at("batches") + "[" + std::to_string(t) + "]";
      Fields b(batches[t], bp);
      BatchRecord rec;
      rec.batch_index = as_int(b.required("batch"), b.at("batch"));
      rec.theta_tilde = as_matrix(b.required("theta_tilde"), b.at("theta_tilde"));
      rec.z_tilde = TypeVector(as_labels(b.required("z_tilde"), b.at("z_tilde"), k), k);
      rec.z_true = TypeVector(as_labels(b.required("z_true"), b.at("z_true"), k), k);
      rec.plan = plan_from(b.required("plan"), b.at("plan"), n);
      rec.outcomes = outcomes_from(b.required("outcomes"), b.at("outcomes"));

      Fields e(b.required("estimate"), b.at("estimate"));
      BatchEstimate& est = rec.estimate;
      est.theta_hat = ProductionMatrix(as_matrix(e.required("theta_hat"), e.at("theta_hat")),
                                       as_bool(e.required("symmetric"), e.at("symmetric")));
      est.pi_hat = TypeDistribution(as_doubles(e.required("pi_hat"), e.at("pi_hat")));
      est.q_hat = VariationalPosterior(as_matrix(e.required("q_hat"), e.at("q_hat")));
      est.se = as_matrix(e.required("se"), e.at("se"), true, kInf);
      est.effective_counts = as_matrix(e.required("effective_counts"), e.at("effective_counts"));
      est.elbo = as_double_or(e.required("elbo"), e.at("elbo"), kNegInf);
      est.converged = as_bool(e.required("converged"), e.at("converged"));
      est.restarts_used = as_int(e.required("restarts_used"), e.at("restarts_used"));
      est.iterations = as_int(e.required("iterations"), e.at("iterations"));
      est.max_elbo_drop = as_double(e.required("max_elbo_drop"), e.at("max_elbo_drop"));
      e.finish();

      rec.permutation.perm = as_labels(b.required("permutation"), b.at("permutation"), k);
      rec.posterior_after = posterior_from(b.required("posterior_after"), b.at("posterior_after"), n, k);
      rec.hgt_expected_output = as_double(b.required("hgt_expected"), b.at("hgt_expected"));
      rec.oracle_expected_output = as_double(b.required("oracle_expected"), b.at("oracle_expected"));
      rec.regret_abs = as_double(b.required("regret_abs"), b.at("regret_abs"));
      rec.regret_pct = as_double(b.required("regret_pct"), b.at("regret_pct"));
      rec.flr = as_double(b.required("flr"), b.at("flr"));
      rec.degenerate_rows = as_int(b.required("degenerate_rows"), b.at("degenerate_rows"));
      for (const json& w : as_array(b.required("warnings"), b.at("warnings")))
        rec.warnings.push_back(as_string(w, b.at("warnings")));
      b.finish();
      run.batches.push_back(std::move(rec));
    }
    if (final_state) run.final_posterior = std::move(*final_state);
    f.finish();
    return run;
  } catch (const std::exception& e) {
    throw CorruptError(std::string("malformed replication log: ") + e.what());
  }
}

std::string metrics_csv(const std::vector<RunResult>& runs) {
  std::string out = "replication,batch,flr,regret_abs,regret_pct,hgt_expected,oracle_expected\n";
  for (const RunResult& run : runs) {
    if (run.failed) continue;
    for (const BatchRecord& rec : run.batches) {
      out += std::to_string(run.replication) + "," + std::to_string(rec.batch_index) + "," +
             format_double(rec.flr) + "," + format_double(rec.regret_abs) + "," +
             format_double(rec.regret_pct) + "," + format_double(rec.hgt_expected_output) + "," +
             format_double(rec.oracle_expected_output) + "\n";
    }
  }
  return out;
}

Json summarize(const std::vector<RunResult>& runs, const ScenarioConfig& config,
               int expected_replications) {
  const int k = config.k;
  const int batches = config.batches;
  std::vector<const RunResult*> ok;
  Json failed = Json::array();
  for (const RunResult& run : runs) {
    if (run.failed) {
      failed.push_back(Json{{"replication", run.replication},
                            {"seed", run.seed},
                            {"error_kind", run.error_kind},
                            {"error", run.error}});
    } else {
      if (static_cast<int>(run.batches.size()) != batches)
        throw CorruptError("replication " + std::to_string(run.replication) + " has " +
                           std::to_string(run.batches.size()) + " batches, expected " +
                           std::to_string(batches));
      ok.push_back(&run);
    }
  }

  Json out = Json::object();
  out["schema_version"] = kSchemaVersion;
  out["scenario"] = config.name;
  out["K"] = k;
  out["T"] = batches;
  out["replications_expected"] = expected_replications;
  out["replications_found"] = static_cast<int>(runs.size());
  out["replications_ok"] = static_cast<int>(ok.size());
  out["failed"] = std::move(failed);

  Json per_batch = Json::array();
  for (int t = 0; t < batches; ++t) {
    std::vector<double> flr, regret_abs, regret_pct, hgt, oracle;
    for (const RunResult* run : ok) {
      const BatchRecord& rec = run->batches[t];
      flr.push_back(rec.flr);
      regret_abs.push_back(rec.regret_abs);
      regret_pct.push_back(rec.regret_pct);
      hgt.push_back(rec.hgt_expected_output);
      oracle.push_back(rec.oracle_expected_output);
    }
    per_batch.push_back(Json{{"batch", t + 1},
                             {"flr", moments_json(flr)},
                             {"regret_abs", moments_json(regret_abs)},
                             {"regret_pct", moments_json(regret_pct)},
                             {"hgt_expected", moments_json(hgt)},
                             {"oracle_expected", moments_json(oracle)}});
  }
  out["per_batch"] = std::move(per_batch);

  // Posterior means of theta per cell: trajectory of cross-replication mean/SD
  // and 0.01-wide histograms. Uninformative cells are left out of both.
  Json cells = Json::array();
  for (int a = 0; a < k; ++a) {
    for (int b = 0; b < k; ++b) {
      Json by_batch = Json::array();
      for (int t = 0; t < batches; ++t) {
        std::vector<double> means;
        std::vector<int> counts(kHistogramBins, 0);
        for (const RunResult* run : ok) {
          const GaussianBelief& belief = run->batches[t].posterior_after.belief(a, b);
          if (!belief.informative()) continue;
          means.push_back(belief.mean);
          ++counts[histogram_bin(belief.mean)];
        }
        const Moments m = moments(means);
        by_batch.push_back(Json{{"batch", t + 1},
                                {"informative", m.count},
                                {"mean", m.mean},
                                {"sd", m.sd},
                                {"histogram", counts}});
      }
      cells.push_back(Json{{"a", a + 1},
                           {"b", b + 1},
                           {"true", config.theta_true(a, b)},
                           {"by_batch", std::move(by_batch)}});
    }
  }
  out["theta_posterior_mean"] = Json{{"bin_width", 1.0 / kHistogramBins},
                                     {"bins", kHistogramBins},
                                     {"cells", std::move(cells)}};
  return out;
}

std::string format_summary(const Json& summary) {
  std::ostringstream os;
  os << "scenario " << summary.at("scenario").get<std::string>() << ": "
     << summary.at("replications_ok").get<int>() << " of "
     << summary.at("replications_expected").get<int>() << " replications ok\n";
  os << std::left << std::setw(7) << "batch" << std::right << std::setw(18) << "FLR % (sd)"
     << std::setw(20) << "regret (sd)" << std::setw(12) << "regret %" << std::setw(12) << "HGT"
     << std::setw(12) << "oracle" << "\n";
  os << std::fixed;
  for (const auto& b : summary.at("per_batch")) {
    const auto mean = [&](const char* key) { return b.at(key).at("mean").get<double>(); };
    const auto sd = [&](const char* key) { return b.at(key).at("sd").get<double>(); };
    std::ostringstream flr;
    flr << std::fixed << std::setprecision(2) << 100.0 * mean("flr") << " (" << 100.0 * sd("flr") << ")";
    std::ostringstream regret;
    regret << std::fixed << std::setprecision(2) << mean("regret_abs") << " (" << sd("regret_abs") << ")";
    os << std::left << std::setw(7) << b.at("batch").get<int>() << std::right << std::setw(18)
       << flr.str() << std::setw(20) << regret.str() << std::setprecision(2) << std::setw(12)
       << mean("regret_pct") << std::setw(12) << mean("hgt_expected") << std::setw(12)
       << mean("oracle_expected") << "\n";
  }
  for (const auto& f : summary.at("failed"))
    os << "failed replication " << f.at("replication").get<int>() << " (seed "
       << f.at("seed").get<std::uint64_t>() << "): " << f.at("error").get<std::string>() << "\n";
  return os.str();
}

void write_atomic(const std::filesystem::path& path, const std::string& content) {
  static std::atomic<unsigned> counter{0};
  std::filesystem::path tmp = path;
  tmp += ".tmp" + std::to_string(counter++);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot rename into " + path.string());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  if (in.bad()) throw IoError("failed reading " + path.string());
  return os.str();
}

Json read_json(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw CorruptError(path.string() + ": not valid JSON: " + e.what());
  }
}

}  // namespace hgt::io
