// hgt: run adaptive network-formation scenarios, summarize their logs, and
// print oracle allocations.
//
// Exit codes: 0 ok, 1 unexpected failure, 2 schema/usage error, 3 infeasible
// scenario, 4 I/O error, 5 corrupt or mismatching logs, 6 partial log set.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <regex>
#include <string>

#include <CLI11.hpp>

#include "hgt/bandit.hpp"
#include "hgt/io.hpp"

namespace fs = std::filesystem;
using namespace hgt;

namespace {

enum Exit : int {
  kOk = 0,
  kFailure = 1,
  kSchema = 2,
  kInfeasible = 3,
  kIo = 4,
  kCorrupt = 5,
  kPartial = 6,
};

constexpr const char* kOutputRootEnv = "HGT_OUTPUT_ROOT";

int report(int code, const std::string& kind, const std::string& message) {
  io::Json err{{"error", kind}, {"message", message}, {"exit_code", code}};
  std::cerr << err.dump() << "\n";
  return code;
}

// Maps library exceptions to exit codes with a one-line JSON error on stderr.
template <typename F>
int guarded(F&& body) {
  try {
    return body();
  } catch (const InfeasibleError& e) {
    return report(kInfeasible, "infeasible", std::string(e.what()) + " [bound: " + e.bound() + "]");
  } catch (const io::IoError& e) {
    return report(kIo, "io", e.what());
  } catch (const fs::filesystem_error& e) {
    return report(kIo, "io", e.what());
  } catch (const io::CorruptError& e) {
    return report(kCorrupt, "corrupt", e.what());
  } catch (const ValidationError& e) {
    return report(kSchema, "schema", e.what());
  } catch (const std::exception& e) {
    return report(kFailure, "failure", e.what());
  }
}

fs::path output_dir_for(const io::ScenarioFile& scenario, const std::optional<std::string>& flag) {
  if (flag) return *flag;
  if (scenario.output_dir) return *scenario.output_dir;
  if (const char* root = std::getenv(kOutputRootEnv); root && *root) return fs::path(root) / scenario.config.name;
  return fs::path("hgt-runs") / scenario.config.name;
}

std::string dump(const io::Json& doc) { return doc.dump(1) + "\n"; }

bool is_log_name(const std::string& name) {
  static const std::regex pattern(R"(replication_\d{4,}\.json)");
  return std::regex_match(name, pattern);
}

struct RunOptions {
  std::string scenario;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<int> replications;
  int jobs = 1;
};

int cmd_run(const RunOptions& opt) {
  io::ScenarioFile scenario = io::load_scenario(opt.scenario);
  if (opt.seed) scenario.config.master_seed = *opt.seed;
  if (opt.replications) scenario.config.replications = *opt.replications;
  scenario.config.validate();
  const ScenarioConfig& config = scenario.config;
  if (opt.jobs < 1) throw ValidationError("--jobs must be >= 1");

  const fs::path dir = output_dir_for(scenario, opt.out);
  fs::create_directories(dir);
  // Logs from an earlier run into the same directory would mix into summaries.
  for (const auto& entry : fs::directory_iterator(dir))
    if (is_log_name(entry.path().filename().string())) fs::remove(entry.path());
  fs::remove(dir / "summary.json");
  fs::remove(dir / "metrics.csv");
  io::write_atomic(dir / "scenario.json", dump(io::scenario_to_json(scenario)));

  int done = 0;
  auto on_complete = [&](const RunResult& run) {
    io::write_atomic(dir / io::log_file_name(run.replication), io::run_to_json(run, config.name).dump() + "\n");
    ++done;
    if (scenario.verbosity >= 1) {
      std::cerr << "replication " << run.replication << " " << (run.failed ? "FAILED" : "done") << " ("
                << done << "/" << config.replications << ", " << run.elapsed_seconds << " s)\n";
    }
    if (run.failed && scenario.verbosity >= 1) std::cerr << "  " << run.error << "\n";
  };
  const std::vector<RunResult> runs = run_scenario(config, opt.jobs, {}, on_complete);

  io::write_atomic(dir / "metrics.csv", io::metrics_csv(runs));
  const io::Json summary = io::summarize(runs, config, config.replications);
  io::write_atomic(dir / "summary.json", dump(summary));
  std::cout << io::format_summary(summary);
  std::cout << "outputs in " << dir.string() << "\n";

  int failed = 0;
  bool infeasible = false;
  for (const RunResult& run : runs) {
    if (!run.failed) continue;
    ++failed;
    infeasible = infeasible || run.error_kind == "infeasible";
  }
  if (failed == 0) return kOk;
  return report(infeasible ? kInfeasible : kFailure, infeasible ? "infeasible" : "replication_failed",
                std::to_string(failed) + " of " + std::to_string(config.replications) +
                    " replications failed; see summary.json");
}

int cmd_summarize(const std::string& dir_arg) {
  const fs::path dir = dir_arg;
  if (!fs::is_directory(dir)) throw io::IoError(dir.string() + " is not a directory");
  std::vector<fs::path> logs;
  for (const auto& entry : fs::directory_iterator(dir))
    if (is_log_name(entry.path().filename().string())) logs.push_back(entry.path());
  if (logs.empty()) throw io::IoError("no replication logs in " + dir.string());
  if (!fs::exists(dir / "scenario.json")) throw io::IoError("missing scenario.json in " + dir.string());
  std::sort(logs.begin(), logs.end());

  io::ScenarioFile scenario;
  try {
    scenario = io::parse_scenario(io::read_json(dir / "scenario.json"));
  } catch (const ValidationError& e) {
    throw io::CorruptError(std::string("scenario.json: ") + e.what());
  }
  const ScenarioConfig& config = scenario.config;

  std::vector<RunResult> runs;
  std::vector<bool> seen(config.replications, false);
  for (const fs::path& path : logs) {
    const io::Json doc = io::read_json(path);
    RunResult run;
    try {
      run = io::run_from_json(doc);
    } catch (const io::CorruptError& e) {
      throw io::CorruptError(path.filename().string() + ": " + e.what());
    }
    if (doc.at("scenario").get<std::string>() != config.name)
      throw io::CorruptError(path.filename().string() + " belongs to scenario " +
                             doc.at("scenario").get<std::string>());
    if (run.replication < 0 || run.replication >= config.replications || seen[run.replication] ||
        path.filename().string() != io::log_file_name(run.replication))
      throw io::CorruptError(path.filename().string() + ": unexpected replication index " +
                             std::to_string(run.replication));
    seen[run.replication] = true;
    runs.push_back(std::move(run));
  }
  std::sort(runs.begin(), runs.end(),
            [](const RunResult& a, const RunResult& b) { return a.replication < b.replication; });

  const io::Json summary = io::summarize(runs, config, config.replications);
  std::cout << io::format_summary(summary);

  const int found = static_cast<int>(runs.size());
  if (found < config.replications) {
    std::string missing;
    int listed = 0;
    for (int r = 0; r < config.replications && listed < 10; ++r) {
      if (seen[r]) continue;
      missing += (listed++ ? ", " : "") + std::to_string(r);
    }
    if (config.replications - found > listed) missing += ", ...";
    return report(kPartial, "partial_data",
                  "partial data: found " + std::to_string(found) + " of " +
                      std::to_string(config.replications) + " replication logs (missing " + missing + ")");
  }

  if (!fs::exists(dir / "summary.json"))
    return report(kCorrupt, "corrupt", "summary.json is missing; recomputed table printed above");
  const io::Json stored = io::read_json(dir / "summary.json");
  if (stored != summary)
    return report(kCorrupt, "mismatch", "summary.json does not match the summary recomputed from logs");
  std::cout << "summary.json verified against " << found << " replication logs\n";
  return kOk;
}

int cmd_oracle(const std::string& path, bool as_json) {
  const io::ScenarioFile scenario = io::load_scenario(path);
  const ScenarioConfig& config = scenario.config;
  const TypeVector z = initial_truth(config, 0);
  const auto [match, value] = oracle_policy(config.theta_true, z, config.constraints);

  if (as_json) {
    io::Json out = io::match_to_json(match);
    out["scenario"] = config.name;
    out["type_counts"] = z.counts();
    out["expected_output"] = value;
    std::cout << out.dump(1) << "\n";
    return kOk;
  }
  std::cout << "scenario " << config.name << ": n=" << config.n << " K=" << config.k
            << " m=" << config.m_per_batch << "\n";
  std::cout << "type counts (types drawn once from the scenario seed):";
  const std::vector<int> counts = z.counts();
  for (int a = 0; a < config.k; ++a) std::cout << " " << a + 1 << ":" << counts[a];
  std::cout << "\nallocation:\n";
  const Matrix w = pair_weights(config.theta_true.values());
  for (int a = 0; a < config.k; ++a)
    for (int b = a; b < config.k; ++b)
      std::cout << "  (" << a + 1 << "," << b + 1 << ") count " << match.allocation.count(a, b)
                << " weight " << io::format_double(w(a, b)) << "\n";
  std::cout << "expected output " << io::format_double(value) << "\n";
  for (const std::string& warning : match.warnings) std::cout << "warning: " << warning << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive network formation with latent agent types"};
  app.require_subcommand(1);

  RunOptions run_opt;
  CLI::App* run = app.add_subcommand("run", "Run all replications of a scenario");
  run->add_option("scenario", run_opt.scenario, "Scenario JSON file")->required();
  run->add_option("--out", run_opt.out, "Output directory");
  run->add_option("--seed", run_opt.seed, "Override master_seed");
  run->add_option("--replications", run_opt.replications, "Override replications");
  run->add_option("--jobs", run_opt.jobs, "Replications run in parallel")->capture_default_str();

  std::string log_dir;
  CLI::App* summarize = app.add_subcommand("summarize", "Recompute and verify a run's summary");
  summarize->add_option("dir", log_dir, "Run output directory")->required();

  std::string oracle_path;
  bool oracle_json = false;
  CLI::App* oracle = app.add_subcommand("oracle", "Print the oracle allocation for a scenario");
  oracle->add_option("scenario", oracle_path, "Scenario JSON file")->required();
  oracle->add_flag("--json", oracle_json, "Emit JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kSchema;
  }

  if (*run) return guarded([&] { return cmd_run(run_opt); });
  if (*summarize) return guarded([&] { return cmd_summarize(log_dir); });
  return guarded([&] { return cmd_oracle(oracle_path, oracle_json); });
}
