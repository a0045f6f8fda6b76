#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "hgt/io.hpp"

using namespace hgt;
namespace fs = std::filesystem;

namespace {

const fs::path kScenarios = HGT_SCENARIO_DIR;

fs::path work_dir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "hgt_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

// Runs the CLI with stdout/stderr captured into files under the work dir.
int cli(const std::string& args, const std::string& env = "") {
  const fs::path out = work_dir() / "stdout.txt";
  const fs::path err = work_dir() / "stderr.txt";
  const std::string cmd = env + (env.empty() ? "" : " ") + "\"" + std::string(HGT_CLI_PATH) + "\" " + args +
                          " > \"" + out.string() + "\" 2> \"" + err.string() + "\"";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

std::string last_stdout() { return io::read_file(work_dir() / "stdout.txt"); }
std::string last_stderr() { return io::read_file(work_dir() / "stderr.txt"); }

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

void write_json(const fs::path& path, const io::Json& doc) { io::write_atomic(path, doc.dump(1) + "\n"); }

bool same_tree(const fs::path& a, const fs::path& b) {
  int files = 0;
  for (const auto& entry : fs::directory_iterator(a)) {
    const fs::path other = b / entry.path().filename();
    if (!fs::exists(other)) return false;
    if (io::read_file(entry.path()) != io::read_file(other)) return false;
    ++files;
  }
  int other_files = 0;
  for ([[maybe_unused]] const auto& entry : fs::directory_iterator(b)) ++other_files;
  return files == other_files && files > 0;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage and schema errors exit 2") {
  CHECK(cli("") == 2);
  CHECK(cli("frobnicate") == 2);
  io::Json doc = io::read_json(kScenarios / "toy_n6.json");
  doc["mystery"] = true;
  write_json(work_dir() / "bad_schema.json", doc);
  CHECK(cli("run " + q(work_dir() / "bad_schema.json") + " --out " + q(work_dir() / "never")) == 2);
  CHECK(last_stderr().find("\"error\":\"schema\"") != std::string::npos);
  CHECK(!fs::exists(work_dir() / "never"));
  CHECK(cli("run " + q(kScenarios / "toy_n6.json") + " --jobs 0 --out " + q(work_dir() / "never")) == 2);
}

TEST_CASE("missing files exit 4, infeasible scenarios exit 3") {
  CHECK(cli("run " + q(work_dir() / "does_not_exist.json")) == 4);
  io::Json doc = io::read_json(kScenarios / "toy_n6.json");
  doc["m_per_batch"] = 12;  // 2m = 24 > n * d_high = 18
  write_json(work_dir() / "infeasible.json", doc);
  CHECK(cli("run " + q(work_dir() / "infeasible.json") + " --out " + q(work_dir() / "inf")) == 3);
  CHECK(last_stderr().find("workload_high") != std::string::npos);
  CHECK(cli("oracle " + q(work_dir() / "infeasible.json")) == 3);
}

TEST_CASE("run twice with the same overrides gives byte-identical outputs") {
  const fs::path a = work_dir() / "det_a", b = work_dir() / "det_b";
  const std::string args = "run " + q(kScenarios / "toy_n6.json") + " --replications 1 --seed 7 --out ";
  REQUIRE(cli(args + q(a)) == 0);
  REQUIRE(cli(args + q(b) + " --jobs 2") == 0);
  CHECK(same_tree(a, b));
  CHECK(fs::exists(a / "replication_0000.json"));
  CHECK(fs::exists(a / "metrics.csv"));
  CHECK(fs::exists(a / "summary.json"));
  CHECK(fs::exists(a / "scenario.json"));
}

TEST_CASE("command-line overrides match editing the file") {
  io::Json doc = io::read_json(kScenarios / "toy_n6.json");
  doc["master_seed"] = 11;
  doc["replications"] = 2;
  write_json(work_dir() / "edited.json", doc);
  const fs::path a = work_dir() / "ovr_flag", b = work_dir() / "ovr_file";
  REQUIRE(cli("run " + q(kScenarios / "toy_n6.json") + " --seed 11 --replications 2 --out " + q(a)) == 0);
  REQUIRE(cli("run " + q(work_dir() / "edited.json") + " --out " + q(b)) == 0);
  CHECK(same_tree(a, b));
}

TEST_CASE("summarize: verify, partial, corrupt and empty") {
  const fs::path dir = work_dir() / "summ";
  REQUIRE(cli("run " + q(kScenarios / "toy_n6.json") + " --out " + q(dir)) == 0);
  const std::string table = last_stdout();
  CHECK(cli("summarize " + q(dir)) == 0);
  CHECK(last_stdout().rfind(table.substr(0, table.find("outputs in")), 0) == 0);

  const std::string summary = io::read_file(dir / "summary.json");
  io::Json tampered = io::Json::parse(summary);
  tampered["per_batch"][0]["flr"]["mean"] = 0.123;
  write_json(dir / "summary.json", tampered);
  CHECK(cli("summarize " + q(dir)) == 5);
  CHECK(last_stderr().find("mismatch") != std::string::npos);
  io::write_atomic(dir / "summary.json", summary);
  CHECK(cli("summarize " + q(dir)) == 0);

  const std::string log = io::read_file(dir / "replication_0001.json");
  io::write_atomic(dir / "replication_0001.json", log.substr(0, log.size() / 2));
  CHECK(cli("summarize " + q(dir)) == 5);
  fs::remove(dir / "replication_0001.json");
  CHECK(cli("summarize " + q(dir)) == 6);
  CHECK(last_stderr().find("found 3 of 4") != std::string::npos);

  fs::create_directories(work_dir() / "empty");
  CHECK(cli("summarize " + q(work_dir() / "empty")) == 4);
  CHECK(cli("summarize " + q(work_dir() / "no_such_dir")) == 4);
}

TEST_CASE("default output directory comes from the environment") {
  const fs::path root = work_dir() / "env_root";
  REQUIRE(cli("run " + q(kScenarios / "toy_n6.json") + " --replications 1", "HGT_OUTPUT_ROOT=" + q(root)) == 0);
  CHECK(fs::exists(root / "toy_n6" / "summary.json"));
}

TEST_CASE("oracle output") {
  REQUIRE(cli("oracle " + q(kScenarios / "k1_degenerate.json") + " --json") == 0);
  const io::Json k1 = io::Json::parse(last_stdout());
  const io::ScenarioFile f1 = io::load_scenario(kScenarios / "k1_degenerate.json");
  CHECK(k1["expected_output"].get<double>() ==
        doctest::Approx(f1.config.m_per_batch * f1.config.theta_true(0, 0)).epsilon(1e-12));

  REQUIRE(cli("oracle " + q(kScenarios / "toy_n6.json") + " --json") == 0);
  const io::Json toy = io::Json::parse(last_stdout());
  const io::ScenarioFile f = io::load_scenario(kScenarios / "toy_n6.json");
  const TypeVector z = initial_truth(f.config, 0);
  CHECK(toy["expected_output"].get<double>() ==
        doctest::Approx(bruteforce_matching(f.config.theta_true.values(), z, f.config.constraints).objective)
            .epsilon(1e-12));

  REQUIRE(cli("oracle " + q(kScenarios / "toy_n6.json")) == 0);
  CHECK(last_stdout().find("expected output") != std::string::npos);
}

}
