#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
#include <json.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using Json = nlohmann::json;

namespace {

const fs::path kBinary = MIXBRIDGE_CLI;

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("mixbridge_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

struct Run {
  int code;
  std::string out;
};

Run run(const std::string& args, const fs::path& dir) {
  const fs::path stdout_file = dir / "stdout.txt";
  const std::string cmd = kBinary.string() + " " + args + " > " + stdout_file.string() + " 2> " +
                          (dir / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  std::ifstream in(stdout_file);
  std::stringstream ss;
  ss << in.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
}

Json read_json(const fs::path& p) {
  std::ifstream in(p);
  return Json::parse(in);
}

Json tiny_config() {
  return Json{{"name", "tiny"},
              {"eps", 0.35},
              {"seed", 5},
              {"source", {{"weights", {0.65, 0.35}}, {"means", {{-3.0}, {2.0}}}, {"covs", {{{0.2025}}, {{0.36}}}}}},
              {"target", {{"weights", {0.35, 0.65}}, {"means", {{-1.5}, {3.5}}}, {"covs", {{{0.3025}}, {{0.2025}}}}}},
              {"flow_slices", {{"n_per_axis", 21}}},
              {"kinetic", {{"n_time", 11}, {"n_samples", 100}}},
              {"simulation", {{"n_particles", 200}, {"n_steps", 50}, {"paths_kept", 5}}},
              {"direct_sb", {{"enabled", true}, {"n_per_axis", 101}}},
              {"diagnostics", {{"enabled", true}, {"n_particles", 50}, {"n_steps", 20}}},
              {"repeats", 1}};
}

}  // namespace

TEST_CASE("presets lists every preset") {
  const fs::path dir = scratch("presets");
  const Run r = run("presets", dir);
  CHECK(r.code == 0);
  CHECK(r.out == "oned\nthreemode\neightmode\nshapes\nprior_ablation\n");
}

TEST_CASE("full run from a config file") {
  const fs::path dir = scratch("full");
  std::ofstream(dir / "tiny.json") << tiny_config().dump(2);
  const Run r = run("experiment --config " + (dir / "tiny.json").string() + " --out " + (dir / "out").string(), dir);
  REQUIRE(r.code == 0);
  for (const char* f : {"config.json", "endpoints.json", "cost_matrix.json", "coupling.json", "flow_slices.csv",
                        "paths.csv", "terminal_validation.json", "direct_sb.json", "gap_report.json", "summary.json",
                        "timings.json"})
    CHECK_MESSAGE(fs::exists(dir / "out" / f), f);
  const Json summary = read_json(dir / "out" / "summary.json");
  CHECK(Json::parse(r.out) == summary);
  CHECK(summary.at("seed") == 5);

  const Run again = run("experiment --config " + (dir / "tiny.json").string() + " --seed 9 --out " +
                            (dir / "seeded").string(),
                        dir);
  CHECK(again.code == 0);
  CHECK(read_json(dir / "seeded" / "summary.json").at("seed") == 9);
}

TEST_CASE("single stages write only their artifacts") {
  const fs::path dir = scratch("stages");
  const Run r = run("pairwise oned --out " + (dir / "p").string(), dir);
  CHECK(r.code == 0);
  CHECK(fs::exists(dir / "p" / "cost_matrix.json"));
  CHECK(!fs::exists(dir / "p" / "coupling.json"));

  const Run c = run("couple prior_ablation --repeats 1 --out " + (dir / "c").string(), dir);
  CHECK(c.code == 0);
  for (const char* f : {"coupling.json", "coupling_product.json", "coupling_diagonal.json", "coupling_shifted3.json"})
    CHECK_MESSAGE(fs::exists(dir / "c" / f), f);
  CHECK(!fs::exists(dir / "c" / "paths.csv"));
}

TEST_CASE("error exits") {
  const fs::path dir = scratch("errors");
  const Run unknown = run("experiment nope --out " + (dir / "u").string(), dir);
  CHECK(unknown.code == 2);
  CHECK(read_json(dir / "u" / "error.json").at("error") == "UnknownPreset");

  Json bad = tiny_config();
  bad["eps"] = -1.0;
  std::ofstream(dir / "bad.json") << bad.dump();
  const Run invalid = run("experiment --config " + (dir / "bad.json").string() + " --out " + (dir / "b").string(), dir);
  CHECK(invalid.code == 2);

  Json slow = tiny_config();
  slow["sinkhorn"] = {{"max_iter", 2}};
  std::ofstream(dir / "slow.json") << slow.dump();
  const Run nc = run("couple --config " + (dir / "slow.json").string() + " --out " + (dir / "n").string(), dir);
  CHECK(nc.code == 3);
  const Json err = read_json(dir / "n" / "error.json");
  CHECK(err.at("error") == "NotConverged");
  CHECK(err.at("iterations") == 2);
  CHECK(err.at("residuals").size() == 2);

  CHECK(run("experiment --bogus-flag", dir).code == 2);
  CHECK(run("", dir).code == 2);
}
