#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "helpers.hpp"
#include "mixbridge/error.hpp"
#include "mixbridge/experiment.hpp"

using namespace mixbridge;
using namespace testutil;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("mixbridge_unit_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ErrorKind kind_of(const Json& j) {
  try {
    config_from_json(j);
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::Io;  // sentinel: no throw
}

// Small 1D config that runs every stage in well under a second.
ExperimentConfig tiny_config() {
  ExperimentConfig c = preset("oned");
  c.name = "tiny";
  c.flow_slices.n_per_axis = 21;
  c.kinetic.n_time = 11;
  c.kinetic.n_samples = 100;
  c.simulation.n_particles = 200;
  c.simulation.n_steps = 50;
  c.simulation.paths_kept = 5;
  c.direct_sb.n_per_axis = 101;
  c.diagnostics.n_particles = 50;
  c.diagnostics.n_steps = 20;
  c.repeats = 1;
  return c;
}

}  // namespace

TEST_CASE("preset names and unknown presets") {
  const auto names = preset_names();
  CHECK(names == std::vector<std::string>{"oned", "threemode", "eightmode", "shapes", "prior_ablation"});
  for (const auto& n : names) CHECK(preset(n).name == n);
  try {
    preset("nope");
    FAIL("no throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::UnknownPreset);
  }
}

TEST_CASE("preset endpoints") {
  const GaussianMixture a = resolve_mixture(preset("oned").source);
  CHECK(a.size() == 2);
  CHECK(a.weight(0) == 0.65);
  CHECK(a.component(1).cov().matrix()(0, 0) == doctest::Approx(0.36));

  const GaussianMixture t = resolve_mixture(preset("eightmode").target);
  CHECK(t.size() == 8);
  for (int j = 0; j < 8; ++j) {
    const Vector m = t.component(j).mean();
    CHECK(m.norm() == doctest::Approx(5.1));
    const double angle = std::atan2(m[1], m[0]);
    CHECK(std::remainder(angle - 2.0 * std::numbers::pi * j / 8.0, 2.0 * std::numbers::pi) ==
          doctest::Approx(0.0).epsilon(1e-12));
    const Eigen::SelfAdjointEigenSolver<Matrix> es(t.component(j).cov().matrix());
    CHECK(es.eigenvalues()[0] == doctest::Approx(0.10));
    CHECK(es.eigenvalues()[1] == doctest::Approx(0.16));
    // The long axis points radially.
    CHECK(std::abs(es.eigenvectors().col(1).dot(m.normalized())) == doctest::Approx(1.0));
  }
  CHECK(preset("prior_ablation").priors.size() == 3);
}

TEST_CASE("config JSON round trip") {
  for (const auto& n : preset_names()) {
    const ExperimentConfig c = preset(n);
    const Json j = to_json(c);
    CHECK(to_json(config_from_json(j)) == j);
  }
  const Json minimal = {{"source", to_json(oned_source())}, {"target", to_json(oned_target())}};
  const ExperimentConfig c = config_from_json(minimal);
  CHECK(c.eps == 0.1);
  CHECK(c.priors.size() == 1);
  CHECK(!c.direct_sb.enabled);
}

TEST_CASE("invalid configs") {
  const Json good = {{"source", to_json(oned_source())}, {"target", to_json(oned_target())}};
  CHECK(kind_of(Json::array()) == ErrorKind::InvalidConfig);
  CHECK(kind_of(Json{{"source", good["source"]}}) == ErrorKind::InvalidConfig);
  Json j = good;
  j["eps"] = -1.0;
  CHECK(kind_of(j) == ErrorKind::InvalidConfig);
  j = good;
  j["eps"] = "small";
  CHECK(kind_of(j) == ErrorKind::InvalidConfig);
  j = good;
  j["priors"] = Json::array();
  CHECK(kind_of(j) == ErrorKind::InvalidConfig);
  j = good;
  j["priors"] = Json::array({{{"pattern", "zigzag"}}});
  CHECK(kind_of(j) == ErrorKind::InvalidConfig);
  j = good;
  j["repeats"] = 0;
  CHECK(kind_of(j) == ErrorKind::InvalidConfig);
  j = good;
  j["simulation"] = {{"n_steps", 0}};
  CHECK(kind_of(j) == ErrorKind::InvalidConfig);
  j = good;
  j["flow_slices"] = {{"times", {0.0, 1.5}}};
  CHECK(kind_of(j) == ErrorKind::InvalidConfig);
}

TEST_CASE("mixture specifications") {
  const fs::path dir = scratch("mixtures");
  write_json_atomic(dir / "a.json", to_json(threemode_source()));
  const GaussianMixture from_file = resolve_mixture(Json{{"file", "a.json"}}, dir);
  CHECK(from_file.size() == 3);
  CHECK((from_file.component(2).mean() - threemode_source().component(2).mean()).norm() == 0.0);

  const PointSet pts = sample(threemode_source(), 3000, 3);
  write_points_csv(dir / "pts.csv", pts);
  const GaussianMixture fitted =
      resolve_mixture(Json{{"points_csv", "pts.csv"}, {"n_components", 3}, {"seed", 4}}, dir);
  CHECK(fitted.size() == 3);
  CHECK((fitted.mean() - threemode_source().mean()).norm() < 0.1);

  const GaussianMixture crescent = resolve_mixture(preset("shapes").source);
  CHECK(crescent.size() == 10);
  CHECK(crescent.mean()[0] < -2.0);
  CHECK_THROWS_AS(resolve_mixture(Json{{"nothing", 1}}), Error);
  CHECK_THROWS_AS(resolve_mixture(Json{{"file", "missing.json"}}, dir), Error);
}

TEST_CASE("stage names") {
  CHECK(stage_from_string("pairwise") == Stage::Pairwise);
  CHECK(stage_from_string("couple") == Stage::Couple);
  CHECK(stage_from_string("experiment") == Stage::All);
  CHECK_THROWS_AS(stage_from_string("bake"), Error);
}

TEST_CASE("experiment writes its artifacts and a deterministic summary") {
  const fs::path dir = scratch("run");
  const ExperimentConfig c = tiny_config();
  const Json s1 = run_experiment(c, dir / "a");
  const Json s2 = run_experiment(c, dir / "b");
  for (const char* f : {"config.json", "endpoints.json", "cost_matrix.json", "coupling.json", "flow_slices.csv",
                        "paths.csv", "terminal_validation.json", "direct_sb.json", "gap_report.json", "summary.json",
                        "timings.json"})
    CHECK_MESSAGE(fs::exists(dir / "a" / f), f);
  CHECK(s1 == s2);
  CHECK(s1.at("schema") == kSummarySchema);
  std::ifstream fa(dir / "a" / "summary.json"), fb(dir / "b" / "summary.json");
  const std::string ta((std::istreambuf_iterator<char>(fa)), {}), tb((std::istreambuf_iterator<char>(fb)), {});
  CHECK(ta == tb);

  const fs::path only = dir / "pairwise";
  run_experiment(c, only, Stage::Pairwise);
  CHECK(fs::exists(only / "cost_matrix.json"));
  CHECK(!fs::exists(only / "coupling.json"));
}
