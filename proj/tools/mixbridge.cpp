// Batch command line front end: runs a preset or a JSON config through the
// pipeline and writes artifacts under the output directory.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "mixbridge/error.hpp"
#include "mixbridge/experiment.hpp"

namespace fs = std::filesystem;
using namespace mixbridge;

namespace {

struct RunArgs {
  std::string preset;
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> repeats;
};

void add_run_options(CLI::App* cmd, RunArgs& args) {
  cmd->add_option("preset", args.preset, "preset name (see `mixbridge presets`)");
  cmd->add_option("--config", args.config, "JSON config file; overrides the preset")->check(CLI::ExistingFile);
  cmd->add_option("--out", args.out, "output directory");
  cmd->add_option("--seed", args.seed, "random seed");
  cmd->add_option("--repeats", args.repeats, "timing repeats of the lifted solve")->check(CLI::PositiveNumber);
}

void report_error(const fs::path& out_dir, const Json& doc) {
  std::cerr << doc.dump() << "\n";
  if (out_dir.empty()) return;
  try {
    fs::create_directories(out_dir);
    write_json_atomic(out_dir / "error.json", doc);
  } catch (...) {
  }
}

int run(const std::string& stage_name, const RunArgs& args) {
  fs::path out_dir = args.out;
  try {
    ExperimentConfig config;
    fs::path base_dir;
    if (!args.config.empty()) {
      base_dir = fs::path(args.config).parent_path();
      config = config_from_json(read_json_file(args.config));
    } else if (!args.preset.empty()) {
      config = preset(args.preset);
    } else {
      fail(ErrorKind::InvalidConfig, "give a preset name or --config FILE");
    }
    if (args.seed) config.seed = *args.seed;
    if (args.repeats) config.repeats = *args.repeats;
    out_dir = args.out.empty() ? fs::path(config.output_dir) : fs::path(args.out);
    const Json summary = run_experiment(config, out_dir, stage_from_string(stage_name), base_dir);
    std::cout << summary.dump(2) << "\n";
    return 0;
  } catch (const NotConverged& e) {
    report_error(out_dir, Json{{"error", "NotConverged"},
                               {"message", e.what()},
                               {"iterations", e.iterations()},
                               {"residuals", e.residuals()}});
    return 3;
  } catch (const Error& e) {
    report_error(out_dir, Json{{"error", to_string(e.kind())}, {"message", e.what()}});
    return 2;
  } catch (const std::exception& e) {
    report_error(out_dir, Json{{"error", "Internal"}, {"message", e.what()}});
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mixbridge: Gaussian-mixture Schroedinger bridges"};
  app.require_subcommand(1);

  RunArgs args;
  const std::vector<std::pair<std::string, std::string>> stages{
      {"experiment", "run every enabled stage"},
      {"pairwise", "pairwise bridge costs"},
      {"couple", "costs and the lifted coupling"},
      {"flow", "coupling, projected flow slices and kinetic energy"},
      {"simulate", "coupling and particle simulation of the projected flow"},
      {"direct", "coupling, kinetic energy and the direct grid bridge"},
      {"diagnose", "coupling, kinetic energy and the gap decomposition"}};
  for (const auto& [name, help] : stages) add_run_options(app.add_subcommand(name, help), args);
  CLI::App* list = app.add_subcommand("presets", "list preset names");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (list->parsed()) {
    for (const auto& name : preset_names()) std::cout << name << "\n";
    return 0;
  }
  for (const auto& [name, help] : stages) {
    if (app.got_subcommand(name)) return run(name, args);
  }
  return 2;
}
