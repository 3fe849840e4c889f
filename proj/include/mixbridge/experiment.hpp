#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mixbridge/coupling.hpp"
#include "mixbridge/direct_sb.hpp"
#include "mixbridge/io.hpp"

namespace mixbridge {

inline constexpr const char* kSummarySchema = "mixbridge.summary/1";

struct NamedPrior {
  std::string name;
  PriorSpec spec;
};

struct SinkhornConfig {
  double tol = 1e-12;
  int max_iter = 10000;
  std::optional<int> fixed_iters;
};

struct FlowSliceConfig {
  bool enabled = true;
  std::vector<double> times{0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0};
  int n_per_axis = 201;
};

struct KineticConfig {
  bool enabled = true;
  int n_time = 101;
  int n_samples = 10000;
};

struct SimulationConfig {
  bool enabled = true;
  std::size_t n_particles = 30000;
  int n_steps = 800;
  int record_every = 0;
  std::size_t paths_kept = 100;
};

struct DirectConfig {
  bool enabled = false;
  std::optional<int> n_per_axis;
  std::optional<int> n_total_nodes;
  double tol = 1e-10;
  int max_iter = 20000;
  std::optional<int> fixed_iters;
};

struct DiagnosticsConfig {
  bool enabled = false;
  std::size_t n_particles = 2000;
  int n_steps = 800;
};

/// Everything an experiment needs. Endpoint mixtures stay as their JSON
/// specification: inline {"weights", "means", "covs"}, {"file": path},
/// {"points_csv": path, "n_components", "seed"} or
/// {"silhouette": {...}, "n_components", "seed"}.
struct ExperimentConfig {
  std::string name = "custom";
  double eps = 0.1;
  std::uint64_t seed = 1;
  Json source;
  Json target;
  std::vector<NamedPrior> priors{{"product", {}}};
  SinkhornConfig sinkhorn;
  int n_quad = kDefaultQuadNodes;
  FlowSliceConfig flow_slices;
  KineticConfig kinetic;
  SimulationConfig simulation;
  DirectConfig direct_sb;
  DiagnosticsConfig diagnostics;
  int repeats = 5;
  std::string output_dir = "out";
};

/// Throws InvalidConfig on missing or out-of-range fields.
ExperimentConfig config_from_json(const Json& j);
Json to_json(const ExperimentConfig& config);

std::vector<std::string> preset_names();
/// Throws UnknownPreset.
ExperimentConfig preset(const std::string& name);

/// Builds a mixture from its JSON specification. Relative paths resolve
/// against `base_dir`.
GaussianMixture resolve_mixture(const Json& spec, const std::filesystem::path& base_dir = {});

enum class Stage { Pairwise, Couple, Flow, Simulate, Direct, Diagnose, All };
Stage stage_from_string(const std::string& name);

/// Runs the pipeline up to `stage` (or only the named stage for Direct and
/// Diagnose) and writes its artifacts under `out_dir`. Returns the summary.
Json run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir,
                    Stage stage = Stage::All, const std::filesystem::path& base_dir = {});

}  // namespace mixbridge
