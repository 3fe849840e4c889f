#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

#include "mixbridge/projected_flow.hpp"

namespace mixbridge {

struct SimulationOptions {
  std::size_t n_particles = 30000;
  int n_steps = 800;
  std::uint64_t seed = 0;
  /// Keep every k-th step (plus the last). 0 picks about 100 recorded intervals.
  int record_every = 0;
};

/// Euler-Maruyama output. Positions are stored for the recorded steps only.
struct ParticleEnsemble {
  std::vector<double> times;
  std::vector<int> steps;
  std::size_t n_particles = 0;
  int dim = 0;
  int n_steps = 0;
  std::uint64_t seed = 0;
  /// [particle][recorded step][coordinate]
  std::vector<double> positions;
  /// Present for labeled simulation only.
  std::optional<std::vector<std::pair<int, int>>> labels;
  /// Per particle sum of 1/2 |drift|^2 dt along the path.
  std::vector<double> path_energy;

  std::size_t n_records() const { return times.size(); }
  const double* position(std::size_t particle, std::size_t record) const {
    return &positions[(particle * n_records() + record) * static_cast<std::size_t>(dim)];
  }
  /// Recorded index of the given time, or throws DomainError.
  std::size_t record_at(double t) const;
  PointSet slice(std::size_t record) const;
  PointSet terminal() const { return slice(n_records() - 1); }
};

/// Slices at t_k = k / n_steps for k = 0..n_steps-1.
std::vector<FlowSlice> step_slices(const ProjectedFlow& flow, int n_steps);

/// x0 for particle stream `stream`, matching sample(rho0, ...).
void draw_initial(const GaussianMixture& rho0, const std::vector<double>& cumulative,
                  const RandomStream& stream, std::span<double> z, double* out);

/// Row-major flattened (i, j) drawn from pi with stream_tag::kLabel.
std::pair<int, int> draw_label(const Matrix& pi, const std::vector<double>& cumulative,
                               const RandomStream& stream);
std::vector<double> cumulative_plan(const Matrix& pi);

/// x_{k+1} = x_k + ubar(t_k, x_k) dt + sqrt(eps dt) z_k, particle p on stream (seed, p).
ParticleEnsemble simulate_markov(const ProjectedFlow& flow, const GaussianMixture& rho0,
                                 const SimulationOptions& options);

/// Each particle draws (i, j) ~ pi, starts from component i and follows bridge (i, j).
ParticleEnsemble simulate_labeled(const BridgeGrid& bridges, const Coupling& pi,
                                  const SimulationOptions& options);

struct TerminalValidation {
  std::optional<double> ks_1d;
  double mode_weight_err;
  double mode_moment_err;
};

/// Kolmogorov-Smirnov against the target CDF (d = 1 only), then hard assignment
/// to the most probable target component: L1 weight error and the largest
/// Mahalanobis distance between per-mode sample means and component means.
TerminalValidation validate_terminal(const PointSet& terminal, const GaussianMixture& target);
TerminalValidation validate_terminal(const ParticleEnsemble& ensemble, const GaussianMixture& target);

double mixture_cdf_1d(const GaussianMixture& mixture, double x);
double ks_statistic_1d(std::vector<double> samples, const GaussianMixture& mixture);

Json to_json(const TerminalValidation& v);

/// Rows (particle_id, t, x_1..x_d[, label_i, label_j]) for every `every`-th particle.
void write_paths_csv(const std::filesystem::path& path, const ParticleEnsemble& ensemble,
                     std::size_t every);

}  // namespace mixbridge
