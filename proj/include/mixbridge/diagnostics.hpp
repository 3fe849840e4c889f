#pragma once

#include <cstdint>
#include <vector>

#include "mixbridge/projected_flow.hpp"
#include "mixbridge/simulate.hpp"

namespace mixbridge {

/// Floor below which a Monte-Carlo estimate counts as zero regardless of its
/// standard error (rounding noise of an exactly vanishing quantity).
inline constexpr double kZeroFloor = 1e-12;

/// Path posterior over labels for a path sampled at t_k = k / n (rows of
/// `path`, n + 1 of them). Entry k is the N1 x N2 posterior given x_0..x_k,
/// using Euler transition densities; zero off the support of pi.
std::vector<Matrix> label_filter(const BridgeGrid& bridges, const Coupling& pi, const PointSet& path);

struct Estimate {
  double value;
  double std_err;
};

struct GapOptions {
  std::size_t n_particles = 4000;
  int n_steps = 1500;
  std::uint64_t seed = 0;
};

struct GapEstimates {
  Estimate markov;
  Estimate proj;
  /// Per-path markov + proj, so correlation between the two is accounted for.
  Estimate sum;
};

/// Simulates labeled paths (same streams as simulate_labeled), filters the
/// label along each path, and accumulates 1/2 sum |b - ubar|^2 dt and
/// eps * KL(terminal posterior || reference posterior). The reference
/// posterior is eta_ij p_i(x0) normalized: zero-drift transitions do not
/// depend on the label.
GapEstimates gap_estimates(const ProjectedFlow& flow, const Coupling& eta, const GapOptions& options);

Estimate markov_gap(const ProjectedFlow& flow, const GapOptions& options);
Estimate projection_gap(const BridgeGrid& bridges, const Coupling& pi, const Coupling& eta,
                        const GapOptions& options);

struct GapReport {
  double j_lift;
  double label_kl;  // eps * KL(pi || eta)
  Estimate j_proj;
  Estimate markov_gap;
  Estimate proj_gap;
  Estimate gap_sum;
  /// |(markov + proj)(n) - (markov + proj)(n / 2)| with the same seed.
  double dt_band;
  double decomposition_residual;
};

/// (j_lift + label_kl) - (j_proj + markov_gap + proj_gap)
double decomposition_check(const GapReport& report);

/// 3 combined standard errors plus the time-step band.
double decomposition_tolerance(const GapReport& report);

GapReport gap_report(const ProjectedFlow& flow, const Coupling& eta, const CostMatrix& costs,
                     const KineticEnergy& energy, const GapOptions& options);

Json to_json(const GapReport& report);

}  // namespace mixbridge
