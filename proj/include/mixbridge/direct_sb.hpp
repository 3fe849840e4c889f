#pragma once

#include <optional>
#include <vector>

#include "mixbridge/gmm.hpp"
#include "mixbridge/io.hpp"

namespace mixbridge {

struct Box {
  Vector lo;
  Vector hi;
};

/// Componentwise [min(mean - k sigma), max(mean + k sigma)] over both mixtures.
Box default_box(const GaussianMixture& a, const GaussianMixture& b, double n_sigma = 5.0);

/// Per-axis node counts proportional to the box widths with product close to `total`.
std::vector<int> axis_counts_for_total(const Box& box, int total);

/// Tensor grid, first axis slowest; nodes include the box faces.
struct GridMeasure {
  PointSet points;
  std::vector<int> shape;
  double cell_volume;
  Vector mass;
};

/// Upper bound on the mixture mass outside the box (per-axis union bound).
double mass_outside(const GaussianMixture& density, const Box& box);

/// Density times cell volume at every node, renormalized to sum to one.
/// Throws BoxTooSmall if more than 1e-6 of the mass may lie outside the box.
GridMeasure discretize(const GaussianMixture& density, const Box& box, const std::vector<int>& shape);
GridMeasure discretize(const GaussianMixture& density, const Box& box, int n_per_axis);

struct DirectOptions {
  double tol = 1e-10;
  int max_iter = 20000;
  std::optional<int> fixed_iters;
};

struct GridBridge {
  PointSet points;
  Vector r0;
  Vector r1;
  Matrix gamma;
  double eps;
  /// eps * KL(gamma || r0 (x) q), q the row-normalized heat kernel on the grid.
  double energy;
  int iterations;
  double row_residual;
  double col_residual;
};

/// Scaling iterations against exp(-|y_l - y_k|^2 / (2 eps)) restricted to
/// nodes of positive mass, with log-domain absorption of large scalings.
GridBridge solve_direct(const Vector& r0, const Vector& r1, const PointSet& points, double eps,
                        const DirectOptions& options = {});

struct GapComparison {
  double gap_abs;
  double gap_rel;
};

GapComparison compare(double j_proj, const GridBridge& direct);

/// {"M", "energy", "iterations", "residuals", "wall_time_s"}
Json to_json(const GridBridge& bridge, double wall_time_s);

}  // namespace mixbridge
