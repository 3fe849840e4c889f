#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "mixbridge/gmm.hpp"

namespace mixbridge {

/// Uniform point clouds filling simple planar shapes, generated by rejection
/// from the bounding square [center - scale, center + scale]^2. Attempt a
/// draws its two coordinates from stream (seed, a).
struct SilhouetteSpec {
  std::string shape;  // "crescent" or "star"
  std::size_t n_points = 4000;
  std::uint64_t seed = 0;
  double center_x = 0.0;
  double center_y = 0.0;
  double scale = 1.0;
};

/// Unit disk minus a disk of radius 0.78 centred at (0.42, 0).
bool inside_crescent(double x, double y);
/// Five-armed star polygon, outer radius 1, inner radius 0.45, first arm on +y.
bool inside_star(double x, double y);

PointSet silhouette_points(const SilhouetteSpec& spec);

}  // namespace mixbridge
