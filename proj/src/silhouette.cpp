#include "mixbridge/silhouette.hpp"

#include <array>
#include <cmath>
#include <numbers>

#include "mixbridge/error.hpp"

namespace mixbridge {
namespace {

constexpr int kStarArms = 5;
constexpr double kStarInner = 0.45;

std::array<std::array<double, 2>, 2 * kStarArms> star_vertices() {
  std::array<std::array<double, 2>, 2 * kStarArms> v{};
  for (int k = 0; k < 2 * kStarArms; ++k) {
    const double radius = (k % 2 == 0) ? 1.0 : kStarInner;
    const double angle = std::numbers::pi / 2.0 + k * std::numbers::pi / kStarArms;
    v[static_cast<std::size_t>(k)] = {radius * std::cos(angle), radius * std::sin(angle)};
  }
  return v;
}

}  // namespace

bool inside_crescent(double x, double y) {
  const bool in_outer = x * x + y * y <= 1.0;
  const double dx = x - 0.42;
  const bool in_bite = dx * dx + y * y <= 0.78 * 0.78;
  return in_outer && !in_bite;
}

bool inside_star(double x, double y) {
  static const auto vertices = star_vertices();
  // Even-odd ray casting along +x.
  bool inside = false;
  const std::size_t n = vertices.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const double xi = vertices[i][0], yi = vertices[i][1];
    const double xj = vertices[j][0], yj = vertices[j][1];
    if ((yi > y) != (yj > y)) {
      const double cross = xi + (y - yi) * (xj - xi) / (yj - yi);
      if (x < cross) inside = !inside;
    }
  }
  return inside;
}

PointSet silhouette_points(const SilhouetteSpec& spec) {
  bool (*inside)(double, double) = nullptr;
  if (spec.shape == "crescent") {
    inside = &inside_crescent;
  } else if (spec.shape == "star") {
    inside = &inside_star;
  } else {
    fail(ErrorKind::InvalidConfig, "unknown silhouette shape '" + spec.shape + "'");
  }
  if (spec.n_points == 0 || !(spec.scale > 0.0)) {
    fail(ErrorKind::InvalidConfig, "silhouette needs n_points >= 1 and scale > 0");
  }
  PointSet points(static_cast<Eigen::Index>(spec.n_points), 2);
  std::size_t accepted = 0;
  for (std::uint64_t attempt = 0; accepted < spec.n_points; ++attempt) {
    const RandomStream stream(spec.seed, attempt);
    const double u = 2.0 * stream.uniform(stream_tag::kSilhouette, 0, 0) - 1.0;
    const double v = 2.0 * stream.uniform(stream_tag::kSilhouette, 0, 1) - 1.0;
    if (!inside(u, v)) continue;
    points(static_cast<Eigen::Index>(accepted), 0) = spec.center_x + spec.scale * u;
    points(static_cast<Eigen::Index>(accepted), 1) = spec.center_y + spec.scale * v;
    ++accepted;
  }
  return points;
}

}  // namespace mixbridge
