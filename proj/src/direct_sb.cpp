#include "mixbridge/direct_sb.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "mixbridge/error.hpp"
#include "mixbridge/parallel.hpp"

namespace mixbridge {
namespace {

constexpr double kOutsideMassTol = 1e-6;
constexpr double kAbsorbThreshold = 1e100;

double normal_tail(double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); }

std::vector<int> positive_support(const Vector& r) {
  std::vector<int> idx;
  for (Eigen::Index k = 0; k < r.size(); ++k) {
    if (r[k] > 0.0) idx.push_back(static_cast<int>(k));
  }
  return idx;
}

double squared_distance(const PointSet& points, int a, int b) {
  return (points.row(a) - points.row(b)).squaredNorm();
}

}  // namespace

Box default_box(const GaussianMixture& a, const GaussianMixture& b, double n_sigma) {
  require_dims(a.dim(), b.dim(), "box mixtures");
  const int d = a.dim();
  Vector lo = Vector::Constant(d, std::numeric_limits<double>::infinity());
  Vector hi = Vector::Constant(d, -std::numeric_limits<double>::infinity());
  for (const GaussianMixture* m : {&a, &b}) {
    for (int k = 0; k < m->size(); ++k) {
      const auto& g = m->component(k);
      for (int ax = 0; ax < d; ++ax) {
        const double sd = std::sqrt(g.cov().matrix()(ax, ax));
        lo[ax] = std::min(lo[ax], g.mean()[ax] - n_sigma * sd);
        hi[ax] = std::max(hi[ax], g.mean()[ax] + n_sigma * sd);
      }
    }
  }
  return {lo, hi};
}

std::vector<int> axis_counts_for_total(const Box& box, int total) {
  const int d = static_cast<int>(box.lo.size());
  if (total < 8) fail(ErrorKind::DomainError, "grid needs at least 8 nodes");
  const Vector width = box.hi - box.lo;
  const double scale = std::pow(static_cast<double>(total) / width.prod(), 1.0 / d);
  std::vector<int> shape(static_cast<std::size_t>(d));
  for (int ax = 0; ax < d; ++ax) {
    shape[static_cast<std::size_t>(ax)] = std::max(8, static_cast<int>(std::lround(scale * width[ax])));
  }
  return shape;
}

double mass_outside(const GaussianMixture& density, const Box& box) {
  double total = 0.0;
  for (int k = 0; k < density.size(); ++k) {
    const auto& g = density.component(k);
    double tail = 0.0;
    for (int ax = 0; ax < density.dim(); ++ax) {
      const double sd = std::sqrt(g.cov().matrix()(ax, ax));
      tail += normal_tail((g.mean()[ax] - box.lo[ax]) / sd) + normal_tail((box.hi[ax] - g.mean()[ax]) / sd);
    }
    total += density.weight(k) * std::min(1.0, tail);
  }
  return total;
}

GridMeasure discretize(const GaussianMixture& density, const Box& box, const std::vector<int>& shape) {
  const int d = density.dim();
  require_dims(d, box.lo.size(), "box lower corner");
  require_dims(d, box.hi.size(), "box upper corner");
  require_dims(d, static_cast<long>(shape.size()), "grid shape");
  for (int ax = 0; ax < d; ++ax) {
    if (shape[static_cast<std::size_t>(ax)] < 8) fail(ErrorKind::DomainError, "grid needs >= 8 nodes per axis");
    if (!(box.hi[ax] > box.lo[ax])) fail(ErrorKind::DomainError, "box has non-positive width");
  }
  const double outside = mass_outside(density, box);
  if (outside > kOutsideMassTol) {
    std::ostringstream msg;
    msg << "box misses up to " << outside << " of the mass";
    fail(ErrorKind::BoxTooSmall, msg.str());
  }

  std::size_t total = 1;
  double volume = 1.0;
  Vector step(d);
  for (int ax = 0; ax < d; ++ax) {
    const int n = shape[static_cast<std::size_t>(ax)];
    total *= static_cast<std::size_t>(n);
    step[ax] = (box.hi[ax] - box.lo[ax]) / (n - 1);
    volume *= step[ax];
  }
  GridMeasure out{PointSet(static_cast<Eigen::Index>(total), d), shape, volume,
                  Vector(static_cast<Eigen::Index>(total))};
  for (std::size_t idx = 0; idx < total; ++idx) {
    std::size_t rest = idx;
    for (int ax = d - 1; ax >= 0; --ax) {
      const auto n = static_cast<std::size_t>(shape[static_cast<std::size_t>(ax)]);
      out.points(static_cast<Eigen::Index>(idx), ax) = box.lo[ax] + step[ax] * static_cast<double>(rest % n);
      rest /= n;
    }
    out.mass[static_cast<Eigen::Index>(idx)] =
        density.pdf(out.points.row(static_cast<Eigen::Index>(idx)).transpose()) * volume;
  }
  const double sum = out.mass.sum();
  if (!(sum > 0.0)) fail(ErrorKind::BoxTooSmall, "grid carries no mass");
  out.mass /= sum;
  return out;
}

GridMeasure discretize(const GaussianMixture& density, const Box& box, int n_per_axis) {
  return discretize(density, box, std::vector<int>(static_cast<std::size_t>(density.dim()), n_per_axis));
}

GridBridge solve_direct(const Vector& r0, const Vector& r1, const PointSet& points, double eps,
                        const DirectOptions& options) {
  const auto m = points.rows();
  require_dims(m, r0.size(), "r0");
  require_dims(m, r1.size(), "r1");
  if (!(eps > 0.0)) fail(ErrorKind::DomainError, "eps must be positive");
  for (const Vector* r : {&r0, &r1}) {
    if (r->minCoeff() < 0.0 || std::abs(r->sum() - 1.0) > 1e-12) {
      fail(ErrorKind::InvalidSimplex, "grid measures must be nonnegative and sum to 1");
    }
  }
  const std::vector<int> s0 = positive_support(r0);
  const std::vector<int> s1 = positive_support(r1);
  const auto n0 = static_cast<Eigen::Index>(s0.size());
  const auto n1 = static_cast<Eigen::Index>(s1.size());

  // log normalizer of the heat kernel row over the whole grid
  Vector log_z(n0);
  parallel_for(static_cast<std::size_t>(n0), [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      double z = 0.0;
      for (Eigen::Index l = 0; l < m; ++l) {
        z += std::exp(-squared_distance(points, s0[k], static_cast<int>(l)) / (2.0 * eps));
      }
      log_z[static_cast<Eigen::Index>(k)] = std::log(z);
    }
  });

  Matrix log_k(n0, n1);
  parallel_for(static_cast<std::size_t>(n1), [&](std::size_t begin, std::size_t end) {
    for (std::size_t l = begin; l < end; ++l) {
      for (Eigen::Index k = 0; k < n0; ++k) {
        log_k(k, static_cast<Eigen::Index>(l)) = -squared_distance(points, s0[static_cast<std::size_t>(k)], s1[l]) / (2.0 * eps);
      }
    }
  });

  Vector a0(n0), a1(n1);
  for (Eigen::Index k = 0; k < n0; ++k) a0[k] = r0[s0[static_cast<std::size_t>(k)]];
  for (Eigen::Index l = 0; l < n1; ++l) a1[l] = r1[s1[static_cast<std::size_t>(l)]];

  Vector f = Vector::Zero(n0);
  Vector g = Vector::Zero(n1);
  Matrix kernel = log_k.array().exp().matrix();
  const auto absorb = [&](Vector& a, Vector& b) {
    f += a.array().log().matrix();
    g += b.array().log().matrix();
    a.setOnes();
    b.setOnes();
    kernel = ((log_k.colwise() + f).rowwise() + g.transpose()).array().exp().matrix();
  };

  Vector a = Vector::Ones(n0);
  Vector b = Vector::Ones(n1);
  Vector kb(n0), kta(n1);
  const int limit = options.fixed_iters ? *options.fixed_iters : options.max_iter;
  int iter = 0;
  double row_res = std::numeric_limits<double>::infinity();
  for (;;) {
    kb.noalias() = kernel * b;
    row_res = (a.cwiseProduct(kb) - a0).cwiseAbs().sum();
    const bool done = options.fixed_iters ? iter >= limit : (row_res <= options.tol || iter >= limit);
    if (done) break;
    a = a0.cwiseQuotient(kb);
    kta.noalias() = kernel.transpose() * a;
    b = a1.cwiseQuotient(kta);
    ++iter;
    if (a.maxCoeff() > kAbsorbThreshold || b.maxCoeff() > kAbsorbThreshold ||
        a.minCoeff() < 1.0 / kAbsorbThreshold || b.minCoeff() < 1.0 / kAbsorbThreshold) {
      absorb(a, b);
    }
    if (!a.allFinite() || !b.allFinite()) fail(ErrorKind::NonFinite, "direct scaling diverged");
  }

  Matrix gamma_active = a.asDiagonal() * kernel * b.asDiagonal();
  const Vector rows = gamma_active.rowwise().sum();
  const Vector cols = gamma_active.colwise().sum().transpose();
  row_res = (rows - a0).cwiseAbs().sum();
  const double col_res = (cols - a1).cwiseAbs().sum();
  if (!options.fixed_iters && (row_res > options.tol || col_res > options.tol)) {
    std::ostringstream msg;
    msg << "direct bridge stopped after " << iter << " iterations with residuals (" << row_res
        << ", " << col_res << ")";
    throw NotConverged(msg.str(), iter, {row_res, col_res});
  }

  const Vector phi = a.array().log().matrix() + f;
  const Vector psi = b.array().log().matrix() + g;
  double kl = 0.0;
  for (Eigen::Index k = 0; k < n0; ++k) kl += rows[k] * (phi[k] + log_z[k] - std::log(a0[k]));
  kl += cols.dot(psi);

  Matrix gamma = Matrix::Zero(m, m);
  for (Eigen::Index k = 0; k < n0; ++k) {
    for (Eigen::Index l = 0; l < n1; ++l) gamma(s0[static_cast<std::size_t>(k)], s1[static_cast<std::size_t>(l)]) = gamma_active(k, l);
  }
  return GridBridge{points, r0, r1, std::move(gamma), eps, eps * kl, iter, row_res, col_res};
}

GapComparison compare(double j_proj, const GridBridge& direct) {
  const double gap = j_proj - direct.energy;
  return {gap, gap / direct.energy};
}

Json to_json(const GridBridge& bridge, double wall_time_s) {
  return Json{{"M", bridge.points.rows()},
              {"energy", bridge.energy},
              {"iterations", bridge.iterations},
              {"residuals", Json::array({bridge.row_residual, bridge.col_residual})},
              {"wall_time_s", wall_time_s}};
}

}  // namespace mixbridge
