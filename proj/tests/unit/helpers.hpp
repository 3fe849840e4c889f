#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "mixbridge/gmm.hpp"

namespace testutil {

using mixbridge::Gaussian;
using mixbridge::GaussianMixture;
using mixbridge::Matrix;
using mixbridge::Vector;

inline Matrix random_spd(std::mt19937_64& rng, int d, double lo = 0.2, double hi = 2.0) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix g(d, d);
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b) g(a, b) = n(rng);
  const Eigen::HouseholderQR<Matrix> qr(g);
  const Matrix q = qr.householderQ();
  Vector lambda(d);
  for (int a = 0; a < d; ++a) lambda[a] = u(rng);
  Matrix s = q * lambda.asDiagonal() * q.transpose();
  return 0.5 * (s + s.transpose());
}

inline Vector random_vector(std::mt19937_64& rng, int d, double scale = 2.0) {
  std::normal_distribution<double> n(0.0, scale);
  Vector v(d);
  for (int a = 0; a < d; ++a) v[a] = n(rng);
  return v;
}

inline Gaussian random_gaussian(std::mt19937_64& rng, int d) {
  return Gaussian(random_vector(rng, d), random_spd(rng, d, 0.2, 1.0));
}

inline GaussianMixture random_mixture(std::mt19937_64& rng, int n, int d) {
  std::uniform_real_distribution<double> u(0.2, 1.0);
  std::vector<double> w(static_cast<std::size_t>(n));
  double total = 0.0;
  for (double& x : w) total += (x = u(rng));
  for (double& x : w) x /= total;
  std::vector<Gaussian> comps;
  for (int k = 0; k < n; ++k) comps.push_back(random_gaussian(rng, d));
  return GaussianMixture(w, comps);
}

inline Gaussian scalar_gaussian(double m, double sd) {
  return Gaussian(Vector::Constant(1, m), Matrix::Constant(1, 1, sd * sd));
}

inline Matrix mat2(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

inline Vector vec2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

inline GaussianMixture oned_source() {
  return GaussianMixture({0.65, 0.35}, {scalar_gaussian(-3.0, 0.45), scalar_gaussian(2.0, 0.60)});
}
inline GaussianMixture oned_target() {
  return GaussianMixture({0.35, 0.65}, {scalar_gaussian(-1.5, 0.55), scalar_gaussian(3.5, 0.45)});
}

inline GaussianMixture threemode_source() {
  return GaussianMixture({0.40, 0.35, 0.25},
                         {Gaussian(vec2(-4.0, -2.0), mat2(0.35, 0.08, 0.08, 0.28)),
                          Gaussian(vec2(-4.0, 1.8), mat2(0.30, -0.06, -0.06, 0.45)),
                          Gaussian(vec2(-1.0, 0.0), mat2(0.48, 0.0, 0.0, 0.35))});
}
inline GaussianMixture threemode_target() {
  return GaussianMixture({0.25, 0.45, 0.30},
                         {Gaussian(vec2(2.5, -2.5), mat2(0.40, -0.05, -0.05, 0.30)),
                          Gaussian(vec2(4.0, 0.4), mat2(0.35, 0.07, 0.07, 0.42)),
                          Gaussian(vec2(2.5, 2.7), mat2(0.32, -0.04, -0.04, 0.36))});
}

// Target in the translation class of `src`: same weights, means shifted by v,
// covariances widened by eps * I.
inline GaussianMixture translated(const GaussianMixture& src, const Vector& v, double eps) {
  std::vector<Gaussian> comps;
  for (const auto& g : src.components()) {
    comps.emplace_back(g.mean() + v, Matrix(g.cov().matrix() + eps * Matrix::Identity(g.dim(), g.dim())));
  }
  return GaussianMixture(src.weights(), comps);
}

inline double rel_frob(const Matrix& a, const Matrix& b) { return (a - b).norm() / b.norm(); }

}  // namespace testutil
