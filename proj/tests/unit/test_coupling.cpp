#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "mixbridge/coupling.hpp"
#include "mixbridge/error.hpp"

using namespace mixbridge;
using namespace testutil;

namespace {

Vector weights(std::initializer_list<double> w) {
  Vector v(static_cast<Eigen::Index>(w.size()));
  Eigen::Index k = 0;
  for (double x : w) v[k++] = x;
  return v;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an Error");
  return ErrorKind::Io;
}

// Objective written out directly: sum pi C + eps sum pi log(pi / eta).
double objective(const Matrix& pi, const Matrix& c, const Matrix& eta, double eps) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < pi.rows(); ++i)
    for (Eigen::Index j = 0; j < pi.cols(); ++j) {
      total += pi(i, j) * c(i, j);
      if (pi(i, j) > 0.0) total += eps * pi(i, j) * std::log(pi(i, j) / eta(i, j));
    }
  return total;
}

SinkhornResult solve(const GaussianMixture& a, const GaussianMixture& b, double eps, const Coupling& eta,
                     const SinkhornOptions& opt = {}) {
  const CostMatrix cm = cost_matrix(a, b, eps);
  return sinkhorn(GibbsKernel(eta, cm), a.weight_vector(), b.weight_vector(), opt);
}

// The rounded reference shape weights sum to 0.95 and 0.97; renormalized here.
Vector simplex(std::initializer_list<double> w) {
  const Vector v = weights(w);
  return v / v.sum();
}

const Vector kShapeAlpha0 = simplex({0.13, 0.05, 0.10, 0.07, 0.09, 0.13, 0.12, 0.12, 0.04, 0.10});
const Vector kShapeAlpha1 = simplex({0.12, 0.07, 0.07, 0.11, 0.11, 0.12, 0.08, 0.09, 0.08, 0.12});

}  // namespace

TEST_CASE("product prior") {
  const Coupling eta = product_prior(weights({0.65, 0.35}), weights({0.35, 0.65}));
  const double expected[2][2] = {{0.2275, 0.4225}, {0.1225, 0.2275}};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) CHECK(eta(i, j) == doctest::Approx(expected[i][j]).epsilon(1e-14));
  const Coupling uni = product_prior(weights({0.5, 0.5}), weights({0.5, 0.5}));
  CHECK((uni.pi().array() == 0.25).all());
  const Coupling row = product_prior(weights({1.0}), weights({0.2, 0.3, 0.5}));
  CHECK(row.pi().row(0).transpose() == weights({0.2, 0.3, 0.5}));

  CHECK(kind_of([] { product_prior(weights({0.5, 0.6}), weights({1.0})); }) == ErrorKind::InvalidSimplex);
  CHECK(kind_of([] { product_prior(weights({1.0, 0.0}), weights({1.0})); }) == ErrorKind::InvalidSimplex);
  CHECK(kind_of([] { Coupling(weights({0.5, 0.5}).asDiagonal().toDenseMatrix(), weights({0.5, 0.5}), weights({0.4, 0.6})); }) ==
        ErrorKind::InvalidSimplex);
}

TEST_CASE("structured priors") {
  const Coupling product = product_prior(kShapeAlpha0, kShapeAlpha1);
  CHECK(structured_prior(kShapeAlpha0, kShapeAlpha1, PriorPattern::Diagonal, 0, 0.0).pi() == product.pi());

  const Vector uniform = Vector::Constant(4, 0.25);
  const Matrix tilde = greedy_pattern_coupling(uniform, uniform, 0);
  CHECK((tilde - 0.25 * Matrix::Identity(4, 4)).norm() == 0.0);
  const Matrix shifted = greedy_pattern_coupling(uniform, uniform, 1);
  for (int i = 0; i < 4; ++i) CHECK(shifted(i, (i + 1) % 4) == 0.25);

  for (int shift : {0, 3}) {
    const PriorPattern pat = shift == 0 ? PriorPattern::Diagonal : PriorPattern::Shifted;
    const Coupling eta = structured_prior(kShapeAlpha0, kShapeAlpha1, pat, shift, 0.90);
    CHECK((eta.pi().array() > 0.0).all());
    CHECK((eta.pi().rowwise().sum() - kShapeAlpha0).cwiseAbs().sum() < 1e-12);
    CHECK((eta.pi().colwise().sum().transpose() - kShapeAlpha1).cwiseAbs().sum() < 1e-12);
    // Greedy part: pattern cells carry min(remaining row, remaining column) mass.
    const Matrix g = greedy_pattern_coupling(kShapeAlpha0, kShapeAlpha1, shift);
    for (int i = 0; i < 10; ++i) {
      const int j = (i + shift) % 10;
      CHECK(g(i, j) >= std::min(kShapeAlpha0[i], kShapeAlpha1[j]) - 1e-15);
    }
    CHECK((g.array() >= 0.0).all());
    CHECK((eta.pi() - (0.1 * product.pi() + 0.9 * g)).norm() < 1e-15);
  }

  CHECK(kind_of([] { structured_prior(weights({0.5, 0.5}), weights({0.2, 0.3, 0.5}), PriorPattern::Diagonal, 0, 0.9); }) ==
        ErrorKind::PatternInfeasible);
  CHECK_THROWS_AS(structured_prior(kShapeAlpha0, kShapeAlpha1, PriorPattern::Diagonal, 0, 1.0), Error);
  CHECK_THROWS_AS(structured_prior(kShapeAlpha0, kShapeAlpha1, PriorPattern::Diagonal, 0, -0.1), Error);
  CHECK(make_prior(kShapeAlpha0, kShapeAlpha1, {}).pi() == product.pi());
}

TEST_CASE("Gibbs kernel") {
  const CostMatrix cm = cost_matrix(oned_source(), oned_target(), 0.35);
  const Coupling eta = product_prior(oned_source().weight_vector(), oned_target().weight_vector());
  const GibbsKernel k(eta, cm);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) CHECK(k.k()(i, j) == doctest::Approx(eta(i, j) * std::exp(-cm.c(i, j) / 0.35)).epsilon(1e-14));
  const Coupling zero_eta(Matrix(weights({0.65, 0.35}).asDiagonal()), weights({0.65, 0.35}), weights({0.65, 0.35}));
  CHECK_THROWS_AS(GibbsKernel(zero_eta, cm), Error);
}

TEST_CASE("two-mode 1D coupling") {
  const Coupling eta = product_prior(oned_source().weight_vector(), oned_target().weight_vector());
  const SinkhornResult r = solve(oned_source(), oned_target(), 0.35, eta);
  const double expected[2][2] = {{0.35, 0.30}, {0.0, 0.35}};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) CHECK(std::abs(r.plan(i, j) - expected[i][j]) < 1e-2);
  CHECK(r.row_residual <= 1e-10);
  CHECK(r.col_residual <= 1e-10);
  CHECK(display_plan(r.plan.pi())(1, 0) == 0.0);
  CHECK(display_plan(r.plan.pi())(0, 0) == r.plan(0, 0));

  SinkhornOptions fixed;
  fixed.fixed_iters = 100;
  const SinkhornResult f = solve(oned_source(), oned_target(), 0.35, eta, fixed);
  CHECK(f.iterations == 100);
  CHECK(f.row_residual < 1e-12);
  CHECK(f.col_residual < 1e-12);
  CHECK((f.plan.pi() - r.plan.pi()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("three-mode 2D coupling and lifted objective") {
  const GaussianMixture a = threemode_source(), b = threemode_target();
  const Coupling eta = product_prior(a.weight_vector(), b.weight_vector());
  const SinkhornResult r = solve(a, b, 0.3, eta);
  const double expected[3][3] = {{0.25, 0.15, 0.0}, {0.0, 0.05, 0.30}, {0.0, 0.25, 0.0}};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(std::abs(r.plan(i, j) - expected[i][j]) < 1e-2);
  const LiftedObjective obj = lifted_objective(r.plan.pi(), cost_matrix(a, b, 0.3), eta);
  CHECK(std::abs(obj.transport - 21.87) < 0.05);
  CHECK(std::abs(obj.entropy - 0.659) < 0.01);
  CHECK(std::abs(obj.total - 22.06) < 0.05);
  CHECK(obj.total == doctest::Approx(obj.transport + 0.3 * obj.entropy).epsilon(1e-15));
}

TEST_CASE("single component coupling") {
  const Gaussian g = scalar_gaussian(0.0, 1.0), h = scalar_gaussian(3.0, 0.5);
  const Coupling eta = product_prior(weights({1.0}), weights({1.0}));
  const SinkhornResult r = solve(GaussianMixture(g), GaussianMixture(h), 0.2, eta);
  CHECK(r.iterations == 1);
  CHECK(r.plan(0, 0) == 1.0);
}

TEST_CASE("2x2 optimum matches a brute-force scan of the feasible segment") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const GaussianMixture a = random_mixture(rng, 2, 1), b = random_mixture(rng, 2, 1);
    const double eps = 0.5 + 0.25 * trial;
    const CostMatrix cm = cost_matrix(a, b, eps);
    const Coupling eta = product_prior(a.weight_vector(), b.weight_vector());
    const SinkhornResult r = sinkhorn(GibbsKernel(eta, cm), a.weight_vector(), b.weight_vector());
    const double got = lifted_objective(r.plan.pi(), cm, eta).total;
    // pi = [[s, a0 - s], [b0 - s, 1 - a0 - b0 + s]], s in [max(0, a0 + b0 - 1), min(a0, b0)].
    const double a0 = a.weight(0), b0 = b.weight(0);
    const double lo = std::max(0.0, a0 + b0 - 1.0), hi = std::min(a0, b0);
    const auto at = [&](double s) {
      Matrix pi(2, 2);
      pi << s, a0 - s, b0 - s, 1.0 - a0 - b0 + s;
      return objective(pi.cwiseMax(0.0), cm.c, eta.pi(), eps);
    };
    const int n = 1000000;
    double best = std::numeric_limits<double>::infinity();
    int best_k = 0;
    for (int k = 0; k <= n; ++k) {
      const double v = at(lo + (hi - lo) * k / n);
      if (v < best) best = v, best_k = k;
    }
    // Golden-section refinement inside the winning bracket.
    double x0 = lo + (hi - lo) * std::max(0, best_k - 1) / n, x1 = lo + (hi - lo) * std::min(n, best_k + 1) / n;
    for (int it = 0; it < 200; ++it) {
      const double m1 = x0 + (x1 - x0) * 0.381966, m2 = x0 + (x1 - x0) * 0.618034;
      if (at(m1) < at(m2)) x1 = m2; else x0 = m1;
    }
    best = std::min(best, at(0.5 * (x0 + x1)));
    CHECK(std::abs(got - best) < 1e-8);
    CHECK(got <= best + 1e-12);
  }
}

TEST_CASE("optimality certificate: log(pi / K) splits as f_i + g_j") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 30; ++trial) {
    const int n1 = 2 + trial % 4, n2 = 2 + (trial / 4) % 4;
    const GaussianMixture a = random_mixture(rng, n1, 2), b = random_mixture(rng, n2, 2);
    const double eps = 1.0 + 0.5 * (trial % 3);
    const CostMatrix cm = cost_matrix(a, b, eps);
    const Coupling eta = product_prior(a.weight_vector(), b.weight_vector());
    const GibbsKernel k(eta, cm);
    const SinkhornResult r = sinkhorn(k, a.weight_vector(), b.weight_vector());
    // Double-centring recovers the best additive split; its residual certifies stationarity.
    Matrix l(n1, n2);
    for (int i = 0; i < n1; ++i)
      for (int j = 0; j < n2; ++j) l(i, j) = std::log(r.plan(i, j)) + cm.c(i, j) / eps - std::log(eta(i, j));
    const Vector rows = l.rowwise().mean();
    const Vector cols = l.colwise().mean().transpose();
    const double all = l.mean();
    double worst = 0.0;
    for (int i = 0; i < n1; ++i)
      for (int j = 0; j < n2; ++j) worst = std::max(worst, std::abs(l(i, j) - rows[i] - cols[j] + all));
    CHECK(worst < 1e-8);
    CHECK(r.row_residual <= 1e-12);
    CHECK(r.col_residual <= 1e-12);
    CHECK(std::abs(r.log_a.maxCoeff()) == 0.0);
  }
}

TEST_CASE("dual objective is non-decreasing across sweeps") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const GaussianMixture a = random_mixture(rng, 4, 2), b = random_mixture(rng, 3, 2);
    const Coupling eta = product_prior(a.weight_vector(), b.weight_vector());
    SinkhornOptions opt;
    opt.fixed_iters = 60;
    const SinkhornResult r = solve(a, b, 0.5 + 0.5 * (trial % 3), eta, opt);
    for (std::size_t k = 1; k < r.dual_objective.size(); ++k) {
      CHECK(r.dual_objective[k] >= r.dual_objective[k - 1] - 1e-12);
    }
    // At convergence the dual meets the primal.
    const SinkhornResult full = solve(a, b, 0.5 + 0.5 * (trial % 3), eta);
    const double primal = lifted_objective(full.plan.pi(), cost_matrix(a, b, 0.5 + 0.5 * (trial % 3)), eta).total;
    CHECK(full.dual_objective.back() == doctest::Approx(primal).epsilon(1e-9));
  }
}

TEST_CASE("rescaling the scalings mid-run leaves the plan unchanged") {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 20; ++trial) {
    const GaussianMixture a = random_mixture(rng, 3, 2), b = random_mixture(rng, 4, 2);
    const Coupling eta = product_prior(a.weight_vector(), b.weight_vector());
    const SinkhornResult plain = solve(a, b, 1.0, eta);
    SinkhornOptions opt;
    opt.hook = [](int sweep, Vector& log_a, Vector& log_b) {
      if (sweep == 3) {
        log_a.array() += std::log(7.0);
        log_b.array() -= std::log(7.0);
      }
    };
    const SinkhornResult hooked = solve(a, b, 1.0, eta, opt);
    CHECK((plain.plan.pi() - hooked.plan.pi()).cwiseAbs().maxCoeff() <= 1e-14);
    CHECK(std::abs(hooked.log_a.maxCoeff()) == 0.0);
  }
}

TEST_CASE("non-convergence carries the last iterate") {
  const Coupling eta = product_prior(oned_source().weight_vector(), oned_target().weight_vector());
  SinkhornOptions opt;
  opt.max_iter = 2;
  try {
    solve(oned_source(), oned_target(), 0.35, eta, opt);
    FAIL("no throw");
  } catch (const NotConverged& e) {
    CHECK(e.kind() == ErrorKind::NotConverged);
    CHECK(e.iterations() == 2);
    CHECK(e.residuals().size() == 2);
    CHECK(e.best_iterate().rows() == 2);
    CHECK(e.best_iterate().allFinite());
  }
}

TEST_CASE("lifted objective identities") {
  const GaussianMixture a = threemode_source(), b = threemode_target();
  const CostMatrix cm = cost_matrix(a, b, 0.3);
  const Coupling eta = product_prior(a.weight_vector(), b.weight_vector());
  const LiftedObjective at_prior = lifted_objective(eta.pi(), cm, eta);
  CHECK(at_prior.entropy == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(at_prior.total == doctest::Approx((eta.pi().array() * cm.c.array()).sum()).epsilon(1e-14));

  const SinkhornResult r = solve(a, b, 0.3, eta);
  double mi = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const double p = r.plan(i, j);
      if (p > 0.0) mi += p * std::log(p / (a.weight(i) * b.weight(j)));
    }
  CHECK(lifted_objective(r.plan.pi(), cm, eta).entropy == doctest::Approx(mi).epsilon(1e-12));

  const Matrix diag_eta = Vector::Constant(3, 1.0 / 3.0).asDiagonal();
  Matrix pi = Matrix::Constant(3, 3, 1.0 / 9.0);
  const Coupling sparse_eta(diag_eta, Vector::Constant(3, 1.0 / 3.0), Vector::Constant(3, 1.0 / 3.0));
  CHECK(kind_of([&] { lifted_objective(pi, cm, sparse_eta); }) == ErrorKind::SupportViolation);
  // 0 log 0 = 0 on cells where both vanish.
  CHECK(lifted_objective(diag_eta, cm, sparse_eta).entropy == 0.0);
}

TEST_CASE("plan JSON carries the documented fields") {
  const Coupling eta = product_prior(oned_source().weight_vector(), oned_target().weight_vector());
  const CostMatrix cm = cost_matrix(oned_source(), oned_target(), 0.35);
  const SinkhornResult r = sinkhorn(GibbsKernel(eta, cm), eta.row_marginal(), eta.col_marginal());
  const Json j = to_json(r, lifted_objective(r.plan.pi(), cm, eta));
  for (const char* key : {"pi", "transport", "entropy", "total", "iterations", "residuals"}) CHECK(j.contains(key));
  CHECK(j.at("residuals").size() == 2);
  CHECK(matrix_from_json(j.at("pi")) == r.plan.pi());
}
