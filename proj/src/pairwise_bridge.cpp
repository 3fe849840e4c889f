#include "mixbridge/pairwise_bridge.hpp"

#include <cmath>

#include "mixbridge/error.hpp"
#include "mixbridge/parallel.hpp"

namespace mixbridge {
namespace {

void require_eps(double eps) {
  if (!(eps > 0.0) || !std::isfinite(eps)) {
    fail(ErrorKind::DomainError, "eps must be positive and finite");
  }
}

SpdMatrix compute_xi(const Gaussian& source, const Gaussian& target, double eps) {
  const Matrix& root = source.sqrt_cov();
  Matrix inner = root * target.cov().matrix() * root;
  inner.diagonal().array() += 0.25 * eps * eps;
  return spd_sqrt(SpdMatrix(symmetrize(inner)));
}

}  // namespace

PairwiseBridge::PairwiseBridge(Gaussian source, Gaussian target, double eps)
    : source_(std::move(source)),
      target_(std::move(target)),
      eps_((require_eps(eps), eps)),
      xi_((require_dims(source_.dim(), target_.dim(), "bridge target"),
           compute_xi(source_, target_, eps))) {
  sigma01_ = source_.sqrt_cov() * xi_.matrix() * source_.cov().inv_sqrt();
  sigma01_.diagonal().array() -= 0.5 * eps_;
  cross_sym_ = sigma01_ + sigma01_.transpose();
  cross_sym_.diagonal().array() += eps_;
  cross_sym_ = symmetrize(cross_sym_);
  c_ = target_.mean() - source_.mean();
}

Vector PairwiseBridge::mean_at(double t) const {
  return (1.0 - t) * source_.mean() + t * target_.mean();
}

Matrix PairwiseBridge::cov_at(double t) const {
  const double s = 1.0 - t;
  return symmetrize(s * s * source_.cov().matrix() + t * t * target_.cov().matrix() +
                    t * s * cross_sym_);
}

Matrix PairwiseBridge::cov_rate(double t) const {
  return symmetrize(-2.0 * (1.0 - t) * source_.cov().matrix() + 2.0 * t * target_.cov().matrix() +
                    (1.0 - 2.0 * t) * cross_sym_);
}

Matrix PairwiseBridge::s_at(double t) const {
  Matrix late = target_.cov().matrix() - sigma01_;
  late.diagonal().array() -= eps_;
  return (1.0 - t) * (sigma01_.transpose() - source_.cov().matrix()) + t * late;
}

BridgeMarginal PairwiseBridge::marginal(double t) const {
  require_unit_time(t, "bridge marginal");
  if (t == 0.0) return {t, source_.mean(), source_.cov()};
  if (t == 1.0) return {t, target_.mean(), target_.cov()};
  return {t, mean_at(t), SpdMatrix(cov_at(t))};
}

DriftCoeffs PairwiseBridge::drift_coeffs(double t) const {
  require_unit_time(t, "bridge drift");
  const Matrix cov = (t == 0.0)   ? source_.cov().matrix()
                     : (t == 1.0) ? target_.cov().matrix()
                                  : cov_at(t);
  const Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) {
    fail(ErrorKind::NotPositiveDefinite, "bridge marginal covariance is not positive definite");
  }
  // A = S cov^-1, so A^T = cov^-1 S^T.
  Matrix a = llt.solve(s_at(t).transpose()).transpose();
  return {t, std::move(a), c_, mean_at(t)};
}

Vector PairwiseBridge::drift(double t, const Eigen::Ref<const Vector>& x) const {
  require_dims(dim(), x.size(), "bridge drift point");
  const DriftCoeffs coeffs = drift_coeffs(t);
  return coeffs.a * (x - coeffs.mean) + coeffs.c;
}

double PairwiseBridge::cost(int n_quad) const {
  const std::vector<double> w = simpson_weights(n_quad);
  double integral = 0.0;
  for (int k = 0; k < n_quad; ++k) {
    const double t = static_cast<double>(k) / (n_quad - 1);
    const Matrix cov = cov_at(t);
    const Matrix s = s_at(t);
    const Eigen::LLT<Matrix> llt(cov);
    if (llt.info() != Eigen::Success) {
      fail(ErrorKind::NotPositiveDefinite, "bridge marginal covariance is not positive definite");
    }
    // tr(A cov A^T) = tr(S cov^-1 S^T)
    const double value = (s * llt.solve(s.transpose())).trace();
    integral += w[static_cast<std::size_t>(k)] * value;
  }
  return 0.5 * c_.squaredNorm() + 0.5 * integral;
}

PairwiseBridge build_bridge(const Gaussian& source, const Gaussian& target, double eps) {
  return PairwiseBridge(source, target, eps);
}

BridgeGrid::BridgeGrid(const GaussianMixture& source, const GaussianMixture& target, double eps)
    : n1_(source.size()), n2_(target.size()) {
  require_dims(source.dim(), target.dim(), "target mixture");
  bridges_.reserve(static_cast<std::size_t>(n1_ * n2_));
  for (int i = 0; i < n1_; ++i) {
    for (int j = 0; j < n2_; ++j) bridges_.emplace_back(source.component(i), target.component(j), eps);
  }
}

CostMatrix cost_matrix(const BridgeGrid& bridges, int n_quad) {
  const int n1 = bridges.n1();
  const int n2 = bridges.n2();
  Matrix c(n1, n2);
  simpson_weights(n_quad);
  parallel_for(static_cast<std::size_t>(n1 * n2), [&](std::size_t begin, std::size_t end) {
    for (std::size_t p = begin; p < end; ++p) {
      const int i = static_cast<int>(p) / n2;
      const int j = static_cast<int>(p) % n2;
      c(i, j) = bridges.at(i, j).cost(n_quad);
    }
  });
  return {bridges.eps(), c, c / bridges.eps()};
}

CostMatrix cost_matrix(const GaussianMixture& source, const GaussianMixture& target, double eps,
                       int n_quad) {
  return cost_matrix(BridgeGrid(source, target, eps), n_quad);
}

Json to_json(const CostMatrix& costs) {
  return Json{{"eps", costs.eps}, {"C", to_json(costs.c)}, {"kappa", to_json(costs.kappa)}};
}

std::vector<double> simpson_weights(int n) {
  if (n < 3 || n % 2 == 0) fail(ErrorKind::DomainError, "Simpson rule needs an odd node count >= 3");
  const double h = 1.0 / (n - 1);
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    const double factor = (k == 0 || k == n - 1) ? 1.0 : (k % 2 == 1 ? 4.0 : 2.0);
    w[static_cast<std::size_t>(k)] = factor * h / 3.0;
  }
  return w;
}

}  // namespace mixbridge
