#include "mixbridge/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "mixbridge/error.hpp"

namespace mixbridge {
namespace {

double log_sum_exp(const Vector& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

struct Residuals {
  double row;
  double col;
};

Residuals marginal_residuals(const Matrix& pi, const Vector& alpha0, const Vector& alpha1) {
  return {(pi.rowwise().sum() - alpha0).cwiseAbs().sum(),
          (pi.colwise().sum().transpose() - alpha1).cwiseAbs().sum()};
}

Matrix plan_from_potentials(const Matrix& log_k, const Vector& log_a, const Vector& log_b) {
  Matrix log_pi = log_k;
  log_pi.colwise() += log_a;
  log_pi.rowwise() += log_b.transpose();
  return log_pi.array().exp().matrix();
}

}  // namespace

Coupling::Coupling(Matrix pi, Vector alpha0, Vector alpha1, double tol)
    : pi_(std::move(pi)), alpha0_(std::move(alpha0)), alpha1_(std::move(alpha1)) {
  require_dims(alpha0_.size(), pi_.rows(), "coupling rows");
  require_dims(alpha1_.size(), pi_.cols(), "coupling columns");
  if (!pi_.allFinite()) fail(ErrorKind::NonFinite, "coupling has non-finite entries");
  if (pi_.size() > 0 && pi_.minCoeff() < 0.0) fail(ErrorKind::InvalidSimplex, "coupling has negative entries");
  const Residuals r = marginal_residuals(pi_, alpha0_, alpha1_);
  if (r.row > tol || r.col > tol) {
    std::ostringstream msg;
    msg << "coupling marginal residuals (" << r.row << ", " << r.col << ") exceed " << tol;
    fail(ErrorKind::InvalidSimplex, msg.str());
  }
}

void require_simplex(const Vector& weights, const char* what) {
  if (weights.size() == 0) fail(ErrorKind::InvalidSimplex, std::string(what) + " is empty");
  if (!weights.allFinite() || weights.minCoeff() <= 0.0) {
    fail(ErrorKind::InvalidSimplex, std::string(what) + " must be strictly positive");
  }
  if (std::abs(weights.sum() - 1.0) > 1e-10) {
    fail(ErrorKind::InvalidSimplex, std::string(what) + " does not sum to 1");
  }
}

Coupling product_prior(const Vector& alpha0, const Vector& alpha1) {
  require_simplex(alpha0, "alpha0");
  require_simplex(alpha1, "alpha1");
  return Coupling(alpha0 * alpha1.transpose(), alpha0, alpha1);
}

Matrix greedy_pattern_coupling(const Vector& alpha0, const Vector& alpha1, int shift) {
  const auto n1 = alpha0.size();
  const auto n2 = alpha1.size();
  if (n1 != n2) fail(ErrorKind::PatternInfeasible, "pattern priors need equal component counts");
  const auto n = n1;
  Vector row = alpha0;
  Vector col = alpha1;
  Matrix out = Matrix::Zero(n, n);
  const auto place = [&](Eigen::Index i, Eigen::Index j) {
    const double m = std::max(0.0, std::min(row[i], col[j]));
    out(i, j) += m;
    row[i] -= m;
    col[j] -= m;
  };
  const Eigen::Index s = ((shift % n) + n) % n;
  for (Eigen::Index i = 0; i < n; ++i) place(i, (i + s) % n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) place(i, j);
  }
  return out;
}

Coupling structured_prior(const Vector& alpha0, const Vector& alpha1, PriorPattern pattern,
                          int shift, double theta) {
  require_simplex(alpha0, "alpha0");
  require_simplex(alpha1, "alpha1");
  if (!(theta >= 0.0 && theta < 1.0)) fail(ErrorKind::DomainError, "theta must lie in [0, 1)");
  if (pattern == PriorPattern::Product) return product_prior(alpha0, alpha1);
  const int s = pattern == PriorPattern::Diagonal ? 0 : shift;
  const Matrix tilde = greedy_pattern_coupling(alpha0, alpha1, s);
  const Matrix product = alpha0 * alpha1.transpose();
  return Coupling((1.0 - theta) * product + theta * tilde, alpha0, alpha1);
}

Coupling make_prior(const Vector& alpha0, const Vector& alpha1, const PriorSpec& spec) {
  return structured_prior(alpha0, alpha1, spec.pattern, spec.shift, spec.theta);
}

GibbsKernel::GibbsKernel(const Coupling& eta, const CostMatrix& costs)
    : eta_(eta), eps_(costs.eps) {
  require_dims(eta.n1(), costs.c.rows(), "kernel rows");
  require_dims(eta.n2(), costs.c.cols(), "kernel columns");
  if (eta.pi().minCoeff() <= 0.0) fail(ErrorKind::InvalidSimplex, "prior coupling must be strictly positive");
  log_k_ = eta.pi().array().log().matrix() - costs.c / eps_;
  k_ = log_k_.array().exp().matrix();
}

SinkhornResult sinkhorn(const GibbsKernel& kernel, const Vector& alpha0, const Vector& alpha1,
                        const SinkhornOptions& options) {
  const Matrix& log_k = kernel.log_k();
  const auto n1 = log_k.rows();
  const auto n2 = log_k.cols();
  require_dims(n1, alpha0.size(), "alpha0");
  require_dims(n2, alpha1.size(), "alpha1");
  require_simplex(alpha0, "alpha0");
  require_simplex(alpha1, "alpha1");
  if (!(options.tol > 0.0)) fail(ErrorKind::DomainError, "sinkhorn tol must be positive");
  if (options.max_iter < 1) fail(ErrorKind::DomainError, "sinkhorn max_iter must be >= 1");
  if (options.fixed_iters && *options.fixed_iters < 1) {
    fail(ErrorKind::DomainError, "sinkhorn fixed_iters must be >= 1");
  }

  const Vector log_alpha0 = alpha0.array().log().matrix();
  const Vector log_alpha1 = alpha1.array().log().matrix();
  Vector log_a = Vector::Zero(n1);
  Vector log_b = Vector::Zero(n2);
  std::vector<double> dual;
  const int limit = options.fixed_iters ? *options.fixed_iters : options.max_iter;
  const double eps = kernel.eps();

  Residuals r{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  int sweep = 0;
  Vector scratch_row(n2);
  Vector scratch_col(n1);
  while (sweep < limit) {
    for (Eigen::Index i = 0; i < n1; ++i) {
      scratch_row = log_k.row(i).transpose() + log_b;
      log_a[i] = log_alpha0[i] - log_sum_exp(scratch_row);
    }
    for (Eigen::Index j = 0; j < n2; ++j) {
      scratch_col = log_k.col(j) + log_a;
      log_b[j] = log_alpha1[j] - log_sum_exp(scratch_col);
    }
    ++sweep;
    if (options.hook) options.hook(sweep, log_a, log_b);
    const Matrix pi = plan_from_potentials(log_k, log_a, log_b);
    r = marginal_residuals(pi, alpha0, alpha1);
    dual.push_back(eps * (alpha0.dot(log_a) + alpha1.dot(log_b) - pi.sum() + 1.0));
    if (!options.fixed_iters && r.row <= options.tol && r.col <= options.tol) break;
  }

  const double shift = log_a.maxCoeff();
  log_a.array() -= shift;
  log_b.array() += shift;
  Matrix pi = plan_from_potentials(log_k, log_a, log_b);
  r = marginal_residuals(pi, alpha0, alpha1);
  if (!pi.allFinite()) fail(ErrorKind::NonFinite, "sinkhorn produced non-finite plan");

  if (!options.fixed_iters && (r.row > options.tol || r.col > options.tol)) {
    std::ostringstream msg;
    msg << "sinkhorn stopped after " << sweep << " sweeps with residuals (" << r.row << ", "
        << r.col << ")";
    throw NotConverged(msg.str(), sweep, {r.row, r.col}, pi);
  }
  const double accept = std::max(kMarginalTol, 2.0 * std::max(r.row, r.col));
  return SinkhornResult{Coupling(std::move(pi), alpha0, alpha1, accept),
                        std::move(log_a),
                        std::move(log_b),
                        sweep,
                        r.row,
                        r.col,
                        std::move(dual)};
}

LiftedObjective lifted_objective(const Matrix& pi, const CostMatrix& costs, const Coupling& eta) {
  require_dims(costs.c.rows(), pi.rows(), "plan rows");
  require_dims(costs.c.cols(), pi.cols(), "plan columns");
  require_dims(eta.n1(), pi.rows(), "prior rows");
  require_dims(eta.n2(), pi.cols(), "prior columns");
  double transport = 0.0;
  double entropy = 0.0;
  for (Eigen::Index i = 0; i < pi.rows(); ++i) {
    for (Eigen::Index j = 0; j < pi.cols(); ++j) {
      const double p = pi(i, j);
      if (p < 0.0) fail(ErrorKind::InvalidSimplex, "plan has negative entries");
      transport += p * costs.c(i, j);
      if (p == 0.0) continue;
      const double q = eta(static_cast<int>(i), static_cast<int>(j));
      if (q <= 0.0) fail(ErrorKind::SupportViolation, "plan puts mass where the prior vanishes");
      entropy += p * std::log(p / q);
    }
  }
  return {transport, entropy, transport + costs.eps * entropy};
}

Matrix display_plan(const Matrix& pi, double threshold) {
  return (pi.array() < threshold).select(0.0, pi);
}

Json to_json(const SinkhornResult& result, const LiftedObjective& objective) {
  return Json{{"pi", to_json(result.plan.pi())},
              {"transport", objective.transport},
              {"entropy", objective.entropy},
              {"total", objective.total},
              {"iterations", result.iterations},
              {"residuals", Json::array({result.row_residual, result.col_residual})}};
}

}  // namespace mixbridge
