#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "mixbridge/io.hpp"
#include "mixbridge/pairwise_bridge.hpp"

namespace mixbridge {

inline constexpr double kMarginalTol = 1e-10;

/// Nonnegative N1 x N2 matrix with prescribed row and column sums.
class Coupling {
 public:
  /// Throws InvalidSimplex on negative entries or marginal error above `tol` (L1).
  Coupling(Matrix pi, Vector alpha0, Vector alpha1, double tol = kMarginalTol);

  int n1() const { return static_cast<int>(pi_.rows()); }
  int n2() const { return static_cast<int>(pi_.cols()); }
  const Matrix& pi() const { return pi_; }
  double operator()(int i, int j) const { return pi_(i, j); }
  const Vector& row_marginal() const { return alpha0_; }
  const Vector& col_marginal() const { return alpha1_; }

 private:
  Matrix pi_;
  Vector alpha0_;
  Vector alpha1_;
};

/// Throws InvalidSimplex unless every entry is > 0 and the sum is 1 within 1e-10.
void require_simplex(const Vector& weights, const char* what);

Coupling product_prior(const Vector& alpha0, const Vector& alpha1);

enum class PriorPattern { Product, Diagonal, Shifted };

struct PriorSpec {
  PriorPattern pattern = PriorPattern::Product;
  int shift = 0;
  double theta = 0.9;
};

/// Pattern cells (i, i + shift mod N) first, then row-major greedy fill of the
/// residual mass. Not strictly positive in general.
Matrix greedy_pattern_coupling(const Vector& alpha0, const Vector& alpha1, int shift);

/// (1 - theta) * product + theta * greedy pattern coupling.
Coupling structured_prior(const Vector& alpha0, const Vector& alpha1, PriorPattern pattern,
                          int shift, double theta);
Coupling make_prior(const Vector& alpha0, const Vector& alpha1, const PriorSpec& spec);

/// K = eta * exp(-C / eps), also kept in log form.
class GibbsKernel {
 public:
  GibbsKernel(const Coupling& eta, const CostMatrix& costs);

  double eps() const { return eps_; }
  const Matrix& k() const { return k_; }
  const Matrix& log_k() const { return log_k_; }
  const Coupling& eta() const { return eta_; }

 private:
  Coupling eta_;
  double eps_;
  Matrix k_;
  Matrix log_k_;
};

struct SinkhornOptions {
  double tol = 1e-12;
  int max_iter = 10000;
  /// Run exactly this many sweeps and skip the tolerance test.
  std::optional<int> fixed_iters;
  /// Called after each sweep with (sweep, log_a, log_b); may rescale them.
  std::function<void(int, Vector&, Vector&)> hook;
};

struct SinkhornResult {
  Coupling plan;
  Vector log_a;
  Vector log_b;
  int iterations;
  double row_residual;
  double col_residual;
  /// eps (<alpha0, log a> + <alpha1, log b> - sum(pi) + 1) after each sweep.
  std::vector<double> dual_objective;
};

/// Log-domain alternating normalization. Output gauge: max_i log a_i = 0.
/// Throws NotConverged with the last plan if the L1 residuals stay above tol.
SinkhornResult sinkhorn(const GibbsKernel& kernel, const Vector& alpha0, const Vector& alpha1,
                        const SinkhornOptions& options = {});

struct LiftedObjective {
  double transport;
  double entropy;  // KL(pi || eta)
  double total;    // transport + eps * entropy
};

LiftedObjective lifted_objective(const Matrix& pi, const CostMatrix& costs, const Coupling& eta);

/// Copy of pi with entries below threshold set to zero.
Matrix display_plan(const Matrix& pi, double threshold = 1e-5);

/// {"pi", "transport", "entropy", "total", "iterations", "residuals"}
Json to_json(const SinkhornResult& result, const LiftedObjective& objective);

}  // namespace mixbridge
