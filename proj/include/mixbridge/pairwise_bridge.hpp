#pragma once

#include <vector>

#include "mixbridge/gmm.hpp"
#include "mixbridge/io.hpp"

namespace mixbridge {

inline constexpr int kDefaultQuadNodes = 2001;

struct BridgeMarginal {
  double t;
  Vector mean;
  SpdMatrix cov;
};

/// Affine drift u(x) = a (x - mean) + c at time t.
struct DriftCoeffs {
  double t;
  Matrix a;
  Vector c;
  Vector mean;
};

/// Brownian Schrodinger bridge between two Gaussians with diffusion level eps.
class PairwiseBridge {
 public:
  PairwiseBridge(Gaussian source, Gaussian target, double eps);

  double eps() const { return eps_; }
  int dim() const { return source_.dim(); }
  const Gaussian& source() const { return source_; }
  const Gaussian& target() const { return target_; }
  /// (S0^1/2 S1 S0^1/2 + eps^2/4 I)^1/2
  const SpdMatrix& xi() const { return xi_; }
  /// Endpoint cross-covariance, not symmetric in general.
  const Matrix& sigma01() const { return sigma01_; }
  /// m1 - m0
  const Vector& c() const { return c_; }

  Vector mean_at(double t) const;
  /// Symmetrized marginal covariance, unchecked.
  Matrix cov_at(double t) const;
  /// d/dt of cov_at.
  Matrix cov_rate(double t) const;
  Matrix s_at(double t) const;

  BridgeMarginal marginal(double t) const;
  DriftCoeffs drift_coeffs(double t) const;
  Vector drift(double t, const Eigen::Ref<const Vector>& x) const;

  /// 1/2 |c|^2 + 1/2 int_0^1 tr(A S A^T) dt, composite Simpson on n_quad nodes.
  double cost(int n_quad = kDefaultQuadNodes) const;

 private:
  Gaussian source_;
  Gaussian target_;
  double eps_;
  SpdMatrix xi_;
  Matrix sigma01_;
  Matrix cross_sym_;  // sigma01 + sigma01^T + eps I
  Vector c_;
};

PairwiseBridge build_bridge(const Gaussian& source, const Gaussian& target, double eps);

/// Bridges for every (source component, target component) pair, row-major.
class BridgeGrid {
 public:
  BridgeGrid(const GaussianMixture& source, const GaussianMixture& target, double eps);

  int n1() const { return n1_; }
  int n2() const { return n2_; }
  int dim() const { return bridges_.front().dim(); }
  double eps() const { return bridges_.front().eps(); }
  const PairwiseBridge& at(int i, int j) const {
    return bridges_[static_cast<std::size_t>(i * n2_ + j)];
  }

 private:
  int n1_;
  int n2_;
  std::vector<PairwiseBridge> bridges_;
};

struct CostMatrix {
  double eps;
  Matrix c;
  Matrix kappa;
};

CostMatrix cost_matrix(const BridgeGrid& bridges, int n_quad = kDefaultQuadNodes);
CostMatrix cost_matrix(const GaussianMixture& source, const GaussianMixture& target, double eps,
                       int n_quad = kDefaultQuadNodes);

/// {"eps", "C", "kappa"}
Json to_json(const CostMatrix& costs);

/// Composite Simpson weights for n uniform nodes on [0, 1]; n odd and >= 3.
std::vector<double> simpson_weights(int n);

}  // namespace mixbridge
