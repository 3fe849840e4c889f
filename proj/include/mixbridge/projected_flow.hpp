#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "mixbridge/coupling.hpp"
#include "mixbridge/pairwise_bridge.hpp"

namespace mixbridge {

/// Scratch buffers for FlowSlice::evaluate, sized for one slice.
struct FlowWorkspace {
  std::vector<double> log_terms;  // log pi_p + log N_p(x)
  std::vector<double> gamma;      // posterior over active pairs
  std::vector<double> u;          // per-pair drifts, n_active x d
  std::vector<double> ubar;       // posterior-averaged drift
  std::vector<double> r;
};

/// Every bridge quantity needed at one time t for the pairs with pi_ij > 0,
/// laid out flat so evaluation does not allocate.
class FlowSlice {
 public:
  FlowSlice(const Coupling& pi, const BridgeGrid& bridges, double t);

  double t() const { return t_; }
  int dim() const { return d_; }
  int n_active() const { return static_cast<int>(log_weight_.size()); }
  int pair_i(int p) const { return pair_i_[static_cast<std::size_t>(p)]; }
  int pair_j(int p) const { return pair_j_[static_cast<std::size_t>(p)]; }
  /// Active index of (i, j), or -1.
  int active_index(int i, int j) const;

  const double* mean(int p) const { return &mean_[static_cast<std::size_t>(p * d_)]; }
  const double* chol(int p) const { return &chol_[static_cast<std::size_t>(p * d_ * d_)]; }

  void prepare(FlowWorkspace& ws) const;

  /// Fills ws.log_terms, ws.gamma, ws.u and ws.ubar; returns log rho(t, x).
  double evaluate(const double* x, FlowWorkspace& ws) const;
  /// u_p(x) for one active pair.
  void pair_drift(int p, const double* x, double* out) const;
  /// log N(x; m_p, S_p) for one active pair.
  double pair_log_pdf(int p, const double* x, double* scratch) const;

  /// d/dt rho + div(rho * s * ubar) - eps/2 lap rho, divided by rho (1 + |ubar|^2) / eps.
  double fokker_planck_residual(const double* x, double drift_scale, FlowWorkspace& ws) const;

 private:
  double t_;
  int d_;
  double eps_;
  std::vector<int> pair_i_;
  std::vector<int> pair_j_;
  std::vector<int> index_;  // n1 * n2 -> active index
  int n2_;
  std::vector<double> log_weight_;  // log pi_p + Gaussian log normalizer
  std::vector<double> mean_;
  std::vector<double> precision_;
  std::vector<double> chol_;       // lower Cholesky factor of the marginal covariance
  std::vector<double> a_;
  std::vector<double> c_;
  std::vector<double> trace_a_;
  std::vector<double> trace_p_;
  std::vector<double> cov_rate_;
};

/// State-only flow obtained by forgetting the label: mixture density,
/// posterior label weights and the posterior-averaged drift.
class ProjectedFlow {
 public:
  ProjectedFlow(Coupling pi, BridgeGrid bridges);

  const Coupling& pi() const { return pi_; }
  const BridgeGrid& bridges() const { return bridges_; }
  double eps() const { return bridges_.eps(); }
  int dim() const { return bridges_.dim(); }

  FlowSlice slice(double t) const;

  double density(double t, const Eigen::Ref<const Vector>& x) const;
  /// N1 x N2 posterior, zero off the support of pi.
  Matrix posterior(double t, const Eigen::Ref<const Vector>& x) const;
  Vector drift(double t, const Eigen::Ref<const Vector>& x) const;
  /// Requires t in (0, 1).
  double fokker_planck_residual(double t, const Eigen::Ref<const Vector>& x,
                                double drift_scale = 1.0) const;

 private:
  Coupling pi_;
  BridgeGrid bridges_;
};

struct KineticEnergy {
  double j_proj;
  double j_lift;
  double std_err;
};

/// Simpson in time over n_time nodes; at each node E ||ubar||^2 is estimated
/// per active pair from n_samples exact draws of that pair's marginal, using
/// stream derive_stream(seed, node, i, j).
KineticEnergy kinetic_energy(const ProjectedFlow& flow, const CostMatrix& costs, int n_time,
                             int n_samples, std::uint64_t seed);

/// Rows (t, x_1..x_d, rho, u_1..u_d) on a tensor grid over [lo, hi] with
/// n_per_axis nodes per axis, for each time.
void write_flow_slices_csv(const std::filesystem::path& path, const ProjectedFlow& flow,
                           const std::vector<double>& times, const Vector& lo, const Vector& hi,
                           int n_per_axis);

}  // namespace mixbridge
