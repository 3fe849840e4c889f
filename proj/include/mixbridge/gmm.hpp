#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "mixbridge/rng.hpp"
#include "mixbridge/spd_linalg.hpp"

namespace mixbridge {

/// n x d point cloud, one point per row.
using PointSet = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class Gaussian {
 public:
  Gaussian(Vector mean, SpdMatrix cov);
  Gaussian(Vector mean, const Matrix& cov) : Gaussian(std::move(mean), SpdMatrix(cov)) {}

  int dim() const { return static_cast<int>(mean_.size()); }
  const Vector& mean() const { return mean_; }
  const SpdMatrix& cov() const { return cov_; }
  const Matrix& precision() const { return precision_; }
  const Matrix& sqrt_cov() const { return sqrt_cov_; }
  /// -(d log(2 pi) + log det cov) / 2
  double log_normalizer() const { return log_normalizer_; }

  double log_pdf(const Eigen::Ref<const Vector>& x) const;
  double pdf(const Eigen::Ref<const Vector>& x) const;

 private:
  Vector mean_;
  SpdMatrix cov_;
  Matrix precision_;
  Matrix sqrt_cov_;
  double log_normalizer_;
};

/// Finite Gaussian mixture with strictly positive weights summing to one.
class GaussianMixture {
 public:
  GaussianMixture(std::vector<double> weights, std::vector<Gaussian> components);
  explicit GaussianMixture(Gaussian single);

  int size() const { return static_cast<int>(components_.size()); }
  int dim() const { return components_.front().dim(); }
  const std::vector<double>& weights() const { return weights_; }
  Vector weight_vector() const;
  double weight(int k) const { return weights_[static_cast<std::size_t>(k)]; }
  const Gaussian& component(int k) const { return components_[static_cast<std::size_t>(k)]; }
  const std::vector<Gaussian>& components() const { return components_; }

  /// Sum_k w_k N_k(x), evaluated term by term.
  double pdf(const Eigen::Ref<const Vector>& x) const;
  double log_pdf(const Eigen::Ref<const Vector>& x) const;
  /// Posterior component probabilities at x.
  Vector responsibilities(const Eigen::Ref<const Vector>& x) const;

  Vector mean() const;
  Matrix covariance() const;

 private:
  std::vector<double> weights_;
  std::vector<Gaussian> components_;
};

/// Index k with cumulative[k-1] <= u < cumulative[k].
int draw_category(const std::vector<double>& cumulative, double u);
std::vector<double> cumulative_weights(const std::vector<double>& weights);

/// mean + sqrt(cov) z with z drawn from (stream, tag, step). `z` must hold dim values.
void draw_gaussian(const Gaussian& g, const RandomStream& stream, std::uint32_t tag,
                   std::uint32_t step, std::span<double> z, double* out);

/// Point p uses stream (seed, p): its normals come from stream_tag::kInitial
/// and, for mixtures, its component from stream_tag::kCategory. A
/// one-component mixture therefore samples identically to its component.
PointSet sample(const Gaussian& g, std::size_t n, std::uint64_t seed);
PointSet sample(const GaussianMixture& g, std::size_t n, std::uint64_t seed);

struct EmOptions {
  int n_components = 1;
  std::uint64_t seed = 0;
  int max_iter = 500;
  /// Absolute eigenvalue floor; defaults to 1e-4 * (trace of data covariance / d).
  std::optional<double> cov_floor;
  double rel_tol = 1e-8;
  int max_reseeds = 3;
};

struct EmFit {
  GaussianMixture mixture;
  /// Log-likelihood of the parameters entering each E-step, restarted after
  /// the most recent empty-component re-seed.
  std::vector<double> log_likelihood;
  int iterations = 0;
  int reseeds = 0;
  bool converged = false;
};

/// k-means++ seeding, one hard-assignment moment step, then EM with
/// eigenvalue-clamped covariances.
EmFit em_fit(const PointSet& points, const EmOptions& options);

double log_likelihood(const GaussianMixture& mixture, const PointSet& points);

}  // namespace mixbridge
