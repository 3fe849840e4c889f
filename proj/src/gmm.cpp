#include "mixbridge/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

#include "mixbridge/error.hpp"

namespace mixbridge {
namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double log_sum_exp(const Vector& v) {
  const double top = v.maxCoeff();
  if (!std::isfinite(top)) return top;
  return top + std::log((v.array() - top).exp().sum());
}

Matrix data_covariance(const PointSet& points) {
  const Vector mean = points.colwise().mean().transpose();
  const PointSet centered = points.rowwise() - mean.transpose();
  return (centered.transpose() * centered) / static_cast<double>(points.rows());
}

}  // namespace

Gaussian::Gaussian(Vector mean, SpdMatrix cov)
    : mean_(std::move(mean)),
      cov_(std::move(cov)),
      precision_(cov_.inverse()),
      sqrt_cov_(cov_.sqrt()),
      log_normalizer_(-0.5 * (static_cast<double>(cov_.dim()) * kLog2Pi + cov_.logdet())) {
  require_dims(cov_.dim(), mean_.size(), "Gaussian mean");
  if (!mean_.allFinite()) fail(ErrorKind::NonFinite, "Gaussian mean is not finite");
}

double Gaussian::log_pdf(const Eigen::Ref<const Vector>& x) const {
  require_dims(dim(), x.size(), "Gaussian::log_pdf");
  const Vector diff = x - mean_;
  return log_normalizer_ - 0.5 * diff.dot(precision_ * diff);
}

double Gaussian::pdf(const Eigen::Ref<const Vector>& x) const { return std::exp(log_pdf(x)); }

GaussianMixture::GaussianMixture(std::vector<double> weights, std::vector<Gaussian> components)
    : weights_(std::move(weights)), components_(std::move(components)) {
  if (components_.empty()) fail(ErrorKind::InvalidSimplex, "mixture needs at least one component");
  if (weights_.size() != components_.size()) {
    fail(ErrorKind::DimensionMismatch, "mixture weights and components differ in length");
  }
  double total = 0.0;
  for (double w : weights_) {
    if (!(w > 0.0)) fail(ErrorKind::InvalidSimplex, "mixture weight must be > 0");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    fail(ErrorKind::InvalidSimplex, "mixture weights sum to " + std::to_string(total));
  }
  for (const auto& c : components_) require_dims(components_.front().dim(), c.dim(), "mixture component");
}

GaussianMixture::GaussianMixture(Gaussian single)
    : GaussianMixture(std::vector<double>{1.0}, std::vector<Gaussian>{std::move(single)}) {}

Vector GaussianMixture::weight_vector() const {
  return Eigen::Map<const Vector>(weights_.data(), static_cast<Eigen::Index>(weights_.size()));
}

double GaussianMixture::pdf(const Eigen::Ref<const Vector>& x) const {
  double total = 0.0;
  for (std::size_t k = 0; k < components_.size(); ++k) total += weights_[k] * components_[k].pdf(x);
  return total;
}

double GaussianMixture::log_pdf(const Eigen::Ref<const Vector>& x) const {
  Vector terms(size());
  for (int k = 0; k < size(); ++k) terms[k] = std::log(weight(k)) + component(k).log_pdf(x);
  return log_sum_exp(terms);
}

Vector GaussianMixture::responsibilities(const Eigen::Ref<const Vector>& x) const {
  Vector terms(size());
  for (int k = 0; k < size(); ++k) terms[k] = std::log(weight(k)) + component(k).log_pdf(x);
  const double norm = log_sum_exp(terms);
  return (terms.array() - norm).exp().matrix();
}

Vector GaussianMixture::mean() const {
  Vector m = Vector::Zero(dim());
  for (int k = 0; k < size(); ++k) m += weight(k) * component(k).mean();
  return m;
}

Matrix GaussianMixture::covariance() const {
  const Vector m = mean();
  Matrix c = Matrix::Zero(dim(), dim());
  for (int k = 0; k < size(); ++k) {
    const Vector diff = component(k).mean() - m;
    c += weight(k) * (component(k).cov().matrix() + diff * diff.transpose());
  }
  return c;
}

std::vector<double> cumulative_weights(const std::vector<double>& weights) {
  std::vector<double> cumulative(weights.size());
  std::partial_sum(weights.begin(), weights.end(), cumulative.begin());
  return cumulative;
}

int draw_category(const std::vector<double>& cumulative, double u) {
  const double scaled = u * cumulative.back();
  const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), scaled);
  const auto index = std::distance(cumulative.begin(), it);
  return static_cast<int>(std::min<std::ptrdiff_t>(index, static_cast<std::ptrdiff_t>(cumulative.size()) - 1));
}

void draw_gaussian(const Gaussian& g, const RandomStream& stream, std::uint32_t tag,
                   std::uint32_t step, std::span<double> z, double* out) {
  const int d = g.dim();
  stream.normals(tag, step, z.first(static_cast<std::size_t>(d)));
  const Matrix& root = g.sqrt_cov();
  for (int a = 0; a < d; ++a) {
    double acc = g.mean()[a];
    for (int b = 0; b < d; ++b) acc += root(a, b) * z[static_cast<std::size_t>(b)];
    out[a] = acc;
  }
}

PointSet sample(const Gaussian& g, std::size_t n, std::uint64_t seed) {
  return sample(GaussianMixture(g), n, seed);
}

PointSet sample(const GaussianMixture& g, std::size_t n, std::uint64_t seed) {
  if (n == 0) fail(ErrorKind::DomainError, "sample count must be >= 1");
  const int d = g.dim();
  PointSet out(static_cast<Eigen::Index>(n), d);
  const auto cumulative = cumulative_weights(g.weights());
  std::vector<double> z(static_cast<std::size_t>(d));
  for (std::size_t p = 0; p < n; ++p) {
    const RandomStream stream(seed, p);
    const int k = g.size() == 1 ? 0 : draw_category(cumulative, stream.uniform(stream_tag::kCategory, 0));
    draw_gaussian(g.component(k), stream, stream_tag::kInitial, 0, z, out.row(static_cast<Eigen::Index>(p)).data());
  }
  return out;
}

double log_likelihood(const GaussianMixture& mixture, const PointSet& points) {
  double total = 0.0;
  for (Eigen::Index p = 0; p < points.rows(); ++p) total += mixture.log_pdf(points.row(p).transpose());
  return total;
}

namespace {

struct EmState {
  std::vector<double> weights;
  std::vector<Vector> means;
  std::vector<Matrix> covs;
};

GaussianMixture to_mixture(const EmState& s, double floor) {
  std::vector<Gaussian> comps;
  comps.reserve(s.means.size());
  for (std::size_t k = 0; k < s.means.size(); ++k) {
    comps.emplace_back(s.means[k], SpdMatrix::clamped(s.covs[k], floor));
  }
  std::vector<double> w = s.weights;
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& v : w) v /= total;
  return GaussianMixture(std::move(w), std::move(comps));
}

std::vector<Eigen::Index> kmeans_pp(const PointSet& points, int k, std::uint64_t seed) {
  const Eigen::Index n = points.rows();
  const RandomStream stream(seed, 0);
  std::vector<Eigen::Index> centers;
  centers.push_back(std::min<Eigen::Index>(
      n - 1, static_cast<Eigen::Index>(stream.uniform(stream_tag::kKmeans, 0) * static_cast<double>(n))));
  std::vector<double> dist2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  for (int c = 1; c < k; ++c) {
    const auto last = points.row(centers.back());
    for (Eigen::Index p = 0; p < n; ++p) {
      dist2[static_cast<std::size_t>(p)] =
          std::min(dist2[static_cast<std::size_t>(p)], (points.row(p) - last).squaredNorm());
    }
    const auto cumulative = cumulative_weights(dist2);
    if (!(cumulative.back() > 0.0)) {
      fail(ErrorKind::EmptyCluster, "k-means++ seeding found fewer distinct points than components");
    }
    centers.push_back(draw_category(cumulative, stream.uniform(stream_tag::kKmeans, static_cast<std::uint32_t>(c))));
  }
  return centers;
}

}  // namespace

EmFit em_fit(const PointSet& points, const EmOptions& options) {
  const int k_count = options.n_components;
  const Eigen::Index n = points.rows();
  const int d = static_cast<int>(points.cols());
  if (k_count < 1) fail(ErrorKind::DomainError, "n_components must be >= 1");
  if (n < k_count) fail(ErrorKind::DomainError, "fewer points than mixture components");
  if (!points.allFinite()) fail(ErrorKind::NonFinite, "point cloud contains non-finite values");

  const Matrix data_cov = data_covariance(points);
  const double floor = options.cov_floor.value_or(1e-4 * data_cov.trace() / d);
  if (!(floor > 0.0)) fail(ErrorKind::DomainError, "covariance floor must be positive");

  // Hard-assignment moment step from k-means++ centers.
  const auto centers = kmeans_pp(points, k_count, options.seed);
  std::vector<int> assignment(static_cast<std::size_t>(n));
  for (Eigen::Index p = 0; p < n; ++p) {
    double best = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k_count; ++c) {
      const double dd = (points.row(p) - points.row(centers[static_cast<std::size_t>(c)])).squaredNorm();
      if (dd < best) {
        best = dd;
        assignment[static_cast<std::size_t>(p)] = c;
      }
    }
  }
  EmState state{std::vector<double>(static_cast<std::size_t>(k_count), 0.0),
                std::vector<Vector>(static_cast<std::size_t>(k_count), Vector::Zero(d)),
                std::vector<Matrix>(static_cast<std::size_t>(k_count), Matrix::Zero(d, d))};
  for (Eigen::Index p = 0; p < n; ++p) {
    const auto c = static_cast<std::size_t>(assignment[static_cast<std::size_t>(p)]);
    state.weights[c] += 1.0;
    state.means[c] += points.row(p).transpose();
  }
  for (int c = 0; c < k_count; ++c) {
    const auto cc = static_cast<std::size_t>(c);
    state.means[cc] /= state.weights[cc];
  }
  for (Eigen::Index p = 0; p < n; ++p) {
    const auto c = static_cast<std::size_t>(assignment[static_cast<std::size_t>(p)]);
    const Vector diff = points.row(p).transpose() - state.means[c];
    state.covs[c] += diff * diff.transpose();
  }
  for (int c = 0; c < k_count; ++c) {
    const auto cc = static_cast<std::size_t>(c);
    state.covs[cc] /= state.weights[cc];
    state.weights[cc] /= static_cast<double>(n);
  }

  EmFit fit{to_mixture(state, floor), {}, 0, 0, false};
  Matrix log_resp(n, k_count);
  Vector row(k_count);
  const double mass_floor = 1e-10;

  for (int iter = 0; iter < options.max_iter; ++iter) {
    // E-step.
    double ll = 0.0;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (int c = 0; c < k_count; ++c) {
        row[c] = std::log(fit.mixture.weight(c)) + fit.mixture.component(c).log_pdf(points.row(p).transpose());
      }
      const double norm = log_sum_exp(row);
      log_resp.row(p) = (row.array() - norm).transpose();
      ll += norm;
    }
    fit.log_likelihood.push_back(ll);
    fit.iterations = iter + 1;
    if (fit.log_likelihood.size() >= 2) {
      const double prev = fit.log_likelihood[fit.log_likelihood.size() - 2];
      if ((ll - prev) < options.rel_tol * std::abs(prev)) {
        fit.converged = true;
        break;
      }
    }

    // M-step.
    const Matrix resp = log_resp.array().exp().matrix();
    const Vector mass = resp.colwise().sum().transpose();
    bool reseeded = false;
    for (int c = 0; c < k_count; ++c) {
      const auto cc = static_cast<std::size_t>(c);
      if (mass[c] < mass_floor) {
        if (fit.reseeds >= options.max_reseeds) {
          fail(ErrorKind::EmptyCluster, "component " + std::to_string(c) +
                                            " lost all responsibility mass after " +
                                            std::to_string(fit.reseeds) + " re-seeds");
        }
        Eigen::Index worst = 0;
        double worst_ll = std::numeric_limits<double>::infinity();
        for (Eigen::Index p = 0; p < n; ++p) {
          const double lp = fit.mixture.log_pdf(points.row(p).transpose());
          if (lp < worst_ll) {
            worst_ll = lp;
            worst = p;
          }
        }
        state.means[cc] = points.row(worst).transpose();
        state.covs[cc] = data_cov / static_cast<double>(k_count);
        state.weights[cc] = 1.0 / static_cast<double>(k_count);
        ++fit.reseeds;
        reseeded = true;
        continue;
      }
      state.weights[cc] = mass[c] / static_cast<double>(n);
      Vector mean = (resp.col(c).transpose() * points).transpose() / mass[c];
      const PointSet centered = points.rowwise() - mean.transpose();
      Matrix scatter = centered.transpose() * resp.col(c).asDiagonal() * centered;
      state.means[cc] = std::move(mean);
      state.covs[cc] = scatter / mass[c];
    }
    fit.mixture = to_mixture(state, floor);
    if (reseeded) fit.log_likelihood.clear();
  }
  return fit;
}

}  // namespace mixbridge
