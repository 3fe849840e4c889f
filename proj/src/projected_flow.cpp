#include "mixbridge/projected_flow.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "mixbridge/error.hpp"
#include "mixbridge/parallel.hpp"
#include "mixbridge/rng.hpp"

namespace mixbridge {
namespace {

template <class T>
void append(std::vector<double>& out, const T& m) {
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) out.push_back(m(r, c));
  }
}

// Column-major d x d block times vector.
inline void mat_vec(const double* m, const double* v, int d, double* out) {
  for (int a = 0; a < d; ++a) out[a] = 0.0;
  for (int b = 0; b < d; ++b) {
    const double vb = v[b];
    const double* col = m + b * d;
    for (int a = 0; a < d; ++a) out[a] += col[a] * vb;
  }
}

}  // namespace

FlowSlice::FlowSlice(const Coupling& pi, const BridgeGrid& bridges, double t)
    : t_(t), d_(bridges.dim()), eps_(bridges.eps()), n2_(bridges.n2()) {
  require_unit_time(t, "flow slice");
  require_dims(bridges.n1(), pi.n1(), "coupling rows vs bridge grid");
  require_dims(bridges.n2(), pi.n2(), "coupling columns vs bridge grid");
  index_.assign(static_cast<std::size_t>(bridges.n1() * bridges.n2()), -1);
  const double log_2pi = std::log(2.0 * std::numbers::pi);
  for (int i = 0; i < bridges.n1(); ++i) {
    for (int j = 0; j < bridges.n2(); ++j) {
      const double w = pi(i, j);
      if (!(w > 0.0)) continue;
      const PairwiseBridge& b = bridges.at(i, j);
      const Matrix cov = b.cov_at(t);
      const Eigen::LLT<Matrix> llt(cov);
      if (llt.info() != Eigen::Success) {
        fail(ErrorKind::NotPositiveDefinite, "bridge marginal covariance is not positive definite");
      }
      const Matrix lower = llt.matrixL();
      const Matrix precision = symmetrize(llt.solve(Matrix::Identity(d_, d_)));
      const Matrix a = llt.solve(b.s_at(t).transpose()).transpose();
      const Matrix rate = b.cov_rate(t);
      const double logdet = 2.0 * lower.diagonal().array().log().sum();
      index_[static_cast<std::size_t>(i * n2_ + j)] = static_cast<int>(pair_i_.size());
      pair_i_.push_back(i);
      pair_j_.push_back(j);
      log_weight_.push_back(std::log(w) - 0.5 * (d_ * log_2pi + logdet));
      append(mean_, b.mean_at(t));
      append(precision_, precision);
      append(chol_, lower);
      append(a_, a);
      append(c_, b.c());
      append(cov_rate_, rate);
      trace_a_.push_back(a.trace());
      trace_p_.push_back(precision.trace());
    }
  }
  if (pair_i_.empty()) fail(ErrorKind::InvalidSimplex, "coupling has no positive entries");
}

int FlowSlice::active_index(int i, int j) const {
  return index_[static_cast<std::size_t>(i * n2_ + j)];
}

void FlowSlice::prepare(FlowWorkspace& ws) const {
  const auto n = static_cast<std::size_t>(n_active());
  const auto d = static_cast<std::size_t>(d_);
  ws.log_terms.resize(n);
  ws.gamma.resize(n);
  ws.u.resize(n * d);
  ws.ubar.resize(d);
  ws.r.resize(2 * d);
}

double FlowSlice::pair_log_pdf(int p, const double* x, double* scratch) const {
  const int d = d_;
  const double* m = mean(p);
  double* r = scratch;
  double* pr = scratch + d;
  for (int a = 0; a < d; ++a) r[a] = x[a] - m[a];
  mat_vec(&precision_[static_cast<std::size_t>(p * d * d)], r, d, pr);
  double q = 0.0;
  for (int a = 0; a < d; ++a) q += r[a] * pr[a];
  return log_weight_[static_cast<std::size_t>(p)] - 0.5 * q;
}

void FlowSlice::pair_drift(int p, const double* x, double* out) const {
  const int d = d_;
  const double* m = mean(p);
  const double* a = &a_[static_cast<std::size_t>(p * d * d)];
  const double* c = &c_[static_cast<std::size_t>(p * d)];
  for (int k = 0; k < d; ++k) out[k] = c[k];
  for (int b = 0; b < d; ++b) {
    const double rb = x[b] - m[b];
    for (int k = 0; k < d; ++k) out[k] += a[b * d + k] * rb;
  }
}

double FlowSlice::evaluate(const double* x, FlowWorkspace& ws) const {
  const int n = n_active();
  const int d = d_;
  double top = -std::numeric_limits<double>::infinity();
  for (int p = 0; p < n; ++p) {
    const double l = pair_log_pdf(p, x, ws.r.data());
    ws.log_terms[static_cast<std::size_t>(p)] = l;
    if (l > top) top = l;
    pair_drift(p, x, &ws.u[static_cast<std::size_t>(p * d)]);
  }
  if (!std::isfinite(top)) fail(ErrorKind::NonFinite, "projected density evaluation failed");
  double total = 0.0;
  for (int p = 0; p < n; ++p) {
    const double g = std::exp(ws.log_terms[static_cast<std::size_t>(p)] - top);
    ws.gamma[static_cast<std::size_t>(p)] = g;
    total += g;
  }
  for (int k = 0; k < d; ++k) ws.ubar[static_cast<std::size_t>(k)] = 0.0;
  for (int p = 0; p < n; ++p) {
    double& g = ws.gamma[static_cast<std::size_t>(p)];
    g /= total;
    const double* u = &ws.u[static_cast<std::size_t>(p * d)];
    for (int k = 0; k < d; ++k) ws.ubar[static_cast<std::size_t>(k)] += g * u[k];
  }
  return top + std::log(total);
}

double FlowSlice::fokker_planck_residual(const double* x, double drift_scale,
                                         FlowWorkspace& ws) const {
  if (!(t_ > 0.0 && t_ < 1.0)) {
    fail(ErrorKind::DomainError, "Fokker-Planck residual needs t in (0, 1)");
  }
  evaluate(x, ws);
  const int n = n_active();
  const int d = d_;
  using Map = Eigen::Map<const Matrix>;
  using VMap = Eigen::Map<const Vector>;
  const VMap xv(x, d);
  const VMap ubar(ws.ubar.data(), d);

  // v_p = P_p (x - m_p) = -grad log N_p
  Matrix v(d, n);
  Vector vbar = Vector::Zero(d);
  for (int p = 0; p < n; ++p) {
    const Map precision(&precision_[static_cast<std::size_t>(p * d * d)], d, d);
    v.col(p) = precision * (xv - VMap(mean(p), d));
    vbar += ws.gamma[static_cast<std::size_t>(p)] * v.col(p);
  }

  double time_term = 0.0;
  double lap_term = 0.0;
  double div_u = 0.0;
  for (int p = 0; p < n; ++p) {
    const double g = ws.gamma[static_cast<std::size_t>(p)];
    const Map precision(&precision_[static_cast<std::size_t>(p * d * d)], d, d);
    const Map rate(&cov_rate_[static_cast<std::size_t>(p * d * d)], d, d);
    const VMap c(&c_[static_cast<std::size_t>(p * d)], d);
    const VMap u(&ws.u[static_cast<std::size_t>(p * d)], d);
    const Vector vp = v.col(p);
    const double dlog = -0.5 * (precision * rate).trace() + vp.dot(c) + 0.5 * vp.dot(rate * vp);
    time_term += g * dlog;
    lap_term += g * (vp.squaredNorm() - trace_p_[static_cast<std::size_t>(p)]);
    // div(gamma_p u_p) = gamma_p (tr A_p + u_p . (s_p - sbar)), s = -v
    div_u += g * (trace_a_[static_cast<std::size_t>(p)] + u.dot(vbar - vp));
  }
  // div(rho ubar) / rho = sbar . ubar + div ubar
  const double flux = -vbar.dot(ubar) + div_u;
  const double residual = time_term + drift_scale * flux - 0.5 * eps_ * lap_term;
  return std::abs(residual) / ((1.0 + ubar.squaredNorm()) / eps_);
}

ProjectedFlow::ProjectedFlow(Coupling pi, BridgeGrid bridges)
    : pi_(std::move(pi)), bridges_(std::move(bridges)) {
  require_dims(bridges_.n1(), pi_.n1(), "coupling rows vs bridge grid");
  require_dims(bridges_.n2(), pi_.n2(), "coupling columns vs bridge grid");
}

FlowSlice ProjectedFlow::slice(double t) const { return FlowSlice(pi_, bridges_, t); }

double ProjectedFlow::density(double t, const Eigen::Ref<const Vector>& x) const {
  require_dims(dim(), x.size(), "density point");
  const FlowSlice s = slice(t);
  FlowWorkspace ws;
  s.prepare(ws);
  const Vector xc = x;
  return std::exp(s.evaluate(xc.data(), ws));
}

Matrix ProjectedFlow::posterior(double t, const Eigen::Ref<const Vector>& x) const {
  require_dims(dim(), x.size(), "posterior point");
  const FlowSlice s = slice(t);
  FlowWorkspace ws;
  s.prepare(ws);
  const Vector xc = x;
  s.evaluate(xc.data(), ws);
  Matrix gamma = Matrix::Zero(pi_.n1(), pi_.n2());
  for (int p = 0; p < s.n_active(); ++p) gamma(s.pair_i(p), s.pair_j(p)) = ws.gamma[static_cast<std::size_t>(p)];
  return gamma;
}

Vector ProjectedFlow::drift(double t, const Eigen::Ref<const Vector>& x) const {
  require_dims(dim(), x.size(), "drift point");
  const FlowSlice s = slice(t);
  FlowWorkspace ws;
  s.prepare(ws);
  const Vector xc = x;
  s.evaluate(xc.data(), ws);
  return Eigen::Map<const Vector>(ws.ubar.data(), dim());
}

double ProjectedFlow::fokker_planck_residual(double t, const Eigen::Ref<const Vector>& x,
                                             double drift_scale) const {
  require_dims(dim(), x.size(), "residual point");
  if (!(t > 0.0 && t < 1.0)) fail(ErrorKind::DomainError, "Fokker-Planck residual needs t in (0, 1)");
  const FlowSlice s = slice(t);
  FlowWorkspace ws;
  s.prepare(ws);
  const Vector xc = x;
  return s.fokker_planck_residual(xc.data(), drift_scale, ws);
}

KineticEnergy kinetic_energy(const ProjectedFlow& flow, const CostMatrix& costs, int n_time,
                             int n_samples, std::uint64_t seed) {
  const std::vector<double> w = simpson_weights(n_time);
  if (n_samples < 100) fail(ErrorKind::DomainError, "kinetic energy needs n_samples >= 100");
  require_dims(flow.pi().n1(), costs.c.rows(), "cost rows");
  require_dims(flow.pi().n2(), costs.c.cols(), "cost columns");

  std::vector<FlowSlice> slices;
  slices.reserve(static_cast<std::size_t>(n_time));
  for (int k = 0; k < n_time; ++k) slices.push_back(flow.slice(static_cast<double>(k) / (n_time - 1)));
  const int n_active = slices.front().n_active();
  const int d = flow.dim();

  struct Stratum {
    double mean = 0.0;
    double var = 0.0;
  };
  std::vector<Stratum> strata(static_cast<std::size_t>(n_time * n_active));
  parallel_for(strata.size(), [&](std::size_t begin, std::size_t end) {
    std::vector<double> z(static_cast<std::size_t>(d));
    std::vector<double> x(static_cast<std::size_t>(d));
    FlowWorkspace ws;
    for (std::size_t idx = begin; idx < end; ++idx) {
      const int node = static_cast<int>(idx) / n_active;
      const int p = static_cast<int>(idx) % n_active;
      const FlowSlice& s = slices[static_cast<std::size_t>(node)];
      s.prepare(ws);
      const RandomStream stream(seed, derive_stream(static_cast<std::uint64_t>(node),
                                                    static_cast<std::uint64_t>(s.pair_i(p)),
                                                    static_cast<std::uint64_t>(s.pair_j(p))));
      const double* m = s.mean(p);
      const double* lower = s.chol(p);
      double sum = 0.0;
      double sum_sq = 0.0;
      for (int n = 0; n < n_samples; ++n) {
        stream.normals(stream_tag::kStratum, static_cast<std::uint32_t>(n), z);
        for (int a = 0; a < d; ++a) {
          double acc = m[a];
          for (int b = 0; b <= a; ++b) acc += lower[b * d + a] * z[static_cast<std::size_t>(b)];
          x[static_cast<std::size_t>(a)] = acc;
        }
        s.evaluate(x.data(), ws);
        double e = 0.0;
        for (int a = 0; a < d; ++a) e += ws.ubar[static_cast<std::size_t>(a)] * ws.ubar[static_cast<std::size_t>(a)];
        sum += e;
        sum_sq += e * e;
      }
      const double mean = sum / n_samples;
      const double var = std::max(0.0, (sum_sq - n_samples * mean * mean) / (n_samples - 1));
      strata[idx] = {mean, var};
    }
  });

  double j_proj = 0.0;
  double var = 0.0;
  for (int node = 0; node < n_time; ++node) {
    const FlowSlice& s = slices[static_cast<std::size_t>(node)];
    double value = 0.0;
    double value_var = 0.0;
    for (int p = 0; p < n_active; ++p) {
      const Stratum& st = strata[static_cast<std::size_t>(node * n_active + p)];
      const double weight = flow.pi()(s.pair_i(p), s.pair_j(p));
      value += weight * st.mean;
      value_var += weight * weight * st.var / n_samples;
    }
    const double wk = w[static_cast<std::size_t>(node)];
    j_proj += 0.5 * wk * value;
    var += 0.25 * wk * wk * value_var;
  }
  const double j_lift = (flow.pi().pi().array() * costs.c.array()).sum();
  return {j_proj, j_lift, std::sqrt(var)};
}

void write_flow_slices_csv(const std::filesystem::path& path, const ProjectedFlow& flow,
                           const std::vector<double>& times, const Vector& lo, const Vector& hi,
                           int n_per_axis) {
  const int d = flow.dim();
  require_dims(d, lo.size(), "slice box lower corner");
  require_dims(d, hi.size(), "slice box upper corner");
  if (n_per_axis < 2) fail(ErrorKind::DomainError, "flow slices need at least 2 nodes per axis");
  std::size_t total = 1;
  for (int a = 0; a < d; ++a) total *= static_cast<std::size_t>(n_per_axis);

  std::string text = "t";
  for (int a = 0; a < d; ++a) text += ",x" + std::to_string(a + 1);
  text += ",rho";
  for (int a = 0; a < d; ++a) text += ",u" + std::to_string(a + 1);
  text += '\n';

  std::vector<double> x(static_cast<std::size_t>(d));
  FlowWorkspace ws;
  for (double t : times) {
    const FlowSlice s = flow.slice(t);
    s.prepare(ws);
    for (std::size_t idx = 0; idx < total; ++idx) {
      std::size_t rest = idx;
      for (int a = d - 1; a >= 0; --a) {
        const auto k = static_cast<double>(rest % static_cast<std::size_t>(n_per_axis));
        rest /= static_cast<std::size_t>(n_per_axis);
        x[static_cast<std::size_t>(a)] = lo[a] + (hi[a] - lo[a]) * k / (n_per_axis - 1);
      }
      const double rho = std::exp(s.evaluate(x.data(), ws));
      text += format_double(t);
      for (int a = 0; a < d; ++a) text += ',' + format_double(x[static_cast<std::size_t>(a)]);
      text += ',' + format_double(rho);
      for (int a = 0; a < d; ++a) text += ',' + format_double(ws.ubar[static_cast<std::size_t>(a)]);
      text += '\n';
    }
  }
  write_text_atomic(path, text);
}

}  // namespace mixbridge
