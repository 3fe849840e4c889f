#include "mixbridge/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "mixbridge/error.hpp"
#include "mixbridge/parallel.hpp"

namespace mixbridge {
namespace {

void check_options(const SimulationOptions& options) {
  if (options.n_particles < 1) fail(ErrorKind::DomainError, "simulation needs n_particles >= 1");
  if (options.n_steps < 2) fail(ErrorKind::DomainError, "simulation needs n_steps >= 2");
  if (options.record_every < 0) fail(ErrorKind::DomainError, "record_every must be >= 0");
}

ParticleEnsemble empty_ensemble(const SimulationOptions& options, int dim) {
  ParticleEnsemble ens;
  ens.n_particles = options.n_particles;
  ens.dim = dim;
  ens.n_steps = options.n_steps;
  ens.seed = options.seed;
  const int every = options.record_every > 0 ? options.record_every
                                             : std::max(1, options.n_steps / 100);
  for (int k = 0; k <= options.n_steps; k += every) ens.steps.push_back(k);
  if (ens.steps.back() != options.n_steps) ens.steps.push_back(options.n_steps);
  for (int k : ens.steps) ens.times.push_back(static_cast<double>(k) / options.n_steps);
  ens.positions.assign(options.n_particles * ens.steps.size() * static_cast<std::size_t>(dim), 0.0);
  ens.path_energy.assign(options.n_particles, 0.0);
  return ens;
}

// Runs the Euler-Maruyama loop for one particle; `drift(k, x, out)` fills the
// drift at step k.
template <class Drift>
void integrate(ParticleEnsemble& ens, std::size_t p, const RandomStream& stream, double eps,
               std::vector<double>& x, std::vector<double>& z, std::vector<double>& u,
               Drift&& drift) {
  const int d = ens.dim;
  const int n = ens.n_steps;
  const double dt = 1.0 / n;
  const double noise = std::sqrt(eps * dt);
  std::size_t record = 0;
  double* base = &ens.positions[p * ens.n_records() * static_cast<std::size_t>(d)];
  double energy = 0.0;
  for (int k = 0; k <= n; ++k) {
    if (record < ens.steps.size() && ens.steps[record] == k) {
      std::copy(x.begin(), x.end(), base + record * static_cast<std::size_t>(d));
      ++record;
    }
    if (k == n) break;
    drift(k, x.data(), u.data());
    stream.normals(stream_tag::kIncrement, static_cast<std::uint32_t>(k), z);
    double sq = 0.0;
    for (int a = 0; a < d; ++a) {
      const auto ia = static_cast<std::size_t>(a);
      sq += u[ia] * u[ia];
      x[ia] += u[ia] * dt + noise * z[ia];
    }
    energy += 0.5 * sq * dt;
  }
  for (double v : x) {
    if (!std::isfinite(v)) fail(ErrorKind::NonFinite, "particle " + std::to_string(p) + " diverged");
  }
  ens.path_energy[p] = energy;
}

}  // namespace

std::size_t ParticleEnsemble::record_at(double t) const {
  for (std::size_t r = 0; r < times.size(); ++r) {
    if (std::abs(times[r] - t) < 1e-12) return r;
  }
  fail(ErrorKind::DomainError, "time " + std::to_string(t) + " was not recorded");
}

PointSet ParticleEnsemble::slice(std::size_t record) const {
  PointSet out(static_cast<Eigen::Index>(n_particles), dim);
  for (std::size_t p = 0; p < n_particles; ++p) {
    const double* x = position(p, record);
    for (int a = 0; a < dim; ++a) out(static_cast<Eigen::Index>(p), a) = x[a];
  }
  return out;
}

std::vector<FlowSlice> step_slices(const ProjectedFlow& flow, int n_steps) {
  std::vector<FlowSlice> slices;
  slices.reserve(static_cast<std::size_t>(n_steps));
  for (int k = 0; k < n_steps; ++k) slices.push_back(flow.slice(static_cast<double>(k) / n_steps));
  return slices;
}

void draw_initial(const GaussianMixture& rho0, const std::vector<double>& cumulative,
                  const RandomStream& stream, std::span<double> z, double* out) {
  const int k = rho0.size() == 1 ? 0 : draw_category(cumulative, stream.uniform(stream_tag::kCategory, 0));
  draw_gaussian(rho0.component(k), stream, stream_tag::kInitial, 0, z, out);
}

std::vector<double> cumulative_plan(const Matrix& pi) {
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(pi.size()));
  for (Eigen::Index i = 0; i < pi.rows(); ++i) {
    for (Eigen::Index j = 0; j < pi.cols(); ++j) flat.push_back(pi(i, j));
  }
  return cumulative_weights(flat);
}

std::pair<int, int> draw_label(const Matrix& pi, const std::vector<double>& cumulative,
                               const RandomStream& stream) {
  int flat = draw_category(cumulative, stream.uniform(stream_tag::kLabel, 0));
  while (flat > 0 && pi(flat / pi.cols(), flat % pi.cols()) <= 0.0) --flat;
  return {static_cast<int>(flat / pi.cols()), static_cast<int>(flat % pi.cols())};
}

ParticleEnsemble simulate_markov(const ProjectedFlow& flow, const GaussianMixture& rho0,
                                 const SimulationOptions& options) {
  check_options(options);
  require_dims(flow.dim(), rho0.dim(), "initial mixture");
  const int d = flow.dim();
  ParticleEnsemble ens = empty_ensemble(options, d);
  const std::vector<FlowSlice> slices = step_slices(flow, options.n_steps);
  const auto cumulative = cumulative_weights(rho0.weights());
  const double eps = flow.eps();

  parallel_for(options.n_particles, [&](std::size_t begin, std::size_t end) {
    const auto du = static_cast<std::size_t>(d);
    std::vector<double> x(du), z(du), u(du);
    FlowWorkspace ws;
    slices.front().prepare(ws);
    for (std::size_t p = begin; p < end; ++p) {
      const RandomStream stream(options.seed, p);
      draw_initial(rho0, cumulative, stream, z, x.data());
      integrate(ens, p, stream, eps, x, z, u, [&](int k, const double* xk, double* out) {
        slices[static_cast<std::size_t>(k)].evaluate(xk, ws);
        std::copy(ws.ubar.begin(), ws.ubar.end(), out);
      });
    }
  });
  return ens;
}

ParticleEnsemble simulate_labeled(const BridgeGrid& bridges, const Coupling& pi,
                                  const SimulationOptions& options) {
  check_options(options);
  const int d = bridges.dim();
  ParticleEnsemble ens = empty_ensemble(options, d);
  const ProjectedFlow flow(pi, bridges);
  const std::vector<FlowSlice> slices = step_slices(flow, options.n_steps);
  const auto cumulative = cumulative_plan(pi.pi());
  std::vector<std::pair<int, int>> labels(options.n_particles);

  parallel_for(options.n_particles, [&](std::size_t begin, std::size_t end) {
    const auto du = static_cast<std::size_t>(d);
    std::vector<double> x(du), z(du), u(du);
    for (std::size_t p = begin; p < end; ++p) {
      const RandomStream stream(options.seed, p);
      const auto label = draw_label(pi.pi(), cumulative, stream);
      labels[p] = label;
      const int active = slices.front().active_index(label.first, label.second);
      draw_gaussian(bridges.at(label.first, label.second).source(), stream, stream_tag::kInitial, 0, z,
                    x.data());
      integrate(ens, p, stream, bridges.eps(), x, z, u, [&](int k, const double* xk, double* out) {
        slices[static_cast<std::size_t>(k)].pair_drift(active, xk, out);
      });
    }
  });
  ens.labels = std::move(labels);
  return ens;
}

double mixture_cdf_1d(const GaussianMixture& mixture, double x) {
  require_dims(1, mixture.dim(), "1D mixture CDF");
  double total = 0.0;
  for (int k = 0; k < mixture.size(); ++k) {
    const auto& g = mixture.component(k);
    const double sd = std::sqrt(g.cov().matrix()(0, 0));
    total += mixture.weight(k) * 0.5 * std::erfc(-(x - g.mean()[0]) / (sd * std::numbers::sqrt2));
  }
  return total;
}

double ks_statistic_1d(std::vector<double> samples, const GaussianMixture& mixture) {
  if (samples.empty()) fail(ErrorKind::DomainError, "KS statistic needs samples");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double stat = 0.0;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const double f = mixture_cdf_1d(mixture, samples[k]);
    stat = std::max({stat, f - static_cast<double>(k) / n, static_cast<double>(k + 1) / n - f});
  }
  return stat;
}

TerminalValidation validate_terminal(const PointSet& terminal, const GaussianMixture& target) {
  require_dims(target.dim(), terminal.cols(), "terminal slice");
  if (terminal.rows() == 0) fail(ErrorKind::DomainError, "terminal slice is empty");
  const int d = target.dim();
  const int n_modes = target.size();
  TerminalValidation out{};
  if (d == 1) {
    std::vector<double> xs(terminal.data(), terminal.data() + terminal.rows());
    out.ks_1d = ks_statistic_1d(std::move(xs), target);
  }
  std::vector<std::size_t> counts(static_cast<std::size_t>(n_modes), 0);
  std::vector<Vector> sums(static_cast<std::size_t>(n_modes), Vector::Zero(d));
  for (Eigen::Index p = 0; p < terminal.rows(); ++p) {
    const Vector x = terminal.row(p).transpose();
    Eigen::Index best = 0;
    target.responsibilities(x).maxCoeff(&best);
    ++counts[static_cast<std::size_t>(best)];
    sums[static_cast<std::size_t>(best)] += x;
  }
  const double n = static_cast<double>(terminal.rows());
  double weight_err = 0.0;
  double moment_err = 0.0;
  for (int k = 0; k < n_modes; ++k) {
    const auto c = counts[static_cast<std::size_t>(k)];
    weight_err += std::abs(static_cast<double>(c) / n - target.weight(k));
    if (c == 0) {
      moment_err = std::numeric_limits<double>::infinity();
      continue;
    }
    const Vector diff = sums[static_cast<std::size_t>(k)] / static_cast<double>(c) - target.component(k).mean();
    moment_err = std::max(moment_err, std::sqrt(diff.dot(target.component(k).precision() * diff)));
  }
  out.mode_weight_err = weight_err;
  out.mode_moment_err = moment_err;
  return out;
}

TerminalValidation validate_terminal(const ParticleEnsemble& ensemble, const GaussianMixture& target) {
  return validate_terminal(ensemble.terminal(), target);
}

Json to_json(const TerminalValidation& v) {
  Json out;
  out["ks_1d"] = v.ks_1d ? Json(*v.ks_1d) : Json(nullptr);
  out["mode_weight_err"] = v.mode_weight_err;
  out["mode_moment_err"] = v.mode_moment_err;
  return out;
}

void write_paths_csv(const std::filesystem::path& path, const ParticleEnsemble& ensemble,
                     std::size_t every) {
  if (every < 1) fail(ErrorKind::DomainError, "path decimation must be >= 1");
  const int d = ensemble.dim;
  std::string text = "particle_id,t";
  for (int a = 0; a < d; ++a) text += ",x" + std::to_string(a + 1);
  if (ensemble.labels) text += ",label_i,label_j";
  text += '\n';
  for (std::size_t p = 0; p < ensemble.n_particles; p += every) {
    for (std::size_t r = 0; r < ensemble.n_records(); ++r) {
      text += std::to_string(p) + ',' + format_double(ensemble.times[r]);
      const double* x = ensemble.position(p, r);
      for (int a = 0; a < d; ++a) text += ',' + format_double(x[a]);
      if (ensemble.labels) {
        const auto& l = (*ensemble.labels)[p];
        text += ',' + std::to_string(l.first) + ',' + std::to_string(l.second);
      }
      text += '\n';
    }
  }
  write_text_atomic(path, text);
}

}  // namespace mixbridge
