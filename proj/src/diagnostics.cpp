#include "mixbridge/diagnostics.hpp"

#include <cmath>
#include <limits>

#include "mixbridge/error.hpp"
#include "mixbridge/parallel.hpp"

namespace mixbridge {
namespace {

// Subtracts the log-sum-exp in place and returns it.
double normalize_log(std::vector<double>& logs) {
  double top = -std::numeric_limits<double>::infinity();
  for (double l : logs) top = std::max(top, l);
  if (!std::isfinite(top)) fail(ErrorKind::DegeneratePosterior, "all label log-weights underflowed");
  double total = 0.0;
  for (double l : logs) total += std::exp(l - top);
  const double norm = top + std::log(total);
  for (double& l : logs) l -= norm;
  return norm;
}

Estimate summarize(const std::vector<double>& values) {
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double var = values.size() > 1 ? ss / (n - 1.0) : 0.0;
  return {mean, std::sqrt(var / n)};
}

void check_support(const Coupling& pi, const Coupling& eta) {
  require_dims(pi.n1(), eta.n1(), "prior rows");
  require_dims(pi.n2(), eta.n2(), "prior columns");
  for (int i = 0; i < pi.n1(); ++i) {
    for (int j = 0; j < pi.n2(); ++j) {
      if (pi(i, j) > 0.0 && !(eta(i, j) > 0.0)) {
        fail(ErrorKind::SupportViolation, "plan puts mass where the prior vanishes");
      }
    }
  }
}

// Log of the Euler transition density up to a label-independent constant.
double transition_log(const double* x0, const double* x1, const double* u, int d, double dt,
                      double eps) {
  double sq = 0.0;
  for (int a = 0; a < d; ++a) {
    const double r = x1[a] - x0[a] - u[a] * dt;
    sq += r * r;
  }
  return -sq / (2.0 * eps * dt);
}

}  // namespace

std::vector<Matrix> label_filter(const BridgeGrid& bridges, const Coupling& pi, const PointSet& path) {
  const int d = bridges.dim();
  require_dims(d, path.cols(), "path");
  const int n = static_cast<int>(path.rows()) - 1;
  if (n < 1) fail(ErrorKind::DomainError, "label filter needs at least two path points");
  const ProjectedFlow flow(pi, bridges);
  const std::vector<FlowSlice> slices = step_slices(flow, n);
  const FlowSlice& first = slices.front();
  const int n_active = first.n_active();
  const double dt = 1.0 / n;

  std::vector<double> logs(static_cast<std::size_t>(n_active));
  const Vector x0 = path.row(0).transpose();
  for (int p = 0; p < n_active; ++p) {
    const Gaussian& src = bridges.at(first.pair_i(p), first.pair_j(p)).source();
    logs[static_cast<std::size_t>(p)] = std::log(pi(first.pair_i(p), first.pair_j(p))) + src.log_pdf(x0);
  }
  const auto to_matrix = [&]() {
    Matrix out = Matrix::Zero(pi.n1(), pi.n2());
    for (int p = 0; p < n_active; ++p) {
      out(first.pair_i(p), first.pair_j(p)) = std::exp(logs[static_cast<std::size_t>(p)]);
    }
    return out;
  };
  std::vector<Matrix> out;
  out.reserve(static_cast<std::size_t>(n + 1));
  normalize_log(logs);
  out.push_back(to_matrix());

  std::vector<double> u(static_cast<std::size_t>(d));
  for (int k = 0; k < n; ++k) {
    const double* xk = path.row(k).data();
    const double* xn = path.row(k + 1).data();
    for (int p = 0; p < n_active; ++p) {
      slices[static_cast<std::size_t>(k)].pair_drift(p, xk, u.data());
      logs[static_cast<std::size_t>(p)] += transition_log(xk, xn, u.data(), d, dt, flow.eps());
    }
    normalize_log(logs);
    out.push_back(to_matrix());
  }
  return out;
}

GapEstimates gap_estimates(const ProjectedFlow& flow, const Coupling& eta, const GapOptions& options) {
  if (options.n_particles < 2) fail(ErrorKind::DomainError, "gap estimates need n_particles >= 2");
  if (options.n_steps < 2) fail(ErrorKind::DomainError, "gap estimates need n_steps >= 2");
  const Coupling& pi = flow.pi();
  const BridgeGrid& bridges = flow.bridges();
  check_support(pi, eta);
  const int d = flow.dim();
  const int n = options.n_steps;
  const double dt = 1.0 / n;
  const double eps = flow.eps();
  const double noise = std::sqrt(eps * dt);
  const std::vector<FlowSlice> slices = step_slices(flow, n);
  const FlowSlice& first = slices.front();
  const int n_active = first.n_active();
  const auto cumulative = cumulative_plan(pi.pi());

  std::vector<double> log_eta(static_cast<std::size_t>(n_active));
  for (int p = 0; p < n_active; ++p) log_eta[static_cast<std::size_t>(p)] = std::log(eta(first.pair_i(p), first.pair_j(p)));
  const Vector eta_rows = eta.pi().rowwise().sum();

  std::vector<double> markov(options.n_particles), proj(options.n_particles), both(options.n_particles);
  parallel_for(options.n_particles, [&](std::size_t begin, std::size_t end) {
    const auto du = static_cast<std::size_t>(d);
    std::vector<double> x(du), xn(du), z(du);
    std::vector<double> logs(static_cast<std::size_t>(n_active));
    std::vector<double> post(static_cast<std::size_t>(n_active));
    std::vector<double> source_log(static_cast<std::size_t>(pi.n1()));
    FlowWorkspace ws;
    first.prepare(ws);
    for (std::size_t part = begin; part < end; ++part) {
      const RandomStream stream(options.seed, part);
      const auto label = draw_label(pi.pi(), cumulative, stream);
      const int q = first.active_index(label.first, label.second);
      draw_gaussian(bridges.at(label.first, label.second).source(), stream, stream_tag::kInitial, 0, z, x.data());

      const Eigen::Map<const Vector> x0(x.data(), d);
      for (int i = 0; i < pi.n1(); ++i) source_log[static_cast<std::size_t>(i)] = bridges.at(i, 0).source().log_pdf(x0);
      // Reference row marginal eta_i. p_i(x0), normalized.
      std::vector<double> ref_rows(static_cast<std::size_t>(pi.n1()));
      for (int i = 0; i < pi.n1(); ++i) {
        ref_rows[static_cast<std::size_t>(i)] = std::log(eta_rows[i]) + source_log[static_cast<std::size_t>(i)];
      }
      normalize_log(ref_rows);
      for (int p = 0; p < n_active; ++p) {
        logs[static_cast<std::size_t>(p)] = std::log(pi(first.pair_i(p), first.pair_j(p))) +
                                            source_log[static_cast<std::size_t>(first.pair_i(p))];
      }
      normalize_log(logs);

      double gap = 0.0;
      for (int k = 0; k < n; ++k) {
        const FlowSlice& s = slices[static_cast<std::size_t>(k)];
        s.evaluate(x.data(), ws);
        for (int p = 0; p < n_active; ++p) post[static_cast<std::size_t>(p)] = std::exp(logs[static_cast<std::size_t>(p)]);
        double sq = 0.0;
        for (int a = 0; a < d; ++a) {
          double b = 0.0;
          for (int p = 0; p < n_active; ++p) {
            b += post[static_cast<std::size_t>(p)] * ws.u[static_cast<std::size_t>(p * d + a)];
          }
          const double diff = b - ws.ubar[static_cast<std::size_t>(a)];
          sq += diff * diff;
        }
        gap += 0.5 * sq * dt;

        stream.normals(stream_tag::kIncrement, static_cast<std::uint32_t>(k), z);
        const double* uq = &ws.u[static_cast<std::size_t>(q * d)];
        for (std::size_t a = 0; a < du; ++a) xn[a] = x[a] + uq[a] * dt + noise * z[a];
        for (int p = 0; p < n_active; ++p) {
          logs[static_cast<std::size_t>(p)] +=
              transition_log(x.data(), xn.data(), &ws.u[static_cast<std::size_t>(p * d)], d, dt, eps);
        }
        normalize_log(logs);
        std::swap(x, xn);
      }
      for (double v : x) {
        if (!std::isfinite(v)) fail(ErrorKind::NonFinite, "diagnostic path diverged");
      }

      double kl = 0.0;
      for (int p = 0; p < n_active; ++p) {
        const double lg = logs[static_cast<std::size_t>(p)];
        const double g = std::exp(lg);
        if (g == 0.0) continue;
        const int i = first.pair_i(p);
        const double log_ref = ref_rows[static_cast<std::size_t>(i)] + log_eta[static_cast<std::size_t>(p)] -
                               std::log(eta_rows[i]);
        kl += g * (lg - log_ref);
      }
      markov[part] = gap;
      proj[part] = eps * kl;
      both[part] = gap + eps * kl;
    }
  });
  return {summarize(markov), summarize(proj), summarize(both)};
}

Estimate markov_gap(const ProjectedFlow& flow, const GapOptions& options) {
  return gap_estimates(flow, flow.pi(), options).markov;
}

Estimate projection_gap(const BridgeGrid& bridges, const Coupling& pi, const Coupling& eta,
                        const GapOptions& options) {
  return gap_estimates(ProjectedFlow(pi, bridges), eta, options).proj;
}

double decomposition_check(const GapReport& report) {
  return (report.j_lift + report.label_kl) -
         (report.j_proj.value + report.markov_gap.value + report.proj_gap.value);
}

double decomposition_tolerance(const GapReport& report) {
  const double se = std::hypot(report.j_proj.std_err, report.gap_sum.std_err);
  return 3.0 * se + report.dt_band;
}

GapReport gap_report(const ProjectedFlow& flow, const Coupling& eta, const CostMatrix& costs,
                     const KineticEnergy& energy, const GapOptions& options) {
  const LiftedObjective objective = lifted_objective(flow.pi().pi(), costs, eta);
  const GapEstimates fine = gap_estimates(flow, eta, options);
  GapOptions coarse_options = options;
  coarse_options.n_steps = std::max(2, options.n_steps / 2);
  const GapEstimates coarse = gap_estimates(flow, eta, coarse_options);
  GapReport report{objective.transport,
                   costs.eps * objective.entropy,
                   {energy.j_proj, energy.std_err},
                   fine.markov,
                   fine.proj,
                   fine.sum,
                   std::abs(fine.sum.value - coarse.sum.value),
                   0.0};
  report.decomposition_residual = decomposition_check(report);
  return report;
}

Json to_json(const GapReport& report) {
  return Json{{"j_lift", report.j_lift},
              {"label_kl", report.label_kl},
              {"j_proj", report.j_proj.value},
              {"j_proj_std_err", report.j_proj.std_err},
              {"markov_gap", report.markov_gap.value},
              {"markov_gap_std_err", report.markov_gap.std_err},
              {"proj_gap", report.proj_gap.value},
              {"proj_gap_std_err", report.proj_gap.std_err},
              {"gap_sum_std_err", report.gap_sum.std_err},
              {"dt_band", report.dt_band},
              {"decomposition_residual", report.decomposition_residual},
              {"decomposition_tolerance", decomposition_tolerance(report)}};
}

}  // namespace mixbridge
