#include "mixbridge/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>

#include "mixbridge/diagnostics.hpp"
#include "mixbridge/error.hpp"
#include "mixbridge/projected_flow.hpp"
#include "mixbridge/silhouette.hpp"
#include "mixbridge/simulate.hpp"

namespace mixbridge {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

[[noreturn]] void bad_config(const std::string& msg) { fail(ErrorKind::InvalidConfig, msg); }

template <class T>
T get_or(const Json& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    bad_config(std::string("field '") + key + "' has the wrong type");
  }
}

template <class T>
std::optional<T> get_optional(const Json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    bad_config(std::string("field '") + key + "' has the wrong type");
  }
}

template <class T>
Json optional_json(const std::optional<T>& v) {
  return v ? Json(*v) : Json(nullptr);
}

const Json& section(const Json& j, const char* key) {
  static const Json empty = Json::object();
  if (!j.contains(key) || j.at(key).is_null()) return empty;
  if (!j.at(key).is_object()) bad_config(std::string("'") + key + "' must be an object");
  return j.at(key);
}

std::string pattern_name(PriorPattern p) {
  switch (p) {
    case PriorPattern::Product: return "product";
    case PriorPattern::Diagonal: return "diagonal";
    case PriorPattern::Shifted: return "shifted";
  }
  return "product";
}

PriorPattern pattern_from(const std::string& s) {
  if (s == "product") return PriorPattern::Product;
  if (s == "diagonal") return PriorPattern::Diagonal;
  if (s == "shifted") return PriorPattern::Shifted;
  bad_config("unknown prior pattern '" + s + "'");
}

void require_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) bad_config(std::string(what) + " must be positive");
}

void require_at_least(long v, long lo, const char* what) {
  if (v < lo) bad_config(std::string(what) + " must be >= " + std::to_string(lo));
}

Json gaussian_spec(const std::vector<double>& weights, const std::vector<Vector>& means,
                   const std::vector<Matrix>& covs) {
  Json w = Json::array(), m = Json::array(), c = Json::array();
  for (std::size_t k = 0; k < weights.size(); ++k) {
    w.push_back(weights[k]);
    m.push_back(to_json(means[k]));
    c.push_back(to_json(covs[k]));
  }
  return Json{{"weights", w}, {"means", m}, {"covs", c}};
}

Matrix mat2(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index k = 0;
  for (double x : v) out[k++] = x;
  return out;
}

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

ExperimentConfig oned_preset() {
  ExperimentConfig c;
  c.name = "oned";
  c.eps = 0.35;
  c.source = gaussian_spec({0.65, 0.35}, {vec({-3.0}), vec({2.0})}, {scalar(0.45 * 0.45), scalar(0.60 * 0.60)});
  c.target = gaussian_spec({0.35, 0.65}, {vec({-1.5}), vec({3.5})}, {scalar(0.55 * 0.55), scalar(0.45 * 0.45)});
  c.flow_slices.n_per_axis = 401;
  c.simulation.n_steps = 800;
  c.direct_sb.enabled = true;
  c.direct_sb.n_per_axis = 601;
  c.diagnostics.enabled = true;
  c.diagnostics.n_particles = 2000;
  c.diagnostics.n_steps = 800;
  c.output_dir = "out/oned";
  return c;
}

ExperimentConfig threemode_preset() {
  ExperimentConfig c;
  c.name = "threemode";
  c.eps = 0.3;
  c.source = gaussian_spec({0.40, 0.35, 0.25}, {vec({-4.0, -2.0}), vec({-4.0, 1.8}), vec({-1.0, 0.0})},
                           {mat2(0.35, 0.08, 0.08, 0.28), mat2(0.30, -0.06, -0.06, 0.45),
                            mat2(0.48, 0.0, 0.0, 0.35)});
  c.target = gaussian_spec({0.25, 0.45, 0.30}, {vec({2.5, -2.5}), vec({4.0, 0.4}), vec({2.5, 2.7})},
                           {mat2(0.40, -0.05, -0.05, 0.30), mat2(0.35, 0.07, 0.07, 0.42),
                            mat2(0.32, -0.04, -0.04, 0.36)});
  c.flow_slices.n_per_axis = 81;
  c.kinetic.n_samples = 4000;
  c.simulation.n_steps = 1500;
  c.direct_sb.enabled = true;
  c.direct_sb.n_total_nodes = 3111;
  c.diagnostics.enabled = true;
  c.diagnostics.n_particles = 1000;
  c.diagnostics.n_steps = 1500;
  c.repeats = 5;
  c.output_dir = "out/threemode";
  return c;
}

ExperimentConfig eightmode_preset() {
  ExperimentConfig c;
  c.name = "eightmode";
  c.eps = 0.08;
  c.source = gaussian_spec({1.0}, {vec({0.0, 0.0})}, {mat2(0.15, 0.0, 0.0, 0.15)});
  std::vector<double> w;
  std::vector<Vector> m;
  std::vector<Matrix> s;
  const double radius = 5.1;
  for (int j = 0; j < 8; ++j) {
    const double theta = 2.0 * std::numbers::pi * j / 8.0;
    const Matrix rot = mat2(std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta));
    w.push_back(1.0 / 8.0);
    m.push_back(vec({radius * std::cos(theta), radius * std::sin(theta)}));
    s.push_back(symmetrize(rot * mat2(0.16, 0.0, 0.0, 0.10) * rot.transpose()));
  }
  c.target = gaussian_spec(w, m, s);
  c.flow_slices.n_per_axis = 81;
  c.kinetic.n_samples = 2000;
  c.simulation.n_steps = 1500;
  c.output_dir = "out/eightmode";
  return c;
}

Json silhouette_spec(const std::string& shape, double cx, std::uint64_t seed) {
  return Json{{"silhouette",
               {{"shape", shape}, {"n_points", 4000}, {"seed", seed}, {"center", {cx, 0.0}}, {"scale", 2.5}}},
              {"n_components", 10},
              {"seed", seed + 100}};
}

ExperimentConfig shapes_preset() {
  ExperimentConfig c;
  c.name = "shapes";
  c.eps = 0.1;
  c.source = silhouette_spec("crescent", -4.0, 11);
  c.target = silhouette_spec("star", 4.0, 12);
  c.flow_slices.n_per_axis = 81;
  c.kinetic.n_time = 21;
  c.kinetic.n_samples = 200;
  c.simulation.n_particles = 5000;
  c.simulation.n_steps = 1000;
  c.repeats = 3;
  c.output_dir = "out/shapes";
  return c;
}

ExperimentConfig prior_ablation_preset() {
  ExperimentConfig c = shapes_preset();
  c.name = "prior_ablation";
  c.priors = {{"product", {PriorPattern::Product, 0, 0.9}},
              {"diagonal", {PriorPattern::Diagonal, 0, 0.9}},
              {"shifted3", {PriorPattern::Shifted, 3, 0.9}}};
  c.flow_slices.enabled = false;
  c.kinetic.enabled = false;
  c.simulation.enabled = false;
  c.output_dir = "out/prior_ablation";
  return c;
}

struct StageSet {
  bool flow = false;
  bool kinetic = false;
  bool simulate = false;
  bool direct = false;
  bool diagnose = false;
};

StageSet stages_for(Stage stage, const ExperimentConfig& c) {
  switch (stage) {
    case Stage::Pairwise:
    case Stage::Couple: return {};
    case Stage::Flow: return {true, true, false, false, false};
    case Stage::Simulate: return {false, false, true, false, false};
    case Stage::Direct: return {false, true, false, true, false};
    case Stage::Diagnose: return {false, true, false, false, true};
    case Stage::All:
      return {c.flow_slices.enabled, c.kinetic.enabled || c.direct_sb.enabled || c.diagnostics.enabled,
              c.simulation.enabled, c.direct_sb.enabled, c.diagnostics.enabled};
  }
  return {};
}

}  // namespace

ExperimentConfig config_from_json(const Json& j) {
  if (!j.is_object()) bad_config("config must be a JSON object");
  ExperimentConfig c;
  c.name = get_or<std::string>(j, "name", c.name);
  c.eps = get_or<double>(j, "eps", c.eps);
  require_positive(c.eps, "eps");
  c.seed = get_or<std::uint64_t>(j, "seed", c.seed);
  if (!j.contains("source") || !j.contains("target")) bad_config("config needs 'source' and 'target'");
  c.source = j.at("source");
  c.target = j.at("target");
  for (const Json* spec : {&c.source, &c.target}) {
    if (!spec->is_object()) bad_config("mixture specification must be an object");
  }

  if (j.contains("priors")) {
    if (!j.at("priors").is_array() || j.at("priors").empty()) bad_config("'priors' must be a non-empty array");
    c.priors.clear();
    for (const Json& p : j.at("priors")) {
      NamedPrior np;
      np.spec.pattern = pattern_from(get_or<std::string>(p, "pattern", "product"));
      np.spec.shift = get_or<int>(p, "shift", 0);
      np.spec.theta = get_or<double>(p, "theta", 0.9);
      if (!(np.spec.theta >= 0.0 && np.spec.theta < 1.0)) bad_config("prior theta must lie in [0, 1)");
      np.name = get_or<std::string>(p, "name", pattern_name(np.spec.pattern));
      c.priors.push_back(np);
    }
  }

  const Json& sk = section(j, "sinkhorn");
  c.sinkhorn.tol = get_or<double>(sk, "tol", c.sinkhorn.tol);
  require_positive(c.sinkhorn.tol, "sinkhorn.tol");
  c.sinkhorn.max_iter = get_or<int>(sk, "max_iter", c.sinkhorn.max_iter);
  require_at_least(c.sinkhorn.max_iter, 1, "sinkhorn.max_iter");
  c.sinkhorn.fixed_iters = get_optional<int>(sk, "fixed_iters");
  if (c.sinkhorn.fixed_iters) require_at_least(*c.sinkhorn.fixed_iters, 1, "sinkhorn.fixed_iters");

  c.n_quad = get_or<int>(j, "n_quad", c.n_quad);
  if (c.n_quad < 3 || c.n_quad % 2 == 0) bad_config("n_quad must be odd and >= 3");

  const Json& fs = section(j, "flow_slices");
  c.flow_slices.enabled = get_or<bool>(fs, "enabled", c.flow_slices.enabled);
  c.flow_slices.times = get_or<std::vector<double>>(fs, "times", c.flow_slices.times);
  for (double t : c.flow_slices.times) {
    if (!(t >= 0.0 && t <= 1.0)) bad_config("flow slice times must lie in [0, 1]");
  }
  c.flow_slices.n_per_axis = get_or<int>(fs, "n_per_axis", c.flow_slices.n_per_axis);
  require_at_least(c.flow_slices.n_per_axis, 2, "flow_slices.n_per_axis");

  const Json& ke = section(j, "kinetic");
  c.kinetic.enabled = get_or<bool>(ke, "enabled", c.kinetic.enabled);
  c.kinetic.n_time = get_or<int>(ke, "n_time", c.kinetic.n_time);
  if (c.kinetic.n_time < 3 || c.kinetic.n_time % 2 == 0) bad_config("kinetic.n_time must be odd and >= 3");
  c.kinetic.n_samples = get_or<int>(ke, "n_samples", c.kinetic.n_samples);
  require_at_least(c.kinetic.n_samples, 100, "kinetic.n_samples");

  const Json& sim = section(j, "simulation");
  c.simulation.enabled = get_or<bool>(sim, "enabled", c.simulation.enabled);
  c.simulation.n_particles = get_or<std::size_t>(sim, "n_particles", c.simulation.n_particles);
  require_at_least(static_cast<long>(c.simulation.n_particles), 1, "simulation.n_particles");
  c.simulation.n_steps = get_or<int>(sim, "n_steps", c.simulation.n_steps);
  require_at_least(c.simulation.n_steps, 2, "simulation.n_steps");
  c.simulation.record_every = get_or<int>(sim, "record_every", c.simulation.record_every);
  require_at_least(c.simulation.record_every, 0, "simulation.record_every");
  c.simulation.paths_kept = get_or<std::size_t>(sim, "paths_kept", c.simulation.paths_kept);
  require_at_least(static_cast<long>(c.simulation.paths_kept), 1, "simulation.paths_kept");

  const Json& ds = section(j, "direct_sb");
  c.direct_sb.enabled = get_or<bool>(ds, "enabled", c.direct_sb.enabled);
  c.direct_sb.n_per_axis = get_optional<int>(ds, "n_per_axis");
  c.direct_sb.n_total_nodes = get_optional<int>(ds, "n_total_nodes");
  if (c.direct_sb.n_per_axis && c.direct_sb.n_total_nodes) {
    bad_config("direct_sb takes n_per_axis or n_total_nodes, not both");
  }
  if (c.direct_sb.n_per_axis) require_at_least(*c.direct_sb.n_per_axis, 8, "direct_sb.n_per_axis");
  if (c.direct_sb.n_total_nodes) require_at_least(*c.direct_sb.n_total_nodes, 8, "direct_sb.n_total_nodes");
  c.direct_sb.tol = get_or<double>(ds, "tol", c.direct_sb.tol);
  require_positive(c.direct_sb.tol, "direct_sb.tol");
  c.direct_sb.max_iter = get_or<int>(ds, "max_iter", c.direct_sb.max_iter);
  require_at_least(c.direct_sb.max_iter, 1, "direct_sb.max_iter");
  c.direct_sb.fixed_iters = get_optional<int>(ds, "fixed_iters");
  if (c.direct_sb.fixed_iters) require_at_least(*c.direct_sb.fixed_iters, 1, "direct_sb.fixed_iters");

  const Json& dg = section(j, "diagnostics");
  c.diagnostics.enabled = get_or<bool>(dg, "enabled", c.diagnostics.enabled);
  c.diagnostics.n_particles = get_or<std::size_t>(dg, "n_particles", c.diagnostics.n_particles);
  require_at_least(static_cast<long>(c.diagnostics.n_particles), 2, "diagnostics.n_particles");
  c.diagnostics.n_steps = get_or<int>(dg, "n_steps", c.diagnostics.n_steps);
  require_at_least(c.diagnostics.n_steps, 4, "diagnostics.n_steps");

  c.repeats = get_or<int>(j, "repeats", c.repeats);
  require_at_least(c.repeats, 1, "repeats");
  c.output_dir = get_or<std::string>(j, "output_dir", c.output_dir);
  return c;
}

Json to_json(const ExperimentConfig& c) {
  Json priors = Json::array();
  for (const auto& p : c.priors) {
    priors.push_back({{"name", p.name},
                      {"pattern", pattern_name(p.spec.pattern)},
                      {"shift", p.spec.shift},
                      {"theta", p.spec.theta}});
  }
  return Json{
      {"name", c.name},
      {"eps", c.eps},
      {"seed", c.seed},
      {"source", c.source},
      {"target", c.target},
      {"priors", priors},
      {"sinkhorn",
       {{"tol", c.sinkhorn.tol}, {"max_iter", c.sinkhorn.max_iter}, {"fixed_iters", optional_json(c.sinkhorn.fixed_iters)}}},
      {"n_quad", c.n_quad},
      {"flow_slices",
       {{"enabled", c.flow_slices.enabled}, {"times", c.flow_slices.times}, {"n_per_axis", c.flow_slices.n_per_axis}}},
      {"kinetic", {{"enabled", c.kinetic.enabled}, {"n_time", c.kinetic.n_time}, {"n_samples", c.kinetic.n_samples}}},
      {"simulation",
       {{"enabled", c.simulation.enabled},
        {"n_particles", c.simulation.n_particles},
        {"n_steps", c.simulation.n_steps},
        {"record_every", c.simulation.record_every},
        {"paths_kept", c.simulation.paths_kept}}},
      {"direct_sb",
       {{"enabled", c.direct_sb.enabled},
        {"n_per_axis", optional_json(c.direct_sb.n_per_axis)},
        {"n_total_nodes", optional_json(c.direct_sb.n_total_nodes)},
        {"tol", c.direct_sb.tol},
        {"max_iter", c.direct_sb.max_iter},
        {"fixed_iters", optional_json(c.direct_sb.fixed_iters)}}},
      {"diagnostics",
       {{"enabled", c.diagnostics.enabled},
        {"n_particles", c.diagnostics.n_particles},
        {"n_steps", c.diagnostics.n_steps}}},
      {"repeats", c.repeats},
      {"output_dir", c.output_dir}};
}

std::vector<std::string> preset_names() { return {"oned", "threemode", "eightmode", "shapes", "prior_ablation"}; }

ExperimentConfig preset(const std::string& name) {
  if (name == "oned") return oned_preset();
  if (name == "threemode") return threemode_preset();
  if (name == "eightmode") return eightmode_preset();
  if (name == "shapes") return shapes_preset();
  if (name == "prior_ablation") return prior_ablation_preset();
  fail(ErrorKind::UnknownPreset, "unknown preset '" + name + "'");
}

GaussianMixture resolve_mixture(const Json& spec, const std::filesystem::path& base_dir) {
  if (!spec.is_object()) bad_config("mixture specification must be an object");
  const auto resolve_path = [&](const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
  };
  if (spec.contains("weights")) return mixture_from_json(spec);
  if (spec.contains("file")) return mixture_from_json(read_json_file(resolve_path(spec.at("file").get<std::string>())));

  PointSet points;
  if (spec.contains("points_csv")) {
    points = read_points_csv(resolve_path(spec.at("points_csv").get<std::string>()));
  } else if (spec.contains("silhouette")) {
    const Json& s = spec.at("silhouette");
    SilhouetteSpec ss;
    ss.shape = get_or<std::string>(s, "shape", "");
    ss.n_points = get_or<std::size_t>(s, "n_points", ss.n_points);
    ss.seed = get_or<std::uint64_t>(s, "seed", ss.seed);
    const auto center = get_or<std::vector<double>>(s, "center", {0.0, 0.0});
    if (center.size() != 2) bad_config("silhouette center needs two coordinates");
    ss.center_x = center[0];
    ss.center_y = center[1];
    ss.scale = get_or<double>(s, "scale", ss.scale);
    points = silhouette_points(ss);
  } else {
    bad_config("mixture specification needs weights, file, points_csv or silhouette");
  }
  EmOptions em;
  em.n_components = get_or<int>(spec, "n_components", 1);
  em.seed = get_or<std::uint64_t>(spec, "seed", 0);
  em.max_iter = get_or<int>(spec, "max_iter", em.max_iter);
  if (spec.contains("cov_floor")) em.cov_floor = spec.at("cov_floor").get<double>();
  return em_fit(points, em).mixture;
}

Stage stage_from_string(const std::string& name) {
  if (name == "pairwise") return Stage::Pairwise;
  if (name == "couple") return Stage::Couple;
  if (name == "flow") return Stage::Flow;
  if (name == "simulate") return Stage::Simulate;
  if (name == "direct") return Stage::Direct;
  if (name == "diagnose") return Stage::Diagnose;
  if (name == "experiment" || name == "all") return Stage::All;
  bad_config("unknown stage '" + name + "'");
}

Json run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir, Stage stage,
                    const std::filesystem::path& base_dir) {
  const auto run_start = Clock::now();
  std::filesystem::create_directories(out_dir);
  write_json_atomic(out_dir / "config.json", to_json(config));

  const GaussianMixture source = resolve_mixture(config.source, base_dir);
  const GaussianMixture target = resolve_mixture(config.target, base_dir);
  require_dims(source.dim(), target.dim(), "target mixture");
  write_json_atomic(out_dir / "endpoints.json", Json{{"source", to_json(source)}, {"target", to_json(target)}});

  Json summary;
  summary["schema"] = kSummarySchema;
  summary["name"] = config.name;
  summary["eps"] = config.eps;
  summary["seed"] = config.seed;
  summary["dim"] = source.dim();
  summary["n1"] = source.size();
  summary["n2"] = target.size();
  Json timings;

  // Lifted solve, timed over `repeats` runs; results are identical each time.
  std::vector<double> cost_times, couple_times;
  std::optional<BridgeGrid> bridges;
  std::optional<CostMatrix> costs;
  for (int r = 0; r < config.repeats; ++r) {
    const auto t0 = Clock::now();
    bridges.emplace(source, target, config.eps);
    costs = cost_matrix(*bridges, config.n_quad);
    cost_times.push_back(seconds_since(t0));
  }
  write_json_atomic(out_dir / "cost_matrix.json", to_json(*costs));
  summary["C"] = to_json(costs->c);
  timings["cost_matrix_s"] = median(cost_times);
  if (stage == Stage::Pairwise) {
    write_json_atomic(out_dir / "summary.json", summary);
    write_json_atomic(out_dir / "timings.json", timings);
    return summary;
  }

  const Vector alpha0 = source.weight_vector();
  const Vector alpha1 = target.weight_vector();
  SinkhornOptions sk;
  sk.tol = config.sinkhorn.tol;
  sk.max_iter = config.sinkhorn.max_iter;
  sk.fixed_iters = config.sinkhorn.fixed_iters;

  std::optional<Coupling> primary_plan;
  std::optional<Coupling> primary_prior;
  Json prior_results = Json::array();
  for (std::size_t pidx = 0; pidx < config.priors.size(); ++pidx) {
    const NamedPrior& np = config.priors[pidx];
    const Coupling eta = make_prior(alpha0, alpha1, np.spec);
    std::optional<SinkhornResult> result;
    for (int r = 0; r < config.repeats; ++r) {
      const auto t0 = Clock::now();
      const GibbsKernel kernel(eta, *costs);
      result.emplace(sinkhorn(kernel, alpha0, alpha1, sk));
      couple_times.push_back(seconds_since(t0));
    }
    const LiftedObjective obj = lifted_objective(result->plan.pi(), *costs, eta);
    Json doc = to_json(*result, obj);
    doc["prior"] = np.name;
    doc["eta"] = to_json(eta.pi());
    doc["pi_display"] = to_json(display_plan(result->plan.pi()));
    if (pidx == 0) {
      write_json_atomic(out_dir / "coupling.json", doc);
      primary_plan = result->plan;
      primary_prior = eta;
      summary["pi"] = to_json(result->plan.pi());
      summary["transport"] = obj.transport;
      summary["entropy"] = obj.entropy;
      summary["total"] = obj.total;
      summary["sinkhorn_iterations"] = result->iterations;
      summary["sinkhorn_residuals"] = Json::array({result->row_residual, result->col_residual});
      summary["j_lift"] = obj.transport;
    }
    if (config.priors.size() > 1) write_json_atomic(out_dir / ("coupling_" + np.name + ".json"), doc);
    prior_results.push_back({{"prior", np.name},
                             {"pi", to_json(result->plan.pi())},
                             {"transport", obj.transport},
                             {"entropy", obj.entropy},
                             {"total", obj.total}});
  }
  summary["priors"] = prior_results;
  timings["coupling_s"] = median(couple_times);
  timings["lifted_solve_s"] = median(cost_times) + median(couple_times);

  const StageSet todo = stage == Stage::Couple ? StageSet{} : stages_for(stage, config);
  const ProjectedFlow flow(*primary_plan, *bridges);
  const Box box = default_box(source, target);

  if (todo.flow) {
    write_flow_slices_csv(out_dir / "flow_slices.csv", flow, config.flow_slices.times, box.lo, box.hi,
                          config.flow_slices.n_per_axis);
  }

  std::optional<KineticEnergy> kinetic;
  if (todo.kinetic) {
    const auto t0 = Clock::now();
    kinetic = kinetic_energy(flow, *costs, config.kinetic.n_time, config.kinetic.n_samples,
                             derive_stream(config.seed, 1));
    timings["kinetic_s"] = seconds_since(t0);
    summary["j_proj"] = kinetic->j_proj;
    summary["j_proj_std_err"] = kinetic->std_err;
  }

  if (todo.simulate) {
    const auto t0 = Clock::now();
    SimulationOptions opt;
    opt.n_particles = config.simulation.n_particles;
    opt.n_steps = config.simulation.n_steps;
    opt.seed = config.seed;
    opt.record_every = config.simulation.record_every;
    const ParticleEnsemble ens = simulate_markov(flow, source, opt);
    timings["simulation_s"] = seconds_since(t0);
    const std::size_t every = std::max<std::size_t>(1, ens.n_particles / config.simulation.paths_kept);
    write_paths_csv(out_dir / "paths.csv", ens, every);
    const TerminalValidation tv = validate_terminal(ens, target);
    Json tv_doc = to_json(tv);
    double mean_energy = 0.0;
    for (double e : ens.path_energy) mean_energy += e;
    mean_energy /= static_cast<double>(ens.n_particles);
    tv_doc["n_particles"] = ens.n_particles;
    tv_doc["n_steps"] = ens.n_steps;
    tv_doc["mean_path_energy"] = mean_energy;
    write_json_atomic(out_dir / "terminal_validation.json", tv_doc);
    summary["terminal_validation"] = tv_doc;
  }

  if (todo.direct) {
    std::vector<int> shape;
    if (config.direct_sb.n_total_nodes) {
      shape = axis_counts_for_total(box, *config.direct_sb.n_total_nodes);
    } else {
      shape.assign(static_cast<std::size_t>(source.dim()), config.direct_sb.n_per_axis.value_or(source.dim() == 1 ? 601 : 56));
    }
    const GridMeasure g0 = discretize(source, box, shape);
    const GridMeasure g1 = discretize(target, box, shape);
    DirectOptions dopt;
    dopt.tol = config.direct_sb.tol;
    dopt.max_iter = config.direct_sb.max_iter;
    dopt.fixed_iters = config.direct_sb.fixed_iters;
    const auto t0 = Clock::now();
    const GridBridge direct = solve_direct(g0.mass, g1.mass, g0.points, config.eps, dopt);
    const double wall = seconds_since(t0);
    timings["direct_s"] = wall;
    Json doc = to_json(direct, wall);
    doc["shape"] = shape;
    write_json_atomic(out_dir / "direct_sb.json", doc);
    summary["j_direct"] = direct.energy;
    summary["direct_M"] = direct.points.rows();
    summary["direct_iterations"] = direct.iterations;
    summary["direct_residuals"] = Json::array({direct.row_residual, direct.col_residual});
    if (kinetic) {
      const GapComparison gap = compare(kinetic->j_proj, direct);
      summary["gap_abs"] = gap.gap_abs;
      summary["gap_rel"] = gap.gap_rel;
    }
  }

  if (todo.diagnose) {
    const auto t0 = Clock::now();
    GapOptions gopt;
    gopt.n_particles = config.diagnostics.n_particles;
    gopt.n_steps = config.diagnostics.n_steps;
    gopt.seed = derive_stream(config.seed, 2);
    const GapReport report = gap_report(flow, *primary_prior, *costs, *kinetic, gopt);
    timings["diagnostics_s"] = seconds_since(t0);
    const Json doc = to_json(report);
    write_json_atomic(out_dir / "gap_report.json", doc);
    summary["gap_report"] = doc;
  }

  timings["total_s"] = seconds_since(run_start);
  timings["repeats"] = config.repeats;
  write_json_atomic(out_dir / "summary.json", summary);
  write_json_atomic(out_dir / "timings.json", timings);
  return summary;
}

}  // namespace mixbridge
