#include "grftopo/experiment_harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <stdexcept>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "grftopo/kac_rice.hpp"
#include "grftopo/parallel.hpp"
#include "grftopo/random.hpp"

namespace grftopo {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool is_nodal_metric(const std::string& m) { return m == "n_nodal" || m == "n_sphere"; }

bool needs_critical(const std::vector<std::string>& metrics) {
  return std::any_of(metrics.begin(), metrics.end(), [](const std::string& m) {
    return m == "n_ball" || m == "n_sphere" || m.starts_with("crit_");
  });
}

bool is_component_metric(const std::string& m) {
  return m == "n_components" || m == "n_ball" || m == "n_nodal" || m == "n_sphere" ||
         m == "betti_sum" || m == "b0";
}

double newton_tolerance(const SpectralModel& model) {
  return 1e-9 * std::sqrt(model.second_moment.diagonal().maxCoeff());
}

/// Level of the excursion set of g = +-f equivalent to (f, side, u).
double oriented_level(Side side, double u) { return side == Side::excursion ? u : -u; }

std::vector<CriticalPoint> critical_above(const GridField& g, double min_level, double tol,
                                          int& seeds, int& failed) {
  CriticalSearchOptions opt;
  opt.tol = tol;
  opt.min_value = min_level;
  auto search = find_critical_points(g, opt);
  seeds += search.seeds;
  failed += search.failed_seeds;
  return std::move(search.points);
}

/// The window [0, grid_d] of g, surrounded by one layer of -inf so that
/// periodic analysis sees a box.
GridField padded_window(const GridField& g, const std::vector<int>& window) {
  const int n = g.dimension();
  std::vector<int> shape(n);
  std::vector<double> period(n);
  std::size_t total = 1;
  for (int d = 0; d < n; ++d) {
    shape[d] = window[d] + 1;
    period[d] = shape[d] * g.spacing(d);
    total *= shape[d];
  }
  std::vector<double> values(total, -std::numeric_limits<double>::infinity());
  GridField layout(shape, period, std::vector<double>(total, 0.0));
  for (std::size_t i = 0; i < total; ++i) {
    const GridIndex c = layout.coords(i);
    bool inside = true;
    for (int d = 0; d < n; ++d) inside = inside && c[d] < window[d];
    if (inside) values[i] = g[g.index(c)];
  }
  return GridField(std::move(shape), std::move(period), std::move(values));
}

FieldAnalysis analyze_window(const GridField& field, const std::vector<int>& window,
                             const std::vector<double>& u_grid, Side side, double tol,
                             bool need_critical) {
  const GridField g = side == Side::excursion ? field : field.negated();
  FieldAnalysis out;
  std::vector<CriticalPoint> crit;
  if (need_critical) {
    double lowest = std::numeric_limits<double>::infinity();
    for (double u : u_grid) lowest = std::min(lowest, oriented_level(side, u));
    for (auto& cp : critical_above(g, lowest, tol, out.critical_seeds, out.critical_failed)) {
      bool inside = true;
      for (int d = 0; d < g.dimension(); ++d)
        inside = inside && cp.position(d) <= (window[d] - 1) * g.spacing(d);
      if (inside) crit.push_back(std::move(cp));
    }
  }
  const GridField boxed = padded_window(g, window);
  for (double u : u_grid) {
    LevelTopology t = analyze_level(boxed, oriented_level(side, u), Side::excursion, crit);
    t.u = u;
    t.side = side;
    out.levels.push_back(std::move(t));
  }
  return out;
}

std::string hex64(std::uint64_t v) { return fmt::format("{:016x}", v); }

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

void RunConfig::validate() const {
  if (n < 1 || n > kMaxGridDim) throw std::invalid_argument("n must be 1, 2 or 3");
  if (static_cast<int>(sides.size()) != n || static_cast<int>(grid.size()) != n)
    throw std::invalid_argument("sides and grid need one entry per dimension");
  if (domain == DomainShape::interval && n != 1)
    throw std::invalid_argument("interval domains are one-dimensional");
  for (int m : grid)
    if (m < 4) throw std::invalid_argument("grid needs at least 4 points per axis");
  domain_spec().validate();
  if (u_grid.empty()) throw std::invalid_argument("u-grid is empty");
  for (double u : u_grid)
    if (!std::isfinite(u)) throw std::invalid_argument("u-grid values must be finite");
  if (!std::is_sorted(u_grid.begin(), u_grid.end()))
    throw std::invalid_argument("u-grid must be sorted");
  if (replicates < 1) throw std::invalid_argument("need at least one replicate");
  if (workers < 1) throw std::invalid_argument("need at least one worker");
  const auto known = known_metrics(n);
  for (const auto& m : metrics) {
    if (std::find(known.begin(), known.end(), m) == known.end())
      throw std::invalid_argument("unknown metric: " + m);
    if (domain != DomainShape::torus && is_nodal_metric(m))
      throw std::invalid_argument("nodal metrics are available on tori only");
  }
  if (metrics.empty()) throw std::invalid_argument("no metrics requested");
  const auto model = build_model();
  if (domain == DomainShape::torus) {
    const double reach = model.decay_radius(0.01);
    for (double L : sides)
      if (!(L >= 10.0 * reach))
        throw std::invalid_argument(fmt::format("torus side {} is below 10 correlation lengths ({})", L, reach));
  }
}

DomainSpec RunConfig::domain_spec() const {
  switch (domain) {
    case DomainShape::torus: return DomainSpec::torus(sides);
    case DomainShape::box: return DomainSpec::box(sides);
    case DomainShape::interval: return DomainSpec::interval(sides.at(0));
  }
  throw std::invalid_argument("unknown domain");
}

SpectralModel RunConfig::build_model() const { return make_model(model, n); }

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  if (j.contains("model")) c.model = model_kind_from_string(j["model"].get<std::string>());
  c.n = j.value("n", c.n);
  if (j.contains("domain")) {
    const auto& d = j["domain"];
    if (d.contains("shape")) c.domain = domain_shape_from_string(d["shape"].get<std::string>());
    if (d.contains("sides")) c.sides = d["sides"].get<std::vector<double>>();
    if (d.contains("grid")) c.grid = d["grid"].get<std::vector<int>>();
  }
  if (j.contains("u_grid")) c.u_grid = j["u_grid"].get<std::vector<double>>();
  if (j.contains("side")) c.side = side_from_string(j["side"].get<std::string>());
  c.replicates = j.value("replicates", c.replicates);
  c.master_seed = j.value("master_seed", c.master_seed);
  if (j.contains("metrics")) c.metrics = j["metrics"].get<std::vector<std::string>>();
  if (j.contains("output")) {
    c.csv_path = j["output"].value("csv", c.csv_path);
    c.manifest_path = j["output"].value("manifest", c.manifest_path);
  }
  c.workers = j.value("workers", c.workers);
  c.kac_rice_samples = j.value("kac_rice_samples", c.kac_rice_samples);
  if (j.contains("tolerance")) {
    c.assert_z = j["tolerance"].value("z", c.assert_z);
    c.assert_rel = j["tolerance"].value("relative", c.assert_rel);
  }
  return c;
}

nlohmann::json RunConfig::to_json() const {
  return {{"model", to_string(model)},
          {"n", n},
          {"domain", {{"shape", to_string(domain)}, {"sides", sides}, {"grid", grid}}},
          {"u_grid", u_grid},
          {"side", to_string(side)},
          {"replicates", replicates},
          {"master_seed", master_seed},
          {"metrics", metrics},
          {"output", {{"csv", csv_path}, {"manifest", manifest_path}}},
          {"kac_rice_samples", kac_rice_samples},
          {"tolerance", {{"z", assert_z}, {"relative", assert_rel}}}};
}

std::vector<std::string> known_metrics(int n) {
  std::vector<std::string> m{"euler", "n_components", "n_ball", "n_nodal", "n_sphere", "betti_sum"};
  for (int k = 0; k <= n; ++k) m.push_back("b" + std::to_string(k));
  for (int k = 0; k <= n; ++k) m.push_back("crit_" + std::to_string(k));
  return m;
}

double metric_value(const LevelTopology& t, const std::string& metric) {
  if (metric == "euler") return static_cast<double>(t.euler_characteristic);
  if (metric == "n_components") return t.n_components;
  if (metric == "n_ball") return t.n_ball_components;
  if (metric == "n_nodal") return t.n_nodal_components;
  if (metric == "n_sphere") return t.n_sphere_components;
  if (metric == "betti_sum") {
    double s = 0.0;
    for (int b : t.betti) s += b;
    return s;
  }
  if (metric.size() >= 2 && metric[0] == 'b') {
    const auto k = std::stoul(metric.substr(1));
    return k < t.betti.size() ? t.betti[k] : 0.0;
  }
  if (metric.starts_with("crit_")) {
    const auto k = std::stoul(metric.substr(5));
    return k < t.crit_counts_below.size() ? t.crit_counts_below[k] : 0.0;
  }
  throw std::invalid_argument("unknown metric: " + metric);
}

// ---------------------------------------------------------------------------
// Analysis

FieldAnalysis analyze_field(const GridField& field, const std::vector<double>& u_grid, Side side,
                            double newton_tol, bool need_critical) {
  const GridField g = side == Side::excursion ? field : field.negated();
  FieldAnalysis out;
  std::vector<CriticalPoint> crit;
  if (need_critical) {
    double lowest = std::numeric_limits<double>::infinity();
    for (double u : u_grid) lowest = std::min(lowest, oriented_level(side, u));
    crit = critical_above(g, lowest, newton_tol, out.critical_seeds, out.critical_failed);
  }
  for (double u : u_grid) {
    LevelTopology t = analyze_level(g, oriented_level(side, u), Side::excursion, crit);
    t.u = u;
    t.side = side;
    out.levels.push_back(std::move(t));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Theory and comparison

std::vector<TheoryValue> theory_table(const RunConfig& config) {
  config.validate();
  const SpectralModel model = config.build_model();
  const DomainSpec domain = config.domain_spec();
  const LKCurvatures lk = lk_curvatures(domain, model.second_moment);
  std::map<double, KacRiceEstimate> kac_rice;
  std::vector<TheoryValue> out;
  for (std::size_t k = 0; k < config.u_grid.size(); ++k) {
    const double u = config.u_grid[k];
    const double level = oriented_level(config.side, u);
    for (const auto& m : config.metrics) {
      double value = kNaN;
      if (m == "euler") {
        value = expected_euler(lk, level);
      } else if (is_component_metric(m)) {
        if (level > 0.0) value = expected_components_asymptotic(domain, model, level).refined;
      } else if (m.starts_with("crit_")) {
        auto it = kac_rice.find(level);
        if (it == kac_rice.end()) {
          const auto seed = replicate_seed(mix64(config.master_seed), k);
          it = kac_rice
                   .emplace(level, critical_density_mc(model, -level, config.kac_rice_samples, seed,
                                                       config.workers))
                   .first;
        }
        value = it->second.density[std::stoul(m.substr(5))] * domain.volume();
      }
      out.push_back({u, m, value});
    }
  }
  return out;
}

ComparisonReport compare_report(const std::vector<EmpiricalAggregate>& empirical,
                                const std::vector<TheoryValue>& theory, const std::string& model,
                                int n, const std::string& domain) {
  ComparisonReport report;
  std::vector<char> used(theory.size(), 0);
  for (const auto& e : empirical) {
    std::size_t match = theory.size();
    for (std::size_t t = 0; t < theory.size(); ++t) {
      if (!used[t] && theory[t].u == e.u && theory[t].metric == e.metric) {
        match = t;
        break;
      }
    }
    if (match == theory.size()) {
      report.unmatched.push_back(fmt::format("empirical u={},metric={}", format_double(e.u), e.metric));
      continue;
    }
    used[match] = 1;
    ComparisonRow row;
    row.model = model;
    row.n = n;
    row.domain = domain;
    row.u = e.u;
    row.metric = e.metric;
    row.emp_mean = e.mean;
    row.emp_se = e.std_error;
    row.theory = theory[match].value;
    if (e.replicates == 1) row.flags.push_back("insufficient replicates");
    if (std::isnan(row.theory)) {
      row.flags.push_back("no theory");
      row.ratio = kNaN;
      row.z = kNaN;
    } else {
      const double diff = row.emp_mean - row.theory;
      if (row.theory == 0.0) {
        row.ratio = kNaN;
        row.flags.push_back("ratio undefined");
      } else {
        row.ratio = row.emp_mean / row.theory;
      }
      if (row.emp_se > 0.0) {
        row.z = diff / row.emp_se;
      } else if (diff == 0.0) {
        row.z = 0.0;
      } else {
        row.z = std::copysign(std::numeric_limits<double>::infinity(), diff);
      }
    }
    report.rows.push_back(std::move(row));
  }
  for (std::size_t t = 0; t < theory.size(); ++t)
    if (!used[t])
      report.unmatched.push_back(
          fmt::format("theory u={},metric={}", format_double(theory[t].u), theory[t].metric));
  return report;
}

bool within_tolerance(const ComparisonRow& row, double z_tol, double rel_tol) {
  if (!std::isfinite(row.theory)) return true;
  return std::abs(row.emp_mean - row.theory) <=
         std::max(z_tol * row.emp_se, rel_tol * std::abs(row.theory));
}

// ---------------------------------------------------------------------------
// Sampling

SamplingPlan sampling_plan(const RunConfig& config, const SpectralModel& model) {
  SamplingPlan plan;
  if (config.domain == DomainShape::torus) {
    plan.period = config.sides;
    plan.shape = config.grid;
    return plan;
  }
  const double reach = model.decay_radius(0.01);
  if (!std::isfinite(reach))
    throw std::invalid_argument("box domains need a covariance that decays");
  for (int d = 0; d < config.n; ++d) {
    const double h = config.sides[d] / config.grid[d];
    int m = std::max(2 * (config.grid[d] + 1), static_cast<int>(std::ceil(10.0 * reach / h)) + 1);
    m = (m + 7) / 8 * 8;
    plan.shape.push_back(m);
    plan.period.push_back(m * h);
    plan.window.push_back(config.grid[d] + 1);
  }
  return plan;
}

GridField replicate_field(const RunConfig& config, const SpectralModel& model,
                          const SpectralWeights& weights, std::uint64_t replicate) {
  const std::uint64_t seed = replicate_seed(config.master_seed, replicate);
  Provenance prov{model.descriptor(), config.master_seed, replicate, seed};

  const char* dir = std::getenv(kCacheEnv);
  if (!dir || !*dir) return sample_torus(weights, seed, std::move(prov));

  nlohmann::json key = {{"model", prov.model},
                        {"period", weights.period},
                        {"shape", weights.shape},
                        {"seed", seed}};
  const std::filesystem::path path =
      std::filesystem::path(dir) / ("field-" + hex64(fnv1a(key.dump())) + ".grf");
  if (std::filesystem::exists(path)) {
    try {
      GridField cached = load_field(path);
      if (cached.shape() == weights.shape && cached.provenance().seed == seed) return cached;
    } catch (const std::exception& e) {
      spdlog::warn("ignoring unreadable cache entry {}: {}", path.string(), e.what());
    }
  }
  GridField field = sample_torus(weights, seed, std::move(prov));
  std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp-" + hex64(mix64(seed ^ reinterpret_cast<std::uintptr_t>(&field)));
  save_field(field, tmp);
  std::filesystem::rename(tmp, path);
  return field;
}

// ---------------------------------------------------------------------------
// Reports

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return fmt::format("{:.17g}", v);
}

std::string csv_header() { return "model,n,domain,u,metric,emp_mean,emp_se,theory,ratio,z\n"; }

std::string to_csv(const std::vector<ComparisonRow>& rows) {
  std::string out = csv_header();
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", r.model, r.n, r.domain, format_double(r.u),
                       r.metric, format_double(r.emp_mean), format_double(r.emp_se),
                       format_double(r.theory), format_double(r.ratio), format_double(r.z));
  }
  return out;
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

RunResult run(const RunConfig& config) {
  config.validate();
  const SpectralModel model = config.build_model();
  const SamplingPlan plan = sampling_plan(config, model);
  const SpectralWeights weights = compute_spectral_weights(model, plan.period, plan.shape);
  const double tol = newton_tolerance(model);
  const bool need_crit = needs_critical(config.metrics);
  const auto R = static_cast<std::size_t>(config.replicates);
  const std::size_t K = config.u_grid.size(), M = config.metrics.size();

  RunResult result;
  result.config = config;
  result.values.assign(R, {});
  result.seeds.resize(R);
  std::vector<int> crit_seeds(R, 0), crit_failed(R, 0);
  for (std::size_t r = 0; r < R; ++r) result.seeds[r] = replicate_seed(config.master_seed, r);

  parallel_for(R, config.workers, [&](std::size_t r) {
    try {
      const GridField field = replicate_field(config, model, weights, r);
      const FieldAnalysis analysis =
          config.domain == DomainShape::torus
              ? analyze_field(field, config.u_grid, config.side, tol, need_crit)
              : analyze_window(field, plan.window, config.u_grid, config.side, tol, need_crit);
      auto& v = result.values[r];
      v.assign(K, std::vector<double>(M));
      for (std::size_t k = 0; k < K; ++k)
        for (std::size_t m = 0; m < M; ++m)
          v[k][m] = metric_value(analysis.levels[k], config.metrics[m]);
      crit_seeds[r] = analysis.critical_seeds;
      crit_failed[r] = analysis.critical_failed;
    } catch (const std::exception& e) {
      throw std::runtime_error(fmt::format("replicate {} (seed {}) failed: {}", r, result.seeds[r],
                                           e.what()));
    }
  });

  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t m = 0; m < M; ++m) {
      double sum = 0.0;
      for (std::size_t r = 0; r < R; ++r) sum += result.values[r][k][m];
      const double mean = sum / R;
      double ss = 0.0;
      for (std::size_t r = 0; r < R; ++r) ss += std::pow(result.values[r][k][m] - mean, 2);
      const double se = R > 1 ? std::sqrt(ss / (R - 1) / R) : 0.0;
      result.empirical.push_back({config.u_grid[k], config.metrics[m], mean, se, config.replicates});
    }
  }

  const DomainSpec domain = config.domain_spec();
  result.report = compare_report(result.empirical, theory_table(config), to_string(config.model),
                                 config.n, domain.describe());

  long total_seeds = 0, total_failed = 0;
  for (std::size_t r = 0; r < R; ++r) {
    total_seeds += crit_seeds[r];
    total_failed += crit_failed[r];
  }
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : result.report.rows) {
    rows.push_back({{"u", row.u},
                    {"metric", row.metric},
                    {"emp_mean", row.emp_mean},
                    {"emp_se", row.emp_se},
                    {"theory", std::isfinite(row.theory) ? nlohmann::json(row.theory) : nlohmann::json(nullptr)},
                    {"ratio", std::isfinite(row.ratio) ? nlohmann::json(row.ratio) : nlohmann::json(nullptr)},
                    {"z", std::isfinite(row.z) ? nlohmann::json(row.z) : nlohmann::json(nullptr)},
                    {"flags", row.flags},
                    {"within_tolerance", within_tolerance(row, config.assert_z, config.assert_rel)}});
  }
  const HessianEnvelope env = conditional_hessian_law(model).envelope();
  std::vector<std::string> seed_hex;
  for (auto s : result.seeds) seed_hex.push_back(hex64(s));
  result.manifest = {
      {"format", "grftopo-run"},
      {"version", 1},
      {"config", config.to_json()},
      {"model", model.descriptor()},
      {"domain", domain.describe()},
      {"sampling",
       {{"period", plan.period},
        {"shape", plan.shape},
        {"window", plan.window},
        {"clipped_mass", weights.clipped_mass},
        {"nyquist_mass", weights.nyquist_mass},
        {"retained_modes", weights.retained}}},
      {"envelope",
       {{"sigma", env.sigma}, {"rho", env.rho}, {"theta", env.theta}, {"u0", env.u0}, {"u1", env.u1}}},
      {"replicate_seeds", seed_hex},
      {"critical_search", {{"seeds", total_seeds}, {"failed", total_failed}}},
      {"rows", rows},
      {"unmatched", result.report.unmatched}};
  if (total_failed > 0)
    spdlog::warn("{} of {} critical-point seeds did not converge", total_failed, total_seeds);

  if (!config.csv_path.empty()) {
    std::ofstream os(config.csv_path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + config.csv_path);
    os << to_csv(result.report.rows);
  }
  if (!config.manifest_path.empty()) {
    std::ofstream os(config.manifest_path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + config.manifest_path);
    os << result.manifest.dump(2) << '\n';
  }
  return result;
}

}  // namespace grftopo
