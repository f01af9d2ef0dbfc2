#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "grftopo/covariance_models.hpp"
#include "grftopo/critical_points.hpp"
#include "grftopo/excursion_topology.hpp"
#include "grftopo/field_sampler.hpp"
#include "grftopo/theory_predictors.hpp"

namespace grftopo {

/// Environment variable naming the field cache directory.
inline constexpr const char* kCacheEnv = "GRFTOPO_CACHE_DIR";

struct RunConfig {
  ModelKind model = ModelKind::bargmann_fock;
  int n = 2;
  DomainShape domain = DomainShape::torus;
  std::vector<double> sides{40.0, 40.0};
  /// Torus: vertices per axis. Box/interval: intervals per axis (the
  /// window has grid + 1 vertices and is cut from a larger torus).
  std::vector<int> grid{512, 512};
  std::vector<double> u_grid{0.0};
  Side side = Side::excursion;
  int replicates = 1;
  std::uint64_t master_seed = 0;
  std::vector<std::string> metrics{"euler"};
  std::string csv_path;
  std::string manifest_path;
  unsigned workers = 1;
  std::size_t kac_rice_samples = 200000;
  double assert_z = 3.0;     // tolerance |emp - theory| <= max(z se, rel |theory|)
  double assert_rel = 0.05;

  /// Throws std::invalid_argument when the configuration is unusable.
  void validate() const;
  DomainSpec domain_spec() const;
  SpectralModel build_model() const;

  static RunConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// euler, n_components, n_ball, n_nodal, n_sphere, betti_sum, b0..bn, crit_0..crit_n.
std::vector<std::string> known_metrics(int n);
double metric_value(const LevelTopology& t, const std::string& metric);

struct FieldAnalysis {
  std::vector<LevelTopology> levels;  // one per u, in input order
  int critical_seeds = 0;
  int critical_failed = 0;
};

/// Topology of a torus field at each level. Critical points are searched
/// only where they can matter (on the chosen side of the extreme level).
FieldAnalysis analyze_field(const GridField& field, const std::vector<double>& u_grid, Side side,
                            double newton_tol, bool need_critical = true);

struct EmpiricalAggregate {
  double u = 0.0;
  std::string metric;
  double mean = 0.0;
  double std_error = 0.0;
  int replicates = 0;
};

struct TheoryValue {
  double u = 0.0;
  std::string metric;
  double value = 0.0;  // NaN when no prediction exists
};

struct ComparisonRow {
  std::string model;
  int n = 0;
  std::string domain;
  double u = 0.0;
  std::string metric;
  double emp_mean = 0.0;
  double emp_se = 0.0;
  double theory = 0.0;
  double ratio = 0.0;
  double z = 0.0;
  std::vector<std::string> flags;
};

struct ComparisonReport {
  std::vector<ComparisonRow> rows;
  std::vector<std::string> unmatched;  // "u=...,metric=..." keys without a partner
};

/// Joins on (u, metric). ratio = emp / theory, z = (emp - theory) / se,
/// with z = 0 when both se and the difference vanish.
ComparisonReport compare_report(const std::vector<EmpiricalAggregate>& empirical,
                                const std::vector<TheoryValue>& theory, const std::string& model,
                                int n, const std::string& domain);

/// Theory for every (u, metric) of the configuration.
std::vector<TheoryValue> theory_table(const RunConfig& config);

/// True when |emp - theory| <= max(z_tol se, rel_tol |theory|); rows
/// without a finite theory value always pass.
bool within_tolerance(const ComparisonRow& row, double z_tol, double rel_tol);

struct RunResult {
  RunConfig config;
  std::vector<std::uint64_t> seeds;
  /// values[r][k][m]: replicate r, level k, metric m.
  std::vector<std::vector<std::vector<double>>> values;
  std::vector<EmpiricalAggregate> empirical;
  ComparisonReport report;
  nlohmann::json manifest;
};

/// Samples R replicates, analyzes them, aggregates, joins with theory and
/// writes the CSV and manifest when paths are configured. The CSV is a
/// pure function of the configuration.
RunResult run(const RunConfig& config);

/// The replicate field for seed_r, via the cache directory when set.
GridField replicate_field(const RunConfig& config, const SpectralModel& model,
                          const SpectralWeights& weights, std::uint64_t replicate);

/// Torus used to synthesize a configuration's fields.
struct SamplingPlan {
  std::vector<double> period;
  std::vector<int> shape;
  std::vector<int> window;  // vertices in the analysis window (box domains)
};
SamplingPlan sampling_plan(const RunConfig& config, const SpectralModel& model);

std::string format_double(double v);
std::string csv_header();
std::string to_csv(const std::vector<ComparisonRow>& rows);

std::uint64_t fnv1a(std::string_view bytes);

}  // namespace grftopo
