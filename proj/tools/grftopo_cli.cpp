#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "grftopo/experiment_harness.hpp"
#include "grftopo/kac_rice.hpp"
#include "grftopo/random.hpp"
#include "grftopo/spin_glass.hpp"

using namespace grftopo;

namespace {

constexpr int kToleranceExit = 2;

struct ConfigFlags {
  std::string config_file;
  std::optional<std::string> model, domain, side, csv, manifest;
  std::optional<int> n, replicates;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;
  std::optional<std::size_t> kr_samples;
  std::vector<double> sides, u_grid;
  std::vector<int> grid;
  std::vector<std::string> metrics;

  void attach(CLI::App* app) {
    app->add_option("--config", config_file, "JSON run configuration")->check(CLI::ExistingFile);
    app->add_option("--model", model, "bargmann_fock | random_waves | full_band_random_waves");
    app->add_option("--n", n, "dimension");
    app->add_option("--domain", domain, "torus | box | interval");
    app->add_option("--sides", sides, "side lengths")->delimiter(',');
    app->add_option("--grid", grid, "grid points per axis")->delimiter(',');
    app->add_option("--u-grid", u_grid, "levels")->delimiter(',');
    app->add_option("--side", side, "excursion | sojourn");
    app->add_option("--replicates", replicates, "replicate count");
    app->add_option("--seed", seed, "master seed");
    app->add_option("--metrics", metrics, "metrics")->delimiter(',');
    app->add_option("--csv", csv, "CSV report path");
    app->add_option("--manifest", manifest, "JSON manifest path");
    app->add_option("--workers", workers, "worker threads");
    app->add_option("--kac-rice-samples", kr_samples, "Monte-Carlo samples for critical-point theory");
  }

  RunConfig build() const {
    RunConfig c;
    if (!config_file.empty()) {
      std::ifstream is(config_file);
      c = RunConfig::from_json(nlohmann::json::parse(is));
    }
    if (model) c.model = model_kind_from_string(*model);
    if (n) {
      c.n = *n;
      if (sides.empty() && static_cast<int>(c.sides.size()) != c.n) c.sides.assign(c.n, c.sides.at(0));
      if (grid.empty() && static_cast<int>(c.grid.size()) != c.n) c.grid.assign(c.n, c.grid.at(0));
    }
    if (domain) c.domain = domain_shape_from_string(*domain);
    if (!sides.empty()) c.sides = sides;
    if (!grid.empty()) c.grid = grid;
    if (!u_grid.empty()) c.u_grid = u_grid;
    if (side) c.side = side_from_string(*side);
    if (replicates) c.replicates = *replicates;
    if (seed) c.master_seed = *seed;
    if (!metrics.empty()) c.metrics = metrics;
    if (csv) c.csv_path = *csv;
    if (manifest) c.manifest_path = *manifest;
    if (workers) c.workers = *workers;
    if (kr_samples) c.kac_rice_samples = *kr_samples;
    c.validate();
    return c;
  }
};

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << text;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

/// Reads u, metric, emp_mean, emp_se (and optionally replicates) columns by name.
std::vector<EmpiricalAggregate> read_empirical(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error(path + " is empty");
  const auto header = split_csv_line(line);
  auto column = [&](const std::string& name) -> int {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    return -1;
  };
  const int cu = column("u"), cm = column("metric"), cmean = column("emp_mean"),
            cse = column("emp_se"), cr = column("replicates");
  if (cu < 0 || cm < 0 || cmean < 0 || cse < 0)
    throw std::runtime_error(path + " needs columns u, metric, emp_mean, emp_se");
  std::vector<EmpiricalAggregate> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    EmpiricalAggregate e;
    e.u = std::stod(cells.at(cu));
    e.metric = cells.at(cm);
    e.mean = std::stod(cells.at(cmean));
    e.std_error = std::stod(cells.at(cse));
    e.replicates = cr >= 0 ? std::stoi(cells.at(cr)) : 2;
    out.push_back(std::move(e));
  }
  return out;
}

int report_exit(const ComparisonReport& report, const RunConfig& config, bool assert_mode) {
  if (!report.unmatched.empty())
    for (const auto& key : report.unmatched) spdlog::warn("unmatched key: {}", key);
  if (!assert_mode) return 0;
  int violations = 0;
  for (const auto& row : report.rows) {
    if (within_tolerance(row, config.assert_z, config.assert_rel)) continue;
    ++violations;
    spdlog::error("tolerance violation: u={} metric={} emp={}+-{} theory={}", row.u, row.metric,
                  row.emp_mean, row.emp_se, row.theory);
  }
  return violations ? kToleranceExit : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Topology of excursion sets of Gaussian random fields"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace | debug | info | warn | error");

  // predict
  auto* predict = app.add_subcommand("predict", "theory values for a configuration");
  ConfigFlags predict_flags;
  predict_flags.attach(predict);
  std::string predict_out;
  predict->add_option("--out", predict_out, "output CSV (default stdout)");

  // simulate
  auto* simulate = app.add_subcommand("simulate", "sample replicate fields to disk");
  ConfigFlags simulate_flags;
  simulate_flags.attach(simulate);
  std::string out_dir = ".";
  simulate->add_option("--out-dir", out_dir, "directory for field files");

  // analyze
  auto* analyze = app.add_subcommand("analyze", "topology of stored fields");
  std::vector<std::string> field_files;
  std::vector<double> analyze_u;
  std::string analyze_side = "excursion";
  analyze->add_option("fields", field_files, "field files")->required()->check(CLI::ExistingFile);
  analyze->add_option("--u-grid", analyze_u, "levels")->delimiter(',')->required();
  analyze->add_option("--side", analyze_side, "excursion | sojourn");
  bool analyze_crit_csv = false;
  analyze->add_flag("--critical-points", analyze_crit_csv, "print critical points as CSV instead");

  // compare
  auto* compare = app.add_subcommand("compare", "join an empirical table with theory");
  ConfigFlags compare_flags;
  compare_flags.attach(compare);
  std::string empirical_path, compare_out;
  bool compare_assert = false;
  compare->add_option("--empirical", empirical_path, "CSV with u,metric,emp_mean,emp_se")
      ->required()
      ->check(CLI::ExistingFile);
  compare->add_option("--out", compare_out, "output CSV (default stdout)");
  compare->add_flag("--assert", compare_assert, "exit 2 on a tolerance violation");

  // run
  auto* run_cmd = app.add_subcommand("run", "simulate, analyze and compare");
  ConfigFlags run_flags;
  run_flags.attach(run_cmd);
  bool run_assert = false;
  run_cmd->add_flag("--assert", run_assert, "exit 2 on a tolerance violation");

  // kacrice
  auto* kacrice = app.add_subcommand("kacrice", "Monte-Carlo critical-point densities");
  std::string kr_model = "bargmann_fock";
  int kr_n = 2;
  std::vector<double> kr_u{std::numeric_limits<double>::infinity()};
  std::size_t kr_samples = 1000000;
  std::uint64_t kr_seed = 0;
  unsigned kr_workers = 1;
  std::string kr_out;
  kacrice->add_option("--model", kr_model, "model kind");
  kacrice->add_option("--n", kr_n, "dimension");
  kacrice->add_option("--u-grid", kr_u, "levels (inf allowed)")->delimiter(',');
  kacrice->add_option("--samples", kr_samples, "Monte-Carlo samples per level");
  kacrice->add_option("--seed", kr_seed, "seed");
  kacrice->add_option("--workers", kr_workers, "worker threads");
  kacrice->add_option("--out", kr_out, "output CSV (default stdout)");

  // spinglass
  auto* spinglass = app.add_subcommand("spinglass", "spherical p-spin model");
  int sg_p = 3, sg_n = 3, sg_starts = 10000;
  std::vector<int> sg_n_list;
  double sg_u = -1.8;
  std::size_t sg_samples = 100000;
  std::uint64_t sg_seed = 0;
  std::string sg_mode = "goe", sg_out;
  unsigned sg_workers = 1;
  spinglass->add_option("--p", sg_p, "interaction order");
  spinglass->add_option("--n", sg_n, "dimension");
  spinglass->add_option("--n-list", sg_n_list, "dimensions for the probe")->delimiter(',');
  spinglass->add_option("--u", sg_u, "energy level per site");
  spinglass->add_option("--samples", sg_samples, "GOE samples");
  spinglass->add_option("--starts", sg_starts, "Newton starts in brute mode");
  spinglass->add_option("--mode", sg_mode, "goe | probe | brute")
      ->check(CLI::IsMember({"goe", "probe", "brute"}));
  spinglass->add_option("--seed", sg_seed, "seed");
  spinglass->add_option("--workers", sg_workers, "worker threads");
  spinglass->add_option("--out", sg_out, "output CSV (default stdout)");

  CLI11_PARSE(app, argc, argv);
  spdlog::set_default_logger(spdlog::stderr_color_mt("grftopo"));
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (predict->parsed()) {
      const RunConfig config = predict_flags.build();
      const auto domain = config.domain_spec().describe();
      std::string text = "model,n,domain,u,metric,theory\n";
      for (const auto& t : theory_table(config))
        text += fmt::format("{},{},{},{},{},{}\n", to_string(config.model), config.n, domain,
                            format_double(t.u), t.metric, format_double(t.value));
      write_text(predict_out, text);
      return 0;
    }

    if (simulate->parsed()) {
      const RunConfig config = simulate_flags.build();
      const SpectralModel model = config.build_model();
      const SamplingPlan plan = sampling_plan(config, model);
      const SpectralWeights weights = compute_spectral_weights(model, plan.period, plan.shape);
      std::filesystem::create_directories(out_dir);
      for (int r = 0; r < config.replicates; ++r) {
        const GridField field = replicate_field(config, model, weights, r);
        const auto path = std::filesystem::path(out_dir) / fmt::format("field-{:05d}.grf", r);
        save_field(field, path);
        std::cout << path.string() << '\n';
      }
      return 0;
    }

    if (analyze->parsed()) {
      const Side side = side_from_string(analyze_side);
      for (const auto& path : field_files) {
        const GridField field = load_field(path);
        double lambda = 1.0;
        if (field.provenance().model.contains("lambda_matrix")) {
          const auto& rows = field.provenance().model["lambda_matrix"];
          for (std::size_t i = 0; i < rows.size(); ++i) lambda = std::max(lambda, rows[i][i].get<double>());
        }
        const double tol = 1e-9 * std::sqrt(lambda);
        if (analyze_crit_csv) {
          CriticalSearchOptions opt;
          opt.tol = tol;
          const auto search = find_critical_points(field, opt);
          std::cout << "file";
          for (int d = 0; d < field.dimension(); ++d) std::cout << ",x" << d;
          std::cout << ",value,index,degenerate\n";
          for (const auto& cp : search.points) {
            std::cout << path;
            for (int d = 0; d < field.dimension(); ++d) std::cout << ',' << format_double(cp.position(d));
            std::cout << ',' << format_double(cp.value) << ',' << cp.index << ',' << cp.degenerate << '\n';
          }
          if (search.failed_seeds > 0)
            spdlog::warn("{}: {} Newton seeds did not converge", path, search.failed_seeds);
          continue;
        }
        const auto analysis = analyze_field(field, analyze_u, side, tol, field.spectrum().has_value());
        nlohmann::json record = {{"file", path}, {"levels", nlohmann::json::array()}};
        for (const auto& t : analysis.levels) record["levels"].push_back(to_json(t));
        record["critical_search"] = {{"seeds", analysis.critical_seeds},
                                     {"failed", analysis.critical_failed}};
        std::cout << record.dump() << '\n';
      }
      return 0;
    }

    if (compare->parsed()) {
      const RunConfig config = compare_flags.build();
      const auto report = compare_report(read_empirical(empirical_path), theory_table(config),
                                         to_string(config.model), config.n,
                                         config.domain_spec().describe());
      write_text(compare_out, to_csv(report.rows));
      return report_exit(report, config, compare_assert);
    }

    if (run_cmd->parsed()) {
      const RunConfig config = run_flags.build();
      const auto result = run(config);
      if (config.csv_path.empty()) std::cout << to_csv(result.report.rows);
      return report_exit(result.report, config, run_assert);
    }

    if (kacrice->parsed()) {
      const SpectralModel model = make_model(model_kind_from_string(kr_model), kr_n);
      std::string text = "u,index,density,stderr,asymptotic\n";
      for (std::size_t k = 0; k < kr_u.size(); ++k) {
        const auto est = critical_density_mc(model, kr_u[k], kr_samples, replicate_seed(kr_seed, k),
                                             kr_workers);
        for (int i = 0; i <= kr_n; ++i)
          text += fmt::format("{},{},{},{},{}\n", format_double(est.u), i, format_double(est.density[i]),
                              format_double(est.std_error[i]), format_double(est.asymptotic));
        text += fmt::format("{},all,{},{},{}\n", format_double(est.u), format_double(est.total),
                            format_double(est.total_std_error), format_double(est.asymptotic));
      }
      write_text(kr_out, text);
      return 0;
    }

    if (spinglass->parsed()) {
      std::string text;
      if (sg_mode == "goe") {
        text = "p,n,u,index,estimate,stderr,hits\n";
        for (int i = 0; i < sg_n; ++i) {
          const auto est = expected_crit_goe(sg_p, sg_n, i, sg_u, sg_samples,
                                             replicate_seed(sg_seed, i), sg_workers);
          text += fmt::format("{},{},{},{},{},{},{}\n", sg_p, sg_n, format_double(sg_u), i,
                              format_double(est.mean), format_double(est.std_error), est.hits);
        }
      } else if (sg_mode == "probe") {
        if (sg_n_list.empty()) sg_n_list = {10, 20, 40};
        const auto probe = complexity_probe(sg_p, sg_u, sg_n_list, sg_samples, sg_seed, sg_workers);
        text = "p,u,n,value,gap\n";
        for (std::size_t k = 0; k < probe.n.size(); ++k)
          text += fmt::format("{},{},{},{},{}\n", sg_p, format_double(sg_u), probe.n[k],
                              format_double(probe.value[k]),
                              k == 0 ? std::string("nan") : format_double(probe.gap[k - 1]));
      } else {
        const auto model = SpinGlassModel::sample(sg_p, sg_n, sg_seed);
        const auto search = brute_force_crit_search(model, sg_starts, 1e-10, mix64(sg_seed));
        text = "p,n,value,index,residual\n";
        for (const auto& cp : search.points)
          text += fmt::format("{},{},{},{},{}\n", sg_p, sg_n, format_double(cp.value), cp.index,
                              format_double(cp.residual));
        if (search.non_converged > 0)
          spdlog::warn("{} of {} starts did not converge", search.non_converged, sg_starts);
      }
      write_text(sg_out, text);
      return 0;
    }
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
