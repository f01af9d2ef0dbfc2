#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "grftopo/experiment_harness.hpp"

using namespace grftopo;

namespace {

std::string read_file(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

RunConfig small_torus() {
  RunConfig c;
  c.model = ModelKind::bargmann_fock;
  c.n = 2;
  c.domain = DomainShape::torus;
  c.sides = {32.0, 32.0};
  c.grid = {64, 64};
  c.u_grid = {0.5, 1.5};
  c.replicates = 6;
  c.master_seed = 314;
  c.metrics = {"euler", "n_components", "n_ball", "n_nodal", "crit_0", "b1"};
  c.kac_rice_samples = 20000;
  return c;
}

class ScopedEnv {
 public:
  ScopedEnv(const char* name, const std::string& value) : name_(name) { setenv(name, value.c_str(), 1); }
  ~ScopedEnv() { unsetenv(name_); }

 private:
  const char* name_;
};

}  // namespace

TEST_SUITE("experiment_harness") {

TEST_CASE("single replicate is flagged") {
  RunConfig c = small_torus();
  c.replicates = 1;
  c.u_grid = {1.0};
  c.metrics = {"n_components"};
  const auto result = run(c);
  REQUIRE(result.report.rows.size() == 1);
  const auto& row = result.report.rows[0];
  CHECK(row.emp_se == 0.0);
  CHECK(std::find(row.flags.begin(), row.flags.end(), "insufficient replicates") != row.flags.end());
  CHECK(row.metric == "n_components");
  CHECK(row.u == 1.0);
}

TEST_CASE("report bytes do not depend on worker count") {
  const auto dir = std::filesystem::temp_directory_path() / "grftopo_test_workers";
  std::filesystem::create_directories(dir);
  RunConfig a = small_torus();
  a.workers = 1;
  a.csv_path = (dir / "one.csv").string();
  a.manifest_path = (dir / "one.json").string();
  RunConfig b = a;
  b.workers = 8;
  b.csv_path = (dir / "eight.csv").string();
  b.manifest_path = (dir / "eight.json").string();
  run(a);
  run(b);
  const auto one = read_file(a.csv_path);
  CHECK(!one.empty());
  CHECK(one == read_file(b.csv_path));
  const auto manifest = nlohmann::json::parse(read_file(a.manifest_path));
  CHECK(manifest.contains("config"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("aggregates are replicate means and standard errors") {
  const auto result = run(small_torus());
  const int R = 6;
  for (const auto& agg : result.empirical) {
    const auto k = static_cast<std::size_t>(std::find(result.config.u_grid.begin(), result.config.u_grid.end(), agg.u) -
                                            result.config.u_grid.begin());
    const auto m = static_cast<std::size_t>(std::find(result.config.metrics.begin(), result.config.metrics.end(), agg.metric) -
                                            result.config.metrics.begin());
    double s = 0.0, q = 0.0;
    for (int r = 0; r < R; ++r) s += result.values[r][k][m];
    const double mean = s / R;
    for (int r = 0; r < R; ++r) q += (result.values[r][k][m] - mean) * (result.values[r][k][m] - mean);
    CHECK(agg.mean == doctest::Approx(mean).epsilon(1e-12));
    CHECK(agg.std_error == doctest::Approx(std::sqrt(q / (R - 1) / R)).epsilon(1e-12));
    CHECK(agg.std_error >= 0.0);
  }
  CHECK(result.seeds.size() == 6);
  CHECK(result.seeds[3] == replicate_seed(314, 3));
}

TEST_CASE("comparison arithmetic") {
  const std::vector<EmpiricalAggregate> emp{{1.0, "euler", 5.0, 1.0, 10}, {2.0, "euler", 0.0, 0.0, 10},
                                            {3.0, "euler", 1.0, 0.5, 10}};
  const std::vector<TheoryValue> theory{{1.0, "euler", 4.0}, {2.0, "euler", 0.0}, {4.0, "euler", 1.0}};
  const auto report = compare_report(emp, theory, "bargmann_fock", 2, "torus");
  REQUIRE(report.rows.size() == 2);
  CHECK(report.rows[0].ratio == doctest::Approx(1.25));
  CHECK(report.rows[0].z == doctest::Approx(1.0));
  CHECK(report.rows[0].flags.empty());
  CHECK(std::isnan(report.rows[1].ratio));
  CHECK(report.rows[1].z == 0.0);
  CHECK(std::find(report.rows[1].flags.begin(), report.rows[1].flags.end(), "ratio undefined") !=
        report.rows[1].flags.end());
  CHECK(report.unmatched.size() == 2);

  ComparisonRow row;
  row.emp_mean = 1.04;
  row.emp_se = 0.001;
  row.theory = 1.0;
  CHECK(within_tolerance(row, 3.0, 0.05));
  row.emp_mean = 1.06;
  CHECK_FALSE(within_tolerance(row, 3.0, 0.05));
  row.theory = std::numeric_limits<double>::quiet_NaN();
  CHECK(within_tolerance(row, 3.0, 0.05));
}

TEST_CASE("torus euler characteristic at zero matches theory") {
  RunConfig c;
  c.sides = {40.0, 40.0};
  c.grid = {128, 128};
  c.u_grid = {0.0};
  c.replicates = 40;
  c.master_seed = 2718;
  c.metrics = {"euler"};
  const auto result = run(c);
  REQUIRE(result.report.rows.size() == 1);
  CHECK(result.report.rows[0].theory == 0.0);
  CHECK(std::abs(result.report.rows[0].z) <= 3.0);
}

TEST_CASE("interval euler characteristic follows the rice formula") {
  RunConfig c;
  c.n = 1;
  c.domain = DomainShape::interval;
  c.sides = {100.0};
  c.grid = {1000};
  c.u_grid = {0.0, 1.0, 2.0};
  c.replicates = 200;
  c.master_seed = 5;
  c.metrics = {"euler"};
  const auto result = run(c);
  REQUIRE(result.report.rows.size() == 3);
  for (const auto& row : result.report.rows) {
    const double expected = gaussian_tail(row.u) + 100.0 * std::exp(-0.5 * row.u * row.u) / (2 * std::numbers::pi);
    CHECK(row.theory == doctest::Approx(expected).epsilon(1e-12));
    CHECK(std::abs(row.z) <= 3.0);
  }
}

TEST_CASE("csv format") {
  CHECK(csv_header() == "model,n,domain,u,metric,emp_mean,emp_se,theory,ratio,z\n");
  CHECK(format_double(0.1) == "0.10000000000000001");
  CHECK(format_double(3.0) == "3");
  CHECK(format_double(std::numeric_limits<double>::quiet_NaN()) == "nan");
  CHECK(format_double(std::numeric_limits<double>::infinity()) == "inf");
  CHECK(format_double(-std::numeric_limits<double>::infinity()) == "-inf");
  ComparisonRow row{"bargmann_fock", 2, "torus", 3.0, "euler", 5.0, 1.0, 4.0, 1.25, 1.0, {}};
  const auto text = to_csv({row});
  CHECK(text == csv_header() + "bargmann_fock,2,torus,3,euler,5,1,4,1.25,1\n");
  for (double v : {1.0 / 3.0, 2.0 / 7.0, 1e-300, 6.02214076e23})
    CHECK(std::stod(format_double(v)) == v);
}

TEST_CASE("field cache round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "grftopo_test_cache";
  std::filesystem::remove_all(dir);
  const ScopedEnv env(kCacheEnv, dir.string());
  const RunConfig c = small_torus();
  const auto model = c.build_model();
  const auto plan = sampling_plan(c, model);
  const auto weights = compute_spectral_weights(model, plan.period, plan.shape);
  const auto first = replicate_field(c, model, weights, 2);
  REQUIRE(std::filesystem::exists(dir));
  std::size_t files = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir)) files += e.is_regular_file();
  CHECK(files == 1);
  const auto second = replicate_field(c, model, weights, 2);
  CHECK(std::equal(first.values().begin(), first.values().end(), second.values().begin()));
  CHECK(second.provenance().seed == replicate_seed(c.master_seed, 2));
  std::filesystem::remove_all(dir);
}

TEST_CASE("configuration json round trip and validation") {
  RunConfig c = small_torus();
  c.csv_path = "out.csv";
  c.side = Side::sojourn;
  const auto j = c.to_json();
  const auto back = RunConfig::from_json(j);
  CHECK(back.to_json() == j);
  CHECK(back.side == Side::sojourn);
  CHECK(back.metrics == c.metrics);

  RunConfig bad = c;
  bad.replicates = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = c;
  bad.u_grid = {1.0, 0.5};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = c;
  bad.metrics = {"genus"};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = c;
  bad.sides = {5.0, 5.0};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = c;
  bad.model = ModelKind::random_waves;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  CHECK(known_metrics(2).size() == 12);
}

}
