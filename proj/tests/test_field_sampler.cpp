#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <numbers>

#include "grftopo/field_sampler.hpp"
#include "grftopo/random.hpp"

using namespace grftopo;

namespace {

constexpr double kPi = std::numbers::pi;

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("grftopo_test_" + name);
}

// Direct O(N^2) evaluation of the half-spectrum series.
double direct_series(const SpectralRepresentation& rep, const Eigen::VectorXd& x) {
  double s = rep.constant;
  for (const auto& t : rep.terms) {
    double phase = 0.0;
    for (int d = 0; d < x.size(); ++d) phase += t.xi[d] * x(d);
    s += 2.0 * (t.c * std::polar(1.0, phase)).real();
  }
  return s;
}

}  // namespace

TEST_SUITE("field_sampler") {

TEST_CASE("grid values agree with the spectral series") {
  const auto model = make_model(ModelKind::bargmann_fock, 2);
  const auto field = sample_torus(model, {32.0, 32.0}, {64, 64}, 7);
  REQUIRE(field.spectrum());
  double worst = 0.0;
  for (std::size_t i = 0; i < field.size(); i += 37)
    worst = std::max(worst, std::abs(direct_series(*field.spectrum(), field.position(i)) - field[i]));
  CHECK(worst <= 1e-10);
  for (std::size_t i = 0; i < field.size(); i += 101)
    CHECK(eval_spectral(field, field.position(i)).value == doctest::Approx(field[i]).epsilon(1e-10));
}

TEST_CASE("sampling is deterministic in the seed") {
  const auto model = make_model(ModelKind::bargmann_fock, 2);
  const auto w = compute_spectral_weights(model, {32.0, 32.0}, {64, 64});
  const auto a = sample_torus(w, 99);
  const auto b = sample_torus(w, 99);
  const auto c = sample_torus(w, 100);
  CHECK(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
  CHECK_FALSE(std::equal(a.values().begin(), a.values().end(), c.values().begin()));
}

TEST_CASE("pointwise variance and covariance over replicates") {
  const auto model = make_model(ModelKind::bargmann_fock, 2);
  const auto w = compute_spectral_weights(model, {40.0, 40.0}, {640, 640});
  CHECK(w.clipped_mass + w.nyquist_mass <= 1e-8);
  const int reps = 200;
  const int lag = 16;  // one unit at spacing 1/16
  double var = 0.0, cov = 0.0;
  for (int r = 0; r < reps; ++r) {
    const auto f = sample_torus(w, replicate_seed(2024, r));
    double v = 0.0, c = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
      v += f[i] * f[i];
      c += f[i] * f[f.shifted(i, 0, lag)];
    }
    var += v / f.size();
    cov += c / f.size();
  }
  CHECK(var / reps == doctest::Approx(1.0).epsilon(0.02));
  CHECK(cov / reps == doctest::Approx(std::exp(-0.5)).epsilon(0.02 / std::exp(-0.5)));
}

TEST_CASE("marginals are gaussian") {
  const auto model = make_model(ModelKind::bargmann_fock, 2);
  const auto w = compute_spectral_weights(model, {32.0, 32.0}, {64, 64});
  const int reps = 2000;
  double m1 = 0, m2 = 0, m3 = 0, m4 = 0;
  for (int r = 0; r < reps; ++r) {
    const double x = sample_torus(w, replicate_seed(5, r))[1234];
    m1 += x;
    m2 += x * x;
    m3 += x * x * x;
    m4 += x * x * x * x;
  }
  m1 /= reps;
  m2 /= reps;
  m3 /= reps;
  m4 /= reps;
  const double var = m2 - m1 * m1;
  const double skew = (m3 - 3 * m1 * m2 + 2 * m1 * m1 * m1) / std::pow(var, 1.5);
  const double kurt = (m4 - 4 * m1 * m3 + 6 * m1 * m1 * m2 - 3 * m1 * m1 * m1 * m1) / (var * var);
  CHECK(std::abs(skew) <= 0.15);
  CHECK(std::abs(kurt - 3.0) <= 0.3);
}

TEST_CASE("derivative second moments match lambda") {
  const auto model = make_model(ModelKind::bargmann_fock, 2);
  const auto w = compute_spectral_weights(model, {40.0, 40.0}, {128, 128});
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  std::size_t count = 0;
  for (int r = 0; r < 20; ++r) {
    const auto f = sample_torus(w, replicate_seed(11, r));
    const auto g = grid_gradient(f);
    for (std::size_t i = 0; i < f.size(); ++i) {
      sxx += g[0][i] * g[0][i];
      syy += g[1][i] * g[1][i];
      sxy += g[0][i] * g[1][i];
    }
    count += f.size();
  }
  CHECK(sxx / count == doctest::Approx(model.second_moment(0, 0)).epsilon(0.02));
  CHECK(syy / count == doctest::Approx(model.second_moment(1, 1)).epsilon(0.02));
  CHECK(std::abs(sxy / count) <= 0.02);
}

TEST_CASE("exact derivatives agree with finite differences") {
  const auto model = make_model(ModelKind::bargmann_fock, 2);
  const auto field = sample_torus(model, {32.0, 32.0}, {64, 64}, 3);
  Rng rng(17);
  std::uniform_real_distribution<double> unif(0.0, 32.0);
  const double h = 1e-5;
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd x(2);
    x << unif(rng), unif(rng);
    const auto j = eval_spectral(field, x);
    CHECK((j.hessian - j.hessian.transpose()).norm() == 0.0);
    for (int d = 0; d < 2; ++d) {
      Eigen::VectorXd e = Eigen::VectorXd::Zero(2);
      e(d) = h;
      const auto plus = eval_spectral(field, x + e);
      const auto minus = eval_spectral(field, x - e);
      const double fd = (plus.value - minus.value) / (2 * h);
      CHECK(std::abs(fd - j.gradient(d)) <= 1e-6 * std::max(1.0, std::abs(j.gradient(d))));
      const Eigen::VectorXd fd_hess = (plus.gradient - minus.gradient) / (2 * h);
      CHECK((fd_hess - j.hessian.col(d)).norm() <= 1e-6 * std::max(1.0, j.hessian.norm()));
    }
  }
  const auto grads = grid_gradient(field);
  for (std::size_t i = 0; i < field.size(); i += 97) {
    const auto j = eval_spectral(field, field.position(i));
    CHECK(grads[0][i] == doctest::Approx(j.gradient(0)).epsilon(1e-9));
    CHECK(grads[1][i] == doctest::Approx(j.gradient(1)).epsilon(1e-9));
  }
}

TEST_CASE("trigonometric interpolation reproduces grid arrays") {
  const int m = 32;
  std::vector<double> values(m * m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      values[i * m + j] = std::cos(2 * kPi * i / m) * std::cos(2 * kPi * j / m) +
                          0.3 * std::sin(2 * kPi * 3 * j / m);
  const auto field = field_from_values({m, m}, {2 * kPi, 2 * kPi}, values);
  Eigen::VectorXd x(2);
  x << 0.37, 1.91;
  const auto v = eval_spectral(field, x);
  CHECK(v.value == doctest::Approx(std::cos(0.37) * std::cos(1.91) + 0.3 * std::sin(3 * 1.91)).epsilon(1e-12));
  CHECK(v.gradient(0) == doctest::Approx(-std::sin(0.37) * std::cos(1.91)).epsilon(1e-12));
  for (std::size_t i = 0; i < field.size(); ++i) CHECK(field[i] == values[i]);

  // Nyquist content stays real.
  std::vector<double> alt(m);
  for (int i = 0; i < m; ++i) alt[i] = (i % 2 == 0) ? 1.0 : -1.0;
  const auto line = field_from_values({m}, {1.0}, alt);
  Eigen::VectorXd y(1);
  y << 0.5 / m;
  CHECK(std::abs(eval_spectral(line, y).value) <= 1e-12);
}

TEST_CASE("negation flips values and spectrum") {
  const auto field = sample_torus(make_model(ModelKind::bargmann_fock, 2), {32.0, 32.0}, {64, 64}, 8);
  const auto neg = field.negated();
  for (std::size_t i = 0; i < field.size(); ++i) CHECK(neg[i] == -field[i]);
  Eigen::VectorXd x(2);
  x << 1.234, 5.678;
  CHECK(eval_spectral(neg, x).value == doctest::Approx(-eval_spectral(field, x).value).epsilon(1e-14));
}

TEST_CASE("random features") {
  const auto rw = make_model(ModelKind::random_waves, 2);
  std::vector<Eigen::VectorXd> pts(2, Eigen::VectorXd::Zero(2));
  pts[1](0) = 1.0;
  const int reps = 40000;
  double v0 = 0.0, c01 = 0.0;
  for (int r = 0; r < reps; ++r) {
    const auto f = sample_random_features(rw, pts, 512, replicate_seed(31, r));
    v0 += f[0] * f[0];
    c01 += f[0] * f[1];
  }
  CHECK(v0 / reps == doctest::Approx(1.0).epsilon(0.03));
  CHECK(std::abs(c01 / reps - 0.765198) <= 0.02);

  const auto bf1 = make_model(ModelKind::bargmann_fock, 1);
  Rng rng(4);
  std::vector<double> xi(1);
  double m2 = 0.0;
  for (int i = 0; i < 20000; ++i) {
    bf1.sample_frequency(rng, xi);
    m2 += xi[0] * xi[0];
  }
  CHECK(m2 / 20000 == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("save and load round trip") {
  const auto field = sample_torus(make_model(ModelKind::bargmann_fock, 2), {32.0, 32.0}, {64, 64}, 12);
  const auto path = temp_path("roundtrip.grf");
  save_field(field, path);
  const auto back = load_field(path);
  std::filesystem::remove(path);
  CHECK(back.shape() == field.shape());
  CHECK(back.period() == field.period());
  CHECK(std::memcmp(back.values().data(), field.values().data(), field.size() * sizeof(double)) == 0);
  REQUIRE(back.spectrum());
  CHECK(back.spectrum()->terms.size() == field.spectrum()->terms.size());
  Eigen::VectorXd x(2);
  x << 3.3, 17.1;
  CHECK(eval_spectral(back, x).value == eval_spectral(field, x).value);
  CHECK(back.provenance().seed == field.provenance().seed);
}

TEST_CASE("preconditions") {
  const auto bf = make_model(ModelKind::bargmann_fock, 2);
  CHECK_THROWS_AS(compute_spectral_weights(bf, {10.0, 10.0}, {64, 64}), std::invalid_argument);
  CHECK_THROWS_AS(compute_spectral_weights(bf, {32.0, 32.0}, {64, 64, 64}), std::invalid_argument);
  CHECK_THROWS_AS(compute_spectral_weights(make_model(ModelKind::random_waves, 2), {60.0, 60.0}, {128, 128}),
                  std::invalid_argument);
  CHECK_THROWS_AS(compute_spectral_weights(bf, {40.0, 40.0}, {8, 8}), std::runtime_error);
  CHECK_THROWS(load_field(temp_path("missing.grf")));
  const auto flat = sample_torus(bf, {32.0, 32.0}, {64, 64}, 1);
  const GridField bare(flat.shape(), flat.period(), std::vector<double>(flat.values().begin(), flat.values().end()));
  CHECK_THROWS_AS(eval_spectral(bare, Eigen::VectorXd::Zero(2)), std::logic_error);
}

}
