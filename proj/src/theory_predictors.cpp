#include "grftopo/theory_predictors.hpp"

#include <cmath>
#include <mutex>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <spdlog/spdlog.h>

namespace grftopo {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double inv_sqrt_two_pi_pow(int k) { return std::pow(kTwoPi, -0.5 * k); }

}  // namespace

std::string to_string(DomainShape shape) {
  switch (shape) {
    case DomainShape::torus: return "torus";
    case DomainShape::box: return "box";
    case DomainShape::interval: return "interval";
  }
  return "torus";
}

DomainShape domain_shape_from_string(const std::string& name) {
  if (name == "torus") return DomainShape::torus;
  if (name == "box") return DomainShape::box;
  if (name == "interval") return DomainShape::interval;
  throw std::invalid_argument("unknown domain shape: " + name);
}

DomainSpec DomainSpec::torus(std::vector<double> sides) {
  DomainSpec d{DomainShape::torus, std::move(sides)};
  d.validate();
  return d;
}

DomainSpec DomainSpec::box(std::vector<double> sides) {
  DomainSpec d{DomainShape::box, std::move(sides)};
  d.validate();
  return d;
}

DomainSpec DomainSpec::interval(double length) {
  DomainSpec d{DomainShape::interval, {length}};
  d.validate();
  return d;
}

void DomainSpec::validate() const {
  if (sides.empty()) throw std::invalid_argument("domain needs at least one side");
  for (double s : sides)
    if (!(s > 0.0) || !std::isfinite(s)) throw std::invalid_argument("domain sides must be positive");
  if (shape == DomainShape::interval && sides.size() != 1)
    throw std::invalid_argument("an interval has exactly one side");
}

double DomainSpec::volume() const {
  double v = 1.0;
  for (double s : sides) v *= s;
  return v;
}

std::string DomainSpec::describe() const {
  std::ostringstream os;
  os.precision(17);
  os << to_string(shape) << ':';
  for (std::size_t i = 0; i < sides.size(); ++i) os << (i ? "x" : "") << sides[i];
  return os.str();
}

double gaussian_tail(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

double mills_ratio(double x) {
  if (x < 5.0) {
    return gaussian_tail(x) * std::sqrt(kTwoPi) * std::exp(0.5 * x * x);
  }
  // Continued fraction 1/(x + 1/(x + 2/(x + 3/(x + ...)))), evaluated backwards.
  double t = x;
  for (int k = 120; k >= 1; --k) t = x + k / t;
  return 1.0 / t;
}

double hermite(int j, double x) {
  if (j < -1) throw std::invalid_argument("hermite index must be >= -1");
  if (j == -1) return mills_ratio(x);
  // j! sum_l (-1)^l x^{j-2l} / (l! (j-2l)! 2^l)
  double sum = 0.0;
  double coeff = 1.0;
  for (int l = 0; 2 * l <= j; ++l) {
    sum += (l % 2 ? -1.0 : 1.0) * coeff * std::pow(x, j - 2 * l);
    coeff *= static_cast<double>(j - 2 * l) * (j - 2 * l - 1) / (2.0 * (l + 1));
  }
  return sum;
}

LKCurvatures lk_curvatures(const DomainSpec& domain, const Eigen::MatrixXd& lambda) {
  domain.validate();
  const int n = domain.dimension();
  if (lambda.rows() != n || lambda.cols() != n)
    throw std::invalid_argument("metric dimension does not match domain");
  const Eigen::MatrixXd off = lambda - Eigen::MatrixXd(lambda.diagonal().asDiagonal());
  if (off.cwiseAbs().maxCoeff() > 1e-12 * lambda.diagonal().cwiseAbs().maxCoeff())
    throw std::invalid_argument("only diagonal metrics are supported on flat domains");

  LKCurvatures lk;
  lk.domain = domain;
  std::vector<double> metric_sides(n);
  for (int i = 0; i < n; ++i) {
    lk.metric_scale.push_back(std::sqrt(lambda(i, i)));
    metric_sides[i] = lk.metric_scale[i] * domain.sides[i];
  }
  lk.values.assign(n + 1, 0.0);
  if (domain.shape == DomainShape::torus) {
    double vol = 1.0;
    for (double s : metric_sides) vol *= s;
    lk.values[n] = vol;
    return lk;
  }
  // Elementary symmetric polynomials e_k of the metric side lengths.
  lk.values[0] = 1.0;
  for (int i = 0; i < n; ++i)
    for (int k = i + 1; k >= 1; --k) lk.values[k] += metric_sides[i] * lk.values[k - 1];
  return lk;
}

double expected_euler(const LKCurvatures& lk, double u) {
  const double gauss = std::exp(-0.5 * u * u);
  double total = 0.0;
  for (std::size_t k = 0; k < lk.values.size(); ++k) {
    if (lk.values[k] == 0.0) continue;
    if (k == 0) {
      // (2 pi)^{-1/2} H_{-1}(u) e^{-u^2/2} = Psi(u)
      total += lk.values[0] * gaussian_tail(u);
    } else {
      total += inv_sqrt_two_pi_pow(static_cast<int>(k) + 1) * lk.values[k] *
               hermite(static_cast<int>(k) - 1, u) * gauss;
    }
  }
  return total;
}

ComponentPrediction expected_components_asymptotic(const DomainSpec& domain,
                                                   const SpectralModel& model, double u) {
  if (!(u > 0.0)) throw std::invalid_argument("component asymptotics need u > 0");
  const int n = domain.dimension();
  if (n != model.dimension) throw std::invalid_argument("model and domain dimensions differ");
  const LKCurvatures lk = lk_curvatures(domain, model.second_moment);
  const double vol_g = lk.values[n];
  const double gauss = std::exp(-0.5 * u * u);

  ComponentPrediction p;
  p.leading = inv_sqrt_two_pi_pow(n + 1) * vol_g * std::pow(u, n - 1) * gauss;
  p.refined = domain.shape == DomainShape::torus
                  ? inv_sqrt_two_pi_pow(n + 1) * vol_g * hermite(n - 1, u) * gauss
                  : expected_euler(lk, u);

  const double u1 = conditional_hessian_law(model).envelope().u1;
  p.below_u1 = u < u1;
  if (p.below_u1) {
    static std::once_flag once;
    std::call_once(once, [&] {
      spdlog::warn("component asymptotics evaluated below u1 = {:.3g}; error control starts there", u1);
    });
  }
  return p;
}

double nazarov_sodin_cz(const SpectralModel& model, double u) {
  const int n = model.dimension;
  return inv_sqrt_two_pi_pow(n + 1) * model.sqrt_det_lambda() * hermite(n - 1, u) *
         std::exp(-0.5 * u * u);
}

}  // namespace grftopo
