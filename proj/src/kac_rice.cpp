#include "grftopo/kac_rice.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include <boost/math/special_functions/erf.hpp>
#include <spdlog/spdlog.h>

#include "grftopo/parallel.hpp"
#include "grftopo/random.hpp"

namespace grftopo {

namespace {

constexpr std::size_t kBatch = 1 << 16;

struct Moments {
  std::vector<double> sum, sum_sq;  // per index
  double total = 0.0, total_sq = 0.0;
  double rest = 0.0, rest_sq = 0.0, rest_total = 0.0;  // non-minimum part

  explicit Moments(int n) : sum(n + 1, 0.0), sum_sq(n + 1, 0.0) {}

  void merge(const Moments& o) {
    for (std::size_t i = 0; i < sum.size(); ++i) {
      sum[i] += o.sum[i];
      sum_sq[i] += o.sum_sq[i];
    }
    total += o.total;
    total_sq += o.total_sq;
    rest += o.rest;
    rest_sq += o.rest_sq;
    rest_total += o.rest_total;
  }
};

int morse_index(const Eigen::MatrixXd& h) {
  const auto n = h.rows();
  if (n == 1) return h(0, 0) < 0.0;
  if (n == 2) {
    const double det = h(0, 0) * h(1, 1) - h(0, 1) * h(1, 0);
    if (det < 0.0) return 1;
    return h(0, 0) + h(1, 1) < 0.0 ? 2 : 0;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h, Eigen::EigenvaluesOnly);
  return static_cast<int>((es.eigenvalues().array() < 0.0).count());
}

/// Quantile of the standard normal at p in (0, 1).
double normal_quantile(double p) { return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p); }

Moments integrate(const SpectralModel& model, const GaussianHessianLaw& law, double u,
                  std::size_t n_samples, std::uint64_t seed, unsigned workers) {
  const int n = model.dimension;
  const double mass = std::isinf(u) ? 1.0 : 1.0 - gaussian_tail(u);
  const std::size_t batches = (n_samples + kBatch - 1) / kBatch;
  std::vector<Moments> parts(batches, Moments(n));
  parallel_for(batches, workers, [&](std::size_t b) {
    Rng rng = make_rng(replicate_seed(seed, b));
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> uniform;
    Moments& m = parts[b];
    const std::size_t count = std::min(kBatch, n_samples - b * kBatch);
    for (std::size_t s = 0; s < count; ++s) {
      double f = 0.0;
      if (std::isinf(u)) {
        f = normal(rng);
      } else {
        // Uniform on (0, 1] keeps the quantile finite.
        const double v = 1.0 - uniform(rng);
        f = normal_quantile(v * mass);
      }
      const Eigen::MatrixXd h = law.sample(f, rng);
      const double value = mass * std::abs(h.determinant());
      const int idx = morse_index(h);
      m.sum[idx] += value;
      m.sum_sq[idx] += value * value;
      m.total += value;
      m.total_sq += value * value;
      if (idx != 0) {
        m.rest += value;
        m.rest_sq += value * value;
        m.rest_total += value * value;
      }
    }
  });
  Moments out(n);
  for (const auto& p : parts) out.merge(p);
  return out;
}

double standard_error(double sum, double sum_sq, std::size_t count) {
  if (count < 2) return 0.0;
  const double c = static_cast<double>(count);
  const double mean = sum / c;
  const double var = std::max(0.0, (sum_sq - c * mean * mean) / (c - 1.0));
  return std::sqrt(var / c);
}

}  // namespace

KacRiceEstimate critical_density_mc(const SpectralModel& model, double u, std::size_t n_samples,
                                    std::uint64_t seed, unsigned workers) {
  if (std::isnan(u)) throw std::invalid_argument("level must not be NaN");
  if (n_samples == 0) throw std::invalid_argument("need at least one sample");
  const int n = model.dimension;
  // Raw coordinates: Cov(f, H) = -Lambda, Cov(H, H) = kappa - Lambda (x) Lambda.
  const GaussianHessianLaw law =
      conditional_hessian_law(model, Eigen::MatrixXd::Identity(n, n));

  KacRiceEstimate est;
  est.u = u;
  est.n = n;
  est.samples = n_samples;
  est.envelope = conditional_hessian_law(model).envelope();
  est.density.assign(n + 1, 0.0);
  est.std_error.assign(n + 1, 0.0);
  est.asymptotic = u <= -1.0 ? std::pow(2.0 * std::numbers::pi, -0.5 * (n + 1)) *
                                   model.sqrt_det_lambda() * std::pow(std::abs(u), n - 1) *
                                   std::exp(-0.5 * u * u)
                             : std::numeric_limits<double>::quiet_NaN();
  if (u == -std::numeric_limits<double>::infinity()) return est;

  const Moments m = integrate(model, law, u, n_samples, seed, workers);
  const double scale = std::pow(2.0 * std::numbers::pi, -0.5 * n) / model.sqrt_det_lambda();
  const double c = static_cast<double>(n_samples);
  for (int i = 0; i <= n; ++i) {
    est.density[i] = scale * m.sum[i] / c;
    est.std_error[i] = scale * standard_error(m.sum[i], m.sum_sq[i], n_samples);
  }
  est.total = scale * m.total / c;
  est.total_std_error = scale * standard_error(m.total, m.total_sq, n_samples);
  return est;
}

double critical_total_asymptotic(const SpectralModel& model, const DomainSpec& domain, double u) {
  if (!(u <= -1.0)) throw std::invalid_argument("tail asymptotics need u <= -1");
  const int n = domain.dimension();
  if (n != model.dimension) throw std::invalid_argument("model and domain dimensions differ");
  const double vol_g = domain.volume() * model.sqrt_det_lambda();
  return std::pow(2.0 * std::numbers::pi, -0.5 * (n + 1)) * vol_g * std::pow(std::abs(u), n - 1) *
         std::exp(-0.5 * u * u);
}

NonmaxResult nonmax_fraction(const SpectralModel& model, std::span<const double> u_grid,
                             std::size_t n_samples, std::uint64_t seed, unsigned workers) {
  const int n = model.dimension;
  const GaussianHessianLaw law =
      conditional_hessian_law(model, Eigen::MatrixXd::Identity(n, n));
  NonmaxResult out;
  const HessianEnvelope env = conditional_hessian_law(model).envelope();
  out.theoretical_rate = -0.5 * env.theta;

  for (std::size_t k = 0; k < u_grid.size(); ++k) {
    const double u = u_grid[k];
    if (u > -env.u0) throw std::invalid_argument("levels must lie at or below -u0");
    const Moments m = integrate(model, law, u, n_samples, replicate_seed(seed, k), workers);
    // Ratio estimator rest/total with delta-method variance of rest_s - F total_s.
    const double c = static_cast<double>(n_samples);
    const double fraction = m.total > 0.0 ? m.rest / m.total : 0.0;
    const double mean_total = m.total / c;
    // sum (r - F t)^2 with r t = r^2 when r != 0 and r = 0 otherwise.
    const double resid_sq =
        m.rest_sq - 2.0 * fraction * m.rest_total + fraction * fraction * m.total_sq;
    const double var = std::max(0.0, resid_sq / c - std::pow((m.rest - fraction * m.total) / c, 2));
    const double se = mean_total > 0.0 ? std::sqrt(var / c) / mean_total : 0.0;
    if (fraction < 30.0 / c)
      spdlog::warn("non-minimum fraction {:.3g} at u = {} is below the resolution floor", fraction, u);
    out.points.push_back({u, fraction, se});
  }

  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int used = 0;
  for (const auto& p : out.points) {
    if (!(p.fraction > 0.0)) continue;
    const double x = p.u * p.u, y = std::log(p.fraction);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++used;
  }
  if (used >= 2) {
    const double denom = used * sxx - sx * sx;
    out.fitted_slope = denom != 0.0 ? (used * sxy - sx * sy) / denom : 0.0;
  } else {
    out.fitted_slope = std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

}  // namespace grftopo
