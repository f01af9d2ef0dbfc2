#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "grftopo/covariance_models.hpp"
#include "grftopo/theory_predictors.hpp"

namespace grftopo {

/// Expected critical points per unit Lebesgue volume with value <= u.
struct KacRiceEstimate {
  double u = 0.0;
  int n = 0;
  std::size_t samples = 0;
  std::vector<double> density;    // by Morse index
  std::vector<double> std_error;  // by Morse index
  double total = 0.0;
  double total_std_error = 0.0;
  double asymptotic = 0.0;  // leading tail form per unit volume; NaN unless u <= -1
  HessianEnvelope envelope;
};

/// Monte-Carlo Kac-Rice integral over the joint law of (f, Hess f) given
/// grad f = 0. For finite u, f is drawn from its law truncated to (-inf, u]
/// by inverse CDF and the integrand is weighted by P(f <= u).
/// Batches of samples use independent seeds and are merged in batch order,
/// so the result does not depend on `workers`.
KacRiceEstimate critical_density_mc(const SpectralModel& model, double u, std::size_t n_samples,
                                    std::uint64_t seed, unsigned workers = 1);

/// (2 pi)^{-(n+1)/2} vol_g(M) |u|^{n-1} e^{-u^2/2}. Requires u <= -1.
double critical_total_asymptotic(const SpectralModel& model, const DomainSpec& domain, double u);

struct NonmaxPoint {
  double u = 0.0;
  double fraction = 0.0;  // (C - C_0) / C among points with value <= u
  double std_error = 0.0;
};

struct NonmaxResult {
  std::vector<NonmaxPoint> points;
  double fitted_slope = 0.0;     // least squares of log(fraction) on u^2
  double theoretical_rate = 0.0;  // -theta / 2
};

/// Requires every u <= -u0. Warns when a fraction is below 30 / n_samples.
NonmaxResult nonmax_fraction(const SpectralModel& model, std::span<const double> u_grid,
                             std::size_t n_samples, std::uint64_t seed, unsigned workers = 1);

}  // namespace grftopo
