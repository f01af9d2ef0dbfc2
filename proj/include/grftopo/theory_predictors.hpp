#pragma once

#include <string>
#include <vector>

#include "grftopo/covariance_models.hpp"

namespace grftopo {

enum class DomainShape { torus, box, interval };

std::string to_string(DomainShape shape);
DomainShape domain_shape_from_string(const std::string& name);

/// Flat domain: a box [0,T_1] x ... x [0,T_n] or the torus R^n / prod T_i Z.
struct DomainSpec {
  DomainShape shape = DomainShape::torus;
  std::vector<double> sides;

  static DomainSpec torus(std::vector<double> sides);
  static DomainSpec box(std::vector<double> sides);
  static DomainSpec interval(double length);

  int dimension() const { return static_cast<int>(sides.size()); }
  double volume() const;
  /// Throws std::invalid_argument on empty or non-positive sides.
  void validate() const;
  std::string describe() const;
};

/// Lipschitz-Killing curvatures L_0..L_n in the induced metric.
struct LKCurvatures {
  std::vector<double> values;
  DomainSpec domain;
  std::vector<double> metric_scale;  // sqrt(lambda_ii) per axis
};

/// Upper Gaussian tail Psi(x) = P(Z > x).
double gaussian_tail(double x);
/// Mills ratio Psi(x) / phi(x), evaluated without forming either factor
/// for large x.
double mills_ratio(double x);

/// Probabilists' Hermite polynomial H_j for j >= 0, and the scaled tail
/// H_{-1}(x) = sqrt(2 pi) Psi(x) e^{x^2/2} for j = -1.
double hermite(int j, double x);

/// Flat strata only: box curvatures are elementary symmetric polynomials of
/// the metric side lengths; a torus has only L_n = vol_g.
/// Throws std::invalid_argument for non-diagonal metrics.
LKCurvatures lk_curvatures(const DomainSpec& domain, const Eigen::MatrixXd& lambda);

/// E chi(E_u) = sum_k (2 pi)^{-(k+1)/2} L_k H_{k-1}(u) e^{-u^2/2}.
double expected_euler(const LKCurvatures& lk, double u);

enum class ErrorRegime { polynomial, exponential };

struct ComponentPrediction {
  double leading = 0.0;  // (2 pi)^{-(n+1)/2} vol_g u^{n-1} e^{-u^2/2}; O(1/u) relative error
  double refined = 0.0;  // Hermite form; O(e^{-c u^2}) relative error
  ErrorRegime leading_regime = ErrorRegime::polynomial;
  ErrorRegime refined_regime = ErrorRegime::exponential;
  bool below_u1 = false;  // u below the envelope threshold u_1
};

/// Leading-order and Hermite-refined predictions shared by E N(E_u),
/// E N_ball(E_u), E N(Z_u) and E N_sphere(Z_u). For a torus the refined form
/// is vol_g H_{n-1}(u); for a box it is the full Lipschitz-Killing sum.
/// Requires u > 0; warns when u < u_1.
ComponentPrediction expected_components_asymptotic(const DomainSpec& domain,
                                                   const SpectralModel& model, double u);

/// Asymptotic volume density of nodal components of Z_u:
/// (2 pi)^{-(n+1)/2} sqrt(det Lambda) H_{n-1}(u) e^{-u^2/2}.
double nazarov_sodin_cz(const SpectralModel& model, double u);

}  // namespace grftopo
