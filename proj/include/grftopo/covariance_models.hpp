#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "grftopo/random.hpp"

namespace grftopo {

enum class ModelKind { bargmann_fock, random_waves, full_band_random_waves, custom };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

/// Symmetric 4-tensor with dense n^4 storage.
class FourthMoment {
 public:
  FourthMoment() = default;
  explicit FourthMoment(int n) : n_(n), data_(static_cast<std::size_t>(n) * n * n * n, 0.0) {}

  int dimension() const { return n_; }
  double& operator()(int i, int j, int k, int l) { return data_[flat(i, j, k, l)]; }
  double operator()(int i, int j, int k, int l) const { return data_[flat(i, j, k, l)]; }
  const std::vector<double>& data() const { return data_; }

  /// Largest deviation from full index-permutation symmetry.
  double asymmetry() const;

 private:
  std::size_t flat(int i, int j, int k, int l) const {
    return ((static_cast<std::size_t>(i) * n_ + j) * n_ + k) * n_ + l;
  }
  int n_ = 0;
  std::vector<double> data_;
};

using CovarianceFn = std::function<double(std::span<const double>)>;
/// Writes one frequency vector drawn from the spectral probability measure.
using SpectralSamplerFn = std::function<void(Rng&, std::span<double>)>;

/// A stationary unit-variance covariance k(x) with its jets at the origin:
/// second_moment = -Hess k(0) and fourth_moment = D^4 k(0).
struct SpectralModel {
  ModelKind kind = ModelKind::custom;
  std::string name;
  int dimension = 0;
  CovarianceFn covariance;
  SpectralSamplerFn spectral_sampler;
  Eigen::MatrixXd second_moment;
  FourthMoment fourth_moment;
  nlohmann::json params = nlohmann::json::object();

  double covariance_eval(std::span<const double> x) const { return covariance(x); }
  double covariance_eval(const Eigen::VectorXd& x) const {
    return covariance(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
  }
  void sample_frequency(Rng& rng, std::span<double> out) const { spectral_sampler(rng, out); }

  /// sqrt(det second_moment); the density constant c_n.
  double sqrt_det_lambda() const;

  /// Largest radius (over coordinate axes) beyond which |k| stays below eps.
  /// Returns +inf when k has not decayed within 4000 / sqrt(max lambda).
  double decay_radius(double eps) const;

  /// Run-manifest descriptor {name, n, params, lambda_matrix, kappa_tensor}.
  nlohmann::json descriptor() const;
};

SpectralModel make_model(ModelKind kind, int n);

/// Builds a model from a user covariance. Jets come from Richardson-
/// extrapolated central differences. Throws std::invalid_argument when
/// k(0) != 1, when the jets do not converge (non-finite moments), or when
/// the joint law of (f, Hess f) is degenerate.
SpectralModel make_custom_model(int n, std::string name, CovarianceFn covariance,
                                SpectralSamplerFn sampler,
                                nlohmann::json params = nlohmann::json::object());

struct CovarianceJets {
  Eigen::MatrixXd second_moment;
  FourthMoment fourth_moment;
  double max_richardson_gap = 0.0;  // largest relative disagreement between the last two levels
};

/// Central-difference jets of k at 0 with Richardson extrapolation
/// (steps h, h/2, h/4 along polarization directions).
CovarianceJets finite_difference_jets(const CovarianceFn& covariance, int n, double step = 0.1);

/// Radial profile of the unit-variance random-wave covariance in dimension n.
double random_wave_covariance(int n, double r);
/// Radial profile of the unit-variance full-band random-wave covariance.
double full_band_covariance(int n, double r);

// ---------------------------------------------------------------------------
// Symmetric-matrix coordinates.
//
// Sym(n) is identified with R^{n(n+1)/2} through an orthonormal basis for
// <R, S> = tr(RS): E_ii first, then (E_ij + E_ji)/sqrt(2) for i < j.

int sym_dimension(int n);
Eigen::VectorXd to_sym_coords(const Eigen::MatrixXd& m);
Eigen::MatrixXd from_sym_coords(const Eigen::VectorXd& v, int n);
/// Pairs (i, j), i <= j, in basis order.
std::vector<std::pair<int, int>> sym_basis_pairs(int n);

struct HessianEnvelope {
  double sigma = 0.0;  // spectral radius of the covariance operator
  double rho = 0.0;    // sqrt|det| of the covariance operator
  double s = 0.0;      // 0 on full-dimensional flat domains
  double theta = 0.0;  // 1 / max(s^2 + sigma, (s+1)^2)
  double u0 = 0.0;
  double u1 = 0.0;
};

/// Law of the Hessian (in coordinates where the induced metric is the
/// identity) conditional on f = t and grad f = 0. Obtained by Gaussian
/// regression from the covariance 4-jet: mean t Cov(H, f), covariance
/// kappa' - Cov(H, f) (x) Cov(H, f) on Sym(n).
class GaussianHessianLaw {
 public:
  GaussianHessianLaw(int n, Eigen::MatrixXd mean_slope, Eigen::MatrixXd covariance);

  int dimension() const { return n_; }
  Eigen::MatrixXd mean_at(double t) const;
  /// Covariance operator on Sym(n) in the orthonormal coordinates above.
  const Eigen::MatrixXd& covariance() const { return covariance_; }
  /// Cov(H_ij, H_kl) in matrix entries.
  double entry_covariance(int i, int j, int k, int l) const;
  const HessianEnvelope& envelope() const { return envelope_; }

  Eigen::MatrixXd sample(double t, Rng& rng) const;

 private:
  int n_;
  Eigen::MatrixXd mean_slope_;  // Cov(H, f); mean_at(t) = t * mean_slope_
  Eigen::MatrixXd covariance_;
  Eigen::MatrixXd factor_;
  HessianEnvelope envelope_;
};

/// Throws std::domain_error when the regression covariance has an
/// eigenvalue below -1e-10 (inconsistent jets).
GaussianHessianLaw conditional_hessian_law(const SpectralModel& model);
GaussianHessianLaw conditional_hessian_law(const SpectralModel& model,
                                           const Eigen::MatrixXd& domain_metric);

inline Eigen::MatrixXd sample_conditional_hessian(const GaussianHessianLaw& law, double t,
                                                  Rng& rng) {
  return law.sample(t, rng);
}

}  // namespace grftopo
