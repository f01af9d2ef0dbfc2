#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace grftopo {

/// Spherical p-spin Hamiltonian on the sphere of radius sqrt(n):
/// f(x) = n^{-(p-1)/2} sum a_{i_1..i_p} x_{i_1} ... x_{i_p}, so that
/// E f(x) f(y) = n^{1-p} <x, y>^p.
struct SpinGlassModel {
  int p = 2;
  int n = 2;
  std::uint64_t seed = 0;
  std::vector<double> coefficients;  // n^p entries, first index slowest

  /// Draws standard Gaussian coefficients. Rejects n^p > 1e7.
  static SpinGlassModel sample(int p, int n, std::uint64_t seed);

  double normalization() const;
  /// Euclidean value, gradient and Hessian of the polynomial.
  double euclidean(const Eigen::VectorXd& x, Eigen::VectorXd* gradient = nullptr,
                   Eigen::MatrixXd* hessian = nullptr) const;
};

struct SphereJet {
  double value = 0.0;
  Eigen::VectorXd gradient;  // tangential
  Eigen::MatrixXd hessian;   // P (D^2 f) P - (<grad f, x> / n) P
};

/// Requires | |x|^2 - n | < 1e-9 (relative to n).
SphereJet eval_sphere(const SpinGlassModel& model, const Eigen::VectorXd& x);

/// Orthonormal basis of the tangent space at x, as columns.
Eigen::MatrixXd tangent_basis(const Eigen::VectorXd& x);

/// GOE_n: off-diagonal variance 1/(2n), diagonal 1/n; spectrum edge at +-sqrt(2).
Eigen::MatrixXd sample_goe(int n, std::uint64_t seed);

struct GoeEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t hits = 0;  // samples passing the level indicator
};

/// E C_i of critical points of index i with value <= n u, as
/// sqrt(8/p) (p-1)^{n/2} E[exp(-n (p-2)/p lambda_i^2) 1{lambda_i <= sqrt(p/(2(p-1))) u}]
/// over GOE_n eigenvalues in ascending order. Warns below 30 hits.
GoeEstimate expected_crit_goe(int p, int n, int index, double u, std::size_t n_samples,
                              std::uint64_t seed, unsigned workers = 1);

/// Ground-state energy threshold 2 sqrt((p-1)/p).
double energy_threshold(int p);

struct ComplexityProbe {
  std::vector<int> n;
  std::vector<double> value;  // (1/n) log E C_0
  std::vector<double> gap;    // |value[k+1] - value[k]| / |value[k+1]|
};

ComplexityProbe complexity_probe(int p, double u, std::span<const int> n_list,
                                 std::size_t n_samples, std::uint64_t seed, unsigned workers = 1);

struct SphereCriticalPoint {
  Eigen::VectorXd position;
  double value = 0.0;
  int index = 0;  // negative Riemannian Hessian eigenvalues
  double residual = 0.0;
};

struct SphereSearch {
  std::vector<SphereCriticalPoint> points;  // sorted by value
  int non_converged = 0;
};

/// Riemannian Newton from uniformly random starts; points closer than
/// 1e-4 in angle are merged.
SphereSearch brute_force_crit_search(const SpinGlassModel& model, int n_starts, double tol,
                                     std::uint64_t seed);

}  // namespace grftopo
