#include "grftopo/covariance_models.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace grftopo {

namespace {

double radius(std::span<const double> x) {
  double r2 = 0.0;
  for (double v : x) r2 += v * v;
  return std::sqrt(r2);
}

// Gamma(nu+1) (2/r)^nu J_nu(r), normalized so the value at 0 is 1.
double normalized_bessel(double nu, double r) {
  r = std::abs(r);
  if (r < 2.0) {
    // Power series: sum_m (-1)^m (r/2)^{2m} Gamma(nu+1) / (m! Gamma(m+nu+1)).
    const double q = -0.25 * r * r;
    double term = 1.0;
    double sum = 1.0;
    for (int m = 1; m < 60; ++m) {
      term *= q / (m * (m + nu));
      sum += term;
      if (std::abs(term) < 1e-18 * std::abs(sum)) break;
    }
    return sum;
  }
  return std::tgamma(nu + 1.0) * std::pow(2.0 / r, nu) * std::cyl_bessel_j(nu, r);
}

// Isotropic Gaussian 4th moment pattern: delta_ij delta_kl + delta_ik delta_jl + delta_il delta_jk.
FourthMoment isotropic_fourth(int n, double scale) {
  FourthMoment k(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
          const double v = (i == j && a == b) + (i == a && j == b) + (i == b && j == a);
          k(i, j, a, b) = scale * v;
        }
  return k;
}

void sample_unit_sphere(Rng& rng, std::span<double> out) {
  std::normal_distribution<double> normal;
  double r2 = 0.0;
  do {
    r2 = 0.0;
    for (double& v : out) {
      v = normal(rng);
      r2 += v * v;
    }
  } while (r2 == 0.0);
  const double inv = 1.0 / std::sqrt(r2);
  for (double& v : out) v *= inv;
}

double joint_min_eigenvalue(const Eigen::MatrixXd& lambda, const FourthMoment& kappa) {
  const int n = static_cast<int>(lambda.rows());
  const auto pairs = sym_basis_pairs(n);
  const int d = static_cast<int>(pairs.size());
  Eigen::MatrixXd joint(d + 1, d + 1);
  joint(0, 0) = 1.0;
  for (int a = 0; a < d; ++a) {
    const auto [i, j] = pairs[a];
    joint(0, a + 1) = joint(a + 1, 0) = -lambda(i, j);
    for (int b = 0; b < d; ++b) {
      const auto [k, l] = pairs[b];
      joint(a + 1, b + 1) = kappa(i, j, k, l);
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(joint, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0) / std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
}

}  // namespace

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::bargmann_fock: return "bargmann_fock";
    case ModelKind::random_waves: return "random_waves";
    case ModelKind::full_band_random_waves: return "full_band_random_waves";
    case ModelKind::custom: return "custom";
  }
  return "custom";
}

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "bargmann_fock") return ModelKind::bargmann_fock;
  if (name == "random_waves") return ModelKind::random_waves;
  if (name == "full_band_random_waves") return ModelKind::full_band_random_waves;
  if (name == "custom") return ModelKind::custom;
  throw std::invalid_argument("unknown model kind: " + name);
}

double FourthMoment::asymmetry() const {
  double worst = 0.0;
  for (int i = 0; i < n_; ++i)
    for (int j = 0; j < n_; ++j)
      for (int k = 0; k < n_; ++k)
        for (int l = 0; l < n_; ++l) {
          std::array<int, 4> idx{i, j, k, l};
          const double ref = (*this)(i, j, k, l);
          std::sort(idx.begin(), idx.end());
          do {
            worst = std::max(worst, std::abs((*this)(idx[0], idx[1], idx[2], idx[3]) - ref));
          } while (std::next_permutation(idx.begin(), idx.end()));
        }
  return worst;
}

double random_wave_covariance(int n, double r) {
  if (n < 2) throw std::invalid_argument("random waves need n >= 2");
  return normalized_bessel(0.5 * (n - 2), r);
}

double full_band_covariance(int n, double r) {
  if (n < 1) throw std::invalid_argument("full band random waves need n >= 1");
  return normalized_bessel(0.5 * n, r);
}

double SpectralModel::sqrt_det_lambda() const { return std::sqrt(second_moment.determinant()); }

double SpectralModel::decay_radius(double eps) const {
  const double lam = second_moment.diagonal().maxCoeff();
  const double scale = 1.0 / std::sqrt(lam);
  const double step = 0.02 * scale;
  const double r_max = 4000.0 * scale;
  double last = 0.0;
  std::vector<double> x(dimension, 0.0);
  for (int axis = 0; axis < dimension; ++axis) {
    std::fill(x.begin(), x.end(), 0.0);
    for (double r = 0.0; r <= r_max; r += step) {
      x[axis] = r;
      if (std::abs(covariance(x)) >= eps) last = std::max(last, r);
    }
  }
  if (last >= 0.95 * r_max) return std::numeric_limits<double>::infinity();
  return last + step;
}

nlohmann::json SpectralModel::descriptor() const {
  nlohmann::json lambda = nlohmann::json::array();
  for (int i = 0; i < dimension; ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < dimension; ++j) row.push_back(second_moment(i, j));
    lambda.push_back(row);
  }
  return {{"name", name},
          {"n", dimension},
          {"params", params},
          {"lambda_matrix", lambda},
          {"kappa_tensor", fourth_moment.data()}};
}

SpectralModel make_model(ModelKind kind, int n) {
  if (n < 1) throw std::invalid_argument("model dimension must be >= 1");
  SpectralModel m;
  m.kind = kind;
  m.name = to_string(kind);
  m.dimension = n;
  switch (kind) {
    case ModelKind::bargmann_fock:
      m.covariance = [](std::span<const double> x) {
        double r2 = 0.0;
        for (double v : x) r2 += v * v;
        return std::exp(-0.5 * r2);
      };
      m.spectral_sampler = [](Rng& rng, std::span<double> out) {
        std::normal_distribution<double> normal;
        for (double& v : out) v = normal(rng);
      };
      m.second_moment = Eigen::MatrixXd::Identity(n, n);
      m.fourth_moment = isotropic_fourth(n, 1.0);
      break;
    case ModelKind::random_waves:
      // n = 1 is the pure cosine: (f, f'') are linearly dependent.
      if (n < 2) throw std::invalid_argument("random waves in dimension 1 are degenerate");
      m.covariance = [n](std::span<const double> x) { return random_wave_covariance(n, radius(x)); };
      m.spectral_sampler = sample_unit_sphere;
      m.second_moment = Eigen::MatrixXd::Identity(n, n) / n;
      m.fourth_moment = isotropic_fourth(n, 1.0 / (n * (n + 2.0)));
      break;
    case ModelKind::full_band_random_waves:
      m.covariance = [n](std::span<const double> x) { return full_band_covariance(n, radius(x)); };
      m.spectral_sampler = [n](Rng& rng, std::span<double> out) {
        sample_unit_sphere(rng, out);
        std::uniform_real_distribution<double> unif;
        const double r = std::pow(unif(rng), 1.0 / n);
        for (double& v : out) v *= r;
      };
      m.second_moment = Eigen::MatrixXd::Identity(n, n) / (n + 2.0);
      m.fourth_moment = isotropic_fourth(n, 1.0 / ((n + 2.0) * (n + 4.0)));
      break;
    case ModelKind::custom:
      throw std::invalid_argument("custom models are built with make_custom_model");
  }
  return m;
}

CovarianceJets finite_difference_jets(const CovarianceFn& covariance, int n, double step) {
  std::vector<double> buf(n);
  auto along = [&](const Eigen::VectorXd& w, double t) {
    for (int i = 0; i < n; ++i) buf[i] = t * w(i);
    return covariance(buf);
  };
  double worst_gap = 0.0;
  // Richardson table for an even function: error expansion in h^2.
  auto richardson = [&](auto&& estimate) {
    std::array<double, 3> level{};
    double h = step;
    for (double& v : level) {
      v = estimate(h);
      h *= 0.5;
    }
    const double r1a = (4.0 * level[1] - level[0]) / 3.0;
    const double r1b = (4.0 * level[2] - level[1]) / 3.0;
    const double r2 = (16.0 * r1b - r1a) / 15.0;
    const double gap = std::abs(r2 - r1b) / std::max(1.0, std::abs(r2));
    worst_gap = std::max(worst_gap, std::isfinite(gap) ? gap : std::numeric_limits<double>::infinity());
    return r2;
  };
  // Directional derivatives along w, taken on the unit vector and rescaled.
  auto second = [&](const Eigen::VectorXd& w) {
    const double len = w.norm();
    const Eigen::VectorXd e = w / len;
    const double k0 = along(e, 0.0);
    return len * len *
           richardson([&](double h) { return (along(e, h) - 2.0 * k0 + along(e, -h)) / (h * h); });
  };
  auto fourth = [&](const Eigen::VectorXd& w) {
    const double len = w.norm();
    const Eigen::VectorXd e = w / len;
    const double k0 = along(e, 0.0);
    return std::pow(len, 4) * richardson([&](double h) {
             return (along(e, 2 * h) - 4.0 * along(e, h) + 6.0 * k0 - 4.0 * along(e, -h) +
                     along(e, -2 * h)) /
                    (h * h * h * h);
           });
  };

  CovarianceJets jets;
  jets.second_moment = Eigen::MatrixXd::Zero(n, n);
  auto unit = [n](int i) { return Eigen::VectorXd::Unit(n, i); };
  for (int i = 0; i < n; ++i) jets.second_moment(i, i) = -second(unit(i));
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const double q = -second(unit(i) + unit(j));
      jets.second_moment(i, j) = jets.second_moment(j, i) =
          0.5 * (q - jets.second_moment(i, i) - jets.second_moment(j, j));
    }

  // Polarization: T(a,b,c,d) = 1/(2^4 4!) sum_eps eps1 eps2 eps3 eps4 q(sum eps_i v_i).
  jets.fourth_moment = FourthMoment(n);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j)
      for (int k = j; k < n; ++k)
        for (int l = k; l < n; ++l) {
          double acc = 0.0;
          for (int mask = 0; mask < 16; ++mask) {
            const std::array<int, 4> idx{i, j, k, l};
            Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
            int sign = 1;
            for (int b = 0; b < 4; ++b) {
              const int e = (mask >> b) & 1 ? -1 : 1;
              sign *= e;
              w(idx[b]) += e;
            }
            if (w.squaredNorm() == 0.0) continue;
            acc += sign * fourth(w);
          }
          const double v = acc / (16.0 * 24.0);
          std::array<int, 4> idx{i, j, k, l};
          do {
            jets.fourth_moment(idx[0], idx[1], idx[2], idx[3]) = v;
          } while (std::next_permutation(idx.begin(), idx.end()));
        }
  jets.max_richardson_gap = worst_gap;
  return jets;
}

SpectralModel make_custom_model(int n, std::string name, CovarianceFn covariance,
                                SpectralSamplerFn sampler, nlohmann::json params) {
  if (n < 1) throw std::invalid_argument("model dimension must be >= 1");
  const std::vector<double> origin(n, 0.0);
  const double k0 = covariance(origin);
  if (!(std::abs(k0 - 1.0) <= 1e-9))
    throw std::invalid_argument("custom spectrum must have unit total mass (k(0) = 1)");
  auto jets = finite_difference_jets(covariance, n);
  bool finite = std::isfinite(jets.max_richardson_gap);
  for (double v : jets.fourth_moment.data()) finite = finite && std::isfinite(v);
  if (!finite || jets.max_richardson_gap > 1e-4)
    throw std::invalid_argument("custom spectrum has non-finite fourth moments");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jets.second_moment, Eigen::EigenvaluesOnly);
  if (es.eigenvalues()(0) <= 0.0)
    throw std::invalid_argument("second spectral moment is not positive definite");
  if (joint_min_eigenvalue(jets.second_moment, jets.fourth_moment) < 1e-6)
    throw std::invalid_argument("degenerate spectrum: (f, Hess f) are linearly dependent");

  SpectralModel m;
  m.kind = ModelKind::custom;
  m.name = std::move(name);
  m.dimension = n;
  m.covariance = std::move(covariance);
  m.spectral_sampler = std::move(sampler);
  m.second_moment = std::move(jets.second_moment);
  m.fourth_moment = std::move(jets.fourth_moment);
  m.params = std::move(params);
  return m;
}

int sym_dimension(int n) { return n * (n + 1) / 2; }

std::vector<std::pair<int, int>> sym_basis_pairs(int n) {
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(sym_dimension(n));
  for (int i = 0; i < n; ++i) pairs.emplace_back(i, i);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
  return pairs;
}

Eigen::VectorXd to_sym_coords(const Eigen::MatrixXd& m) {
  const int n = static_cast<int>(m.rows());
  const auto pairs = sym_basis_pairs(n);
  Eigen::VectorXd v(pairs.size());
  for (std::size_t a = 0; a < pairs.size(); ++a) {
    const auto [i, j] = pairs[a];
    v(a) = i == j ? m(i, i) : std::numbers::sqrt2 * 0.5 * (m(i, j) + m(j, i));
  }
  return v;
}

Eigen::MatrixXd from_sym_coords(const Eigen::VectorXd& v, int n) {
  const auto pairs = sym_basis_pairs(n);
  Eigen::MatrixXd m(n, n);
  for (std::size_t a = 0; a < pairs.size(); ++a) {
    const auto [i, j] = pairs[a];
    if (i == j) {
      m(i, i) = v(a);
    } else {
      m(i, j) = m(j, i) = v(a) / std::numbers::sqrt2;
    }
  }
  return m;
}

GaussianHessianLaw::GaussianHessianLaw(int n, Eigen::MatrixXd mean_slope,
                                       Eigen::MatrixXd covariance)
    : n_(n), mean_slope_(std::move(mean_slope)), covariance_(std::move(covariance)) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(covariance_);
  const Eigen::VectorXd ev = es.eigenvalues();
  if (ev(0) < -1e-10)
    throw std::domain_error("conditional Hessian covariance is not positive semidefinite");
  const Eigen::VectorXd clipped = ev.cwiseMax(0.0);
  factor_ = es.eigenvectors() * clipped.cwiseSqrt().asDiagonal();

  HessianEnvelope& env = envelope_;
  env.sigma = ev.cwiseAbs().maxCoeff();
  env.rho = std::sqrt(std::abs(clipped.prod()));
  env.s = 0.0;
  env.theta = 1.0 / std::max(env.s * env.s + env.sigma, (env.s + 1.0) * (env.s + 1.0));
  env.u0 = (1.0 + env.s) * std::max(1.0, std::sqrt(env.sigma));
  env.u1 = std::max(env.u0, (static_cast<double>(n) * n + 2.0) / env.theta);
}

Eigen::MatrixXd GaussianHessianLaw::mean_at(double t) const {
  return t * mean_slope_;
}

double GaussianHessianLaw::entry_covariance(int i, int j, int k, int l) const {
  const auto pairs = sym_basis_pairs(n_);
  auto locate = [&](int a, int b) {
    if (a > b) std::swap(a, b);
    const auto it = std::find(pairs.begin(), pairs.end(), std::pair{a, b});
    return static_cast<int>(it - pairs.begin());
  };
  const double sa = i == j ? 1.0 : std::numbers::sqrt2;
  const double sb = k == l ? 1.0 : std::numbers::sqrt2;
  return covariance_(locate(i, j), locate(k, l)) / (sa * sb);
}

Eigen::MatrixXd GaussianHessianLaw::sample(double t, Rng& rng) const {
  std::normal_distribution<double> normal;
  Eigen::VectorXd z(factor_.cols());
  for (Eigen::Index a = 0; a < z.size(); ++a) z(a) = normal(rng);
  return mean_at(t) + from_sym_coords(factor_ * z, n_);
}

GaussianHessianLaw conditional_hessian_law(const SpectralModel& model) {
  return conditional_hessian_law(model, model.second_moment);
}

GaussianHessianLaw conditional_hessian_law(const SpectralModel& model,
                                           const Eigen::MatrixXd& domain_metric) {
  const int n = model.dimension;
  if (domain_metric.rows() != n || domain_metric.cols() != n)
    throw std::invalid_argument("metric dimension mismatch");
  // Coordinates rescaled by metric^{-1/2}: H' = A H A with A symmetric.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(domain_metric);
  const Eigen::MatrixXd a =
      es.eigenvectors() * es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
      es.eigenvectors().transpose();

  FourthMoment kappa(n);
  const auto& k = model.fourth_moment;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int p = 0; p < n; ++p)
        for (int q = 0; q < n; ++q) {
          double acc = 0.0;
          for (int b0 = 0; b0 < n; ++b0)
            for (int b1 = 0; b1 < n; ++b1)
              for (int b2 = 0; b2 < n; ++b2)
                for (int b3 = 0; b3 < n; ++b3)
                  acc += a(i, b0) * a(j, b1) * a(p, b2) * a(q, b3) * k(b0, b1, b2, b3);
          kappa(i, j, p, q) = acc;
        }
  // Cov(f, H') = -A Lambda A.
  const Eigen::MatrixXd cross = -(a * model.second_moment * a);

  const auto pairs = sym_basis_pairs(n);
  const int d = static_cast<int>(pairs.size());
  Eigen::MatrixXd cov(d, d);
  for (int x = 0; x < d; ++x) {
    const auto [i, j] = pairs[x];
    const double sx = i == j ? 1.0 : std::numbers::sqrt2;
    for (int y = 0; y < d; ++y) {
      const auto [p, q] = pairs[y];
      const double sy = p == q ? 1.0 : std::numbers::sqrt2;
      cov(x, y) = sx * sy * (kappa(i, j, p, q) - cross(i, j) * cross(p, q));
    }
  }
  return GaussianHessianLaw(n, cross, 0.5 * (cov + cov.transpose()));
}

}  // namespace grftopo
