#include "grftopo/spin_glass.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <spdlog/spdlog.h>

#include "grftopo/parallel.hpp"
#include "grftopo/random.hpp"

namespace grftopo {

SpinGlassModel SpinGlassModel::sample(int p, int n, std::uint64_t seed) {
  if (p < 2) throw std::invalid_argument("p must be at least 2");
  if (n < 2) throw std::invalid_argument("n must be at least 2");
  const double entries = std::pow(static_cast<double>(n), p);
  if (entries > 1e7) throw std::invalid_argument("coefficient tensor exceeds 1e7 entries");
  SpinGlassModel m;
  m.p = p;
  m.n = n;
  m.seed = seed;
  m.coefficients.resize(static_cast<std::size_t>(entries));
  Rng rng = make_rng(seed);
  std::normal_distribution<double> normal;
  for (double& a : m.coefficients) a = normal(rng);
  return m;
}

double SpinGlassModel::normalization() const { return std::pow(static_cast<double>(n), -0.5 * (p - 1)); }

double SpinGlassModel::euclidean(const Eigen::VectorXd& x, Eigen::VectorXd* gradient,
                                 Eigen::MatrixXd* hessian) const {
  if (x.size() != n) throw std::invalid_argument("point dimension does not match the model");
  if (gradient) gradient->setZero(n);
  if (hessian) hessian->setZero(n, n);
  std::vector<int> idx(p, 0);
  std::vector<double> prefix(p + 1), suffix(p + 1);
  double value = 0.0;
  for (double a : coefficients) {
    prefix[0] = 1.0;
    for (int j = 0; j < p; ++j) prefix[j + 1] = prefix[j] * x(idx[j]);
    value += a * prefix[p];
    if (gradient || hessian) {
      suffix[p] = 1.0;
      for (int j = p - 1; j >= 0; --j) suffix[j] = suffix[j + 1] * x(idx[j]);
      if (gradient)
        for (int j = 0; j < p; ++j) (*gradient)(idx[j]) += a * prefix[j] * suffix[j + 1];
      if (hessian) {
        for (int j = 0; j < p; ++j) {
          double middle = 1.0;
          for (int l = j + 1; l < p; ++l) {
            const double t = a * prefix[j] * middle * suffix[l + 1];
            (*hessian)(idx[j], idx[l]) += t;
            (*hessian)(idx[l], idx[j]) += t;
            middle *= x(idx[l]);
          }
        }
      }
    }
    for (int j = p - 1; j >= 0; --j) {
      if (++idx[j] < n) break;
      idx[j] = 0;
    }
  }
  const double c = normalization();
  if (gradient) *gradient *= c;
  if (hessian) *hessian *= c;
  return c * value;
}

SphereJet eval_sphere(const SpinGlassModel& model, const Eigen::VectorXd& x) {
  const double n = model.n;
  if (std::abs(x.squaredNorm() - n) > 1e-9 * n)
    throw std::invalid_argument("point is not on the sphere of radius sqrt(n)");
  Eigen::VectorXd g;
  Eigen::MatrixXd h;
  SphereJet jet;
  jet.value = model.euclidean(x, &g, &h);
  const Eigen::MatrixXd proj =
      Eigen::MatrixXd::Identity(model.n, model.n) - x * x.transpose() / n;
  jet.gradient = proj * g;
  jet.hessian = proj * h * proj - (g.dot(x) / n) * proj;
  return jet;
}

Eigen::MatrixXd tangent_basis(const Eigen::VectorXd& x) {
  const auto n = x.size();
  Eigen::MatrixXd m(n, n);
  m.col(0) = x.normalized();
  // Complete with the coordinate axes other than the one most aligned with x.
  Eigen::Index skip = 0;
  x.cwiseAbs().maxCoeff(&skip);
  for (Eigen::Index c = 0, k = 1; c < n; ++c) {
    if (c == skip) continue;
    m.col(k++) = Eigen::VectorXd::Unit(n, c);
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
  const Eigen::MatrixXd q = qr.householderQ();
  return q.rightCols(n - 1);
}

Eigen::MatrixXd sample_goe(int n, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd m(n, n);
  const double diag = std::sqrt(1.0 / n), off = std::sqrt(0.5 / n);
  for (int i = 0; i < n; ++i) {
    m(i, i) = diag * normal(rng);
    for (int j = i + 1; j < n; ++j) m(i, j) = m(j, i) = off * normal(rng);
  }
  return m;
}

double energy_threshold(int p) { return 2.0 * std::sqrt((p - 1.0) / p); }

GoeEstimate expected_crit_goe(int p, int n, int index, double u, std::size_t n_samples,
                              std::uint64_t seed, unsigned workers) {
  if (n < 2) throw std::invalid_argument("n must be at least 2");
  if (index < 0 || index >= n) throw std::invalid_argument("index must lie in [0, n)");
  if (n_samples < 2) throw std::invalid_argument("need at least two samples");
  const double threshold = std::sqrt(p / (2.0 * (p - 1.0))) * u;
  const double rate = n * (p - 2.0) / p;
  std::vector<double> terms(n_samples, 0.0);
  parallel_for(n_samples, workers, [&](std::size_t s) {
    const Eigen::MatrixXd m = sample_goe(n, replicate_seed(seed, s));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
    const double lambda = es.eigenvalues()(index);
    if (lambda <= threshold) terms[s] = std::exp(-rate * lambda * lambda);
  });
  const double scale = std::sqrt(8.0 / p) * std::pow(p - 1.0, 0.5 * n);
  GoeEstimate est;
  double sum = 0.0, sum_sq = 0.0;
  for (double t : terms) {
    sum += t;
    sum_sq += t * t;
    if (t > 0.0) ++est.hits;
  }
  const double c = static_cast<double>(n_samples);
  const double mean = sum / c;
  est.mean = scale * mean;
  est.std_error = scale * std::sqrt(std::max(0.0, (sum_sq - c * mean * mean) / (c - 1.0)) / c);
  if (est.hits < 30)
    spdlog::warn("only {} of {} GOE samples pass the level indicator (p={}, n={}, u={})", est.hits,
                 n_samples, p, n, u);
  return est;
}

ComplexityProbe complexity_probe(int p, double u, std::span<const int> n_list,
                                 std::size_t n_samples, std::uint64_t seed, unsigned workers) {
  if (!(u < -energy_threshold(p))) throw std::invalid_argument("probe needs u < -E_inf");
  if (!std::is_sorted(n_list.begin(), n_list.end()))
    throw std::invalid_argument("dimensions must be increasing");
  ComplexityProbe out;
  for (std::size_t k = 0; k < n_list.size(); ++k) {
    const int n = n_list[k];
    const auto est = expected_crit_goe(p, n, 0, u, n_samples, replicate_seed(seed, k), workers);
    out.n.push_back(n);
    out.value.push_back(std::log(est.mean) / n);
  }
  for (std::size_t k = 1; k < out.value.size(); ++k)
    out.gap.push_back(std::abs(out.value[k] - out.value[k - 1]) / std::abs(out.value[k]));
  return out;
}

SphereSearch brute_force_crit_search(const SpinGlassModel& model, int n_starts, double tol,
                                     std::uint64_t seed) {
  const int n = model.n;
  const double radius = std::sqrt(static_cast<double>(n));
  Rng rng = make_rng(seed);
  std::normal_distribution<double> normal;
  SphereSearch out;
  for (int s = 0; s < n_starts; ++s) {
    Eigen::VectorXd x(n);
    for (int i = 0; i < n; ++i) x(i) = normal(rng);
    x *= radius / x.norm();
    bool converged = false;
    SphereJet jet;
    Eigen::MatrixXd q;
    for (int it = 0; it <= 100; ++it) {
      jet = eval_sphere(model, x);
      if (jet.gradient.norm() < tol) {
        converged = true;
        break;
      }
      q = tangent_basis(x);
      const Eigen::MatrixXd hq = q.transpose() * jet.hessian * q;
      Eigen::VectorXd eta = hq.ldlt().solve(-q.transpose() * jet.gradient);
      if (!eta.allFinite()) eta = -q.transpose() * jet.gradient;
      Eigen::VectorXd step = q * eta;
      const double len = step.norm();
      if (len > 0.5 * radius) step *= 0.5 * radius / len;
      x += step;
      x *= radius / x.norm();
    }
    if (!converged) {
      ++out.non_converged;
      continue;
    }
    const Eigen::VectorXd unit = x / radius;
    const bool duplicate = std::any_of(out.points.begin(), out.points.end(), [&](const auto& cp) {
      const double cosine = std::clamp(unit.dot(cp.position) / radius, -1.0, 1.0);
      return std::acos(cosine) < 1e-4;
    });
    if (duplicate) continue;
    q = tangent_basis(x);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(q.transpose() * jet.hessian * q,
                                                      Eigen::EigenvaluesOnly);
    out.points.push_back({x, jet.value,
                          static_cast<int>((es.eigenvalues().array() < 0.0).count()),
                          jet.gradient.norm()});
  }
  std::sort(out.points.begin(), out.points.end(),
            [](const auto& a, const auto& b) { return a.value < b.value; });
  return out;
}

}  // namespace grftopo
