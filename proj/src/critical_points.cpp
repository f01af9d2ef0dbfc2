#include "grftopo/critical_points.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace grftopo {

namespace {

struct Seed {
  Eigen::VectorXd x;
};

int auto_refinement(const GridField& field, double max_fine_spacing) {
  const auto& rep = *field.spectrum();
  const int n = field.dimension();
  double variance = rep.constant * rep.constant;
  std::array<double, kMaxGridDim> slope{};
  for (const auto& t : rep.terms) {
    const double w = 2.0 * std::norm(t.c);
    variance += w;
    for (int d = 0; d < n; ++d) slope[d] += w * t.xi[d] * t.xi[d];
  }
  if (!(variance > 0.0)) return 1;
  double worst = 0.0;
  for (int d = 0; d < n; ++d) worst = std::max(worst, field.spacing(d) * std::sqrt(slope[d] / variance));
  return std::max(1, static_cast<int>(std::ceil(worst / max_fine_spacing)));
}

std::vector<GridIndex> neighbour_offsets(int n) {
  std::vector<GridIndex> offsets;
  for (int code = 0; code < static_cast<int>(std::pow(3, n)); ++code) {
    GridIndex off{};
    int c = code;
    bool zero = true;
    for (int d = 0; d < n; ++d) {
      off[d] = c % 3 - 1;
      c /= 3;
      zero = zero && off[d] == 0;
    }
    if (!zero) offsets.push_back(off);
  }
  return offsets;
}

std::vector<Seed> collect_seeds(const GridField& field, double min_value, int refine) {
  const int n = field.dimension();
  const unsigned corners = 1u << n;
  const double margin = 0.25;
  std::vector<Seed> seeds;

  // Highest corner value of each coarse cell, for the min_value filter.
  std::vector<double> cell_top(field.size());
  for (std::size_t v = 0; v < field.size(); ++v) {
    std::array<std::size_t, 1u << kMaxGridDim> corner{};
    corner[0] = v;
    double top = field[v];
    for (unsigned t = 1; t < corners; ++t) {
      const int d = std::countr_zero(t);
      corner[t] = field.shifted(corner[t & (t - 1)], d, 1);
      top = std::max(top, field[corner[t]]);
    }
    cell_top[v] = top;
  }

  const auto grad = refined_gradient(field, refine);
  std::vector<int> fine_shape(field.shape());
  for (int& m : fine_shape) m *= refine;
  const GridField fine(fine_shape, field.period(), grad[0]);
  for (std::size_t v = 0; v < fine.size(); ++v) {
    const GridIndex fc = fine.coords(v);
    GridIndex cc{};
    for (int d = 0; d < n; ++d) cc[d] = fc[d] / refine;
    if (cell_top[field.index(cc)] < min_value - margin) continue;

    std::array<std::size_t, 1u << kMaxGridDim> corner{};
    corner[0] = v;
    for (unsigned t = 1; t < corners; ++t) corner[t] = fine.shifted(corner[t & (t - 1)], std::countr_zero(t), 1);
    bool straddles = true;
    for (int d = 0; d < n && straddles; ++d) {
      double lo = grad[d][corner[0]], hi = lo;
      for (unsigned t = 1; t < corners; ++t) {
        lo = std::min(lo, grad[d][corner[t]]);
        hi = std::max(hi, grad[d][corner[t]]);
      }
      straddles = lo <= 0.0 && hi >= 0.0;
    }
    if (straddles) {
      Eigen::VectorXd x = fine.position(v);
      for (int d = 0; d < n; ++d) x(d) += 0.5 * fine.spacing(d);
      seeds.push_back({std::move(x)});
    }
  }

  const auto offsets = neighbour_offsets(n);
  for (std::size_t v = 0; v < field.size(); ++v) {
    if (field[v] < min_value - margin) continue;
    bool is_max = true, is_min = true;
    for (const auto& off : offsets) {
      std::size_t w = v;
      for (int d = 0; d < n; ++d)
        if (off[d] != 0) w = field.shifted(w, d, off[d]);
      is_max = is_max && field[v] > field[w];
      is_min = is_min && field[v] < field[w];
      if (!is_max && !is_min) break;
    }
    if (is_max || is_min) seeds.push_back({field.position(v)});
  }
  return seeds;
}

double torus_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                      const std::vector<double>& period) {
  double s = 0.0;
  for (int d = 0; d < a.size(); ++d) {
    double delta = std::abs(a(d) - b(d));
    delta = std::min(delta, period[d] - delta);
    s += delta * delta;
  }
  return std::sqrt(s);
}


CriticalPointSearch search_at(const GridField& field, const CriticalSearchOptions& options,
                              int refine) {
  const int n = field.dimension();
  const auto& period = field.period();
  double h_min = field.spacing(0), h_max = field.spacing(0);
  for (int d = 1; d < n; ++d) {
    h_min = std::min(h_min, field.spacing(d));
    h_max = std::max(h_max, field.spacing(d));
  }

  CriticalPointSearch out;
  out.refine = refine;
  const auto seeds = collect_seeds(field, options.min_value, out.refine);
  out.seeds = static_cast<int>(seeds.size());

  const double merge_radius = 1e-6 * h_min;
  std::unordered_map<std::size_t, std::vector<std::size_t>> buckets;
  auto bucket_of = [&](const GridIndex& c) { return field.index(c); };

  for (const auto& seed : seeds) {
    Eigen::VectorXd x = seed.x;
    SpectralValue ev = eval_spectral(field, x);
    double residual = ev.gradient.norm();
    bool converged = residual < options.tol;
    for (int it = 0; it < options.max_iterations && !converged; ++it) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(ev.hessian);
      const Eigen::VectorXd lam = eig.eigenvalues();
      const double floor = 1e-12 * std::max(1.0, lam.cwiseAbs().maxCoeff());
      Eigen::VectorXd step = Eigen::VectorXd::Zero(n);
      for (int i = 0; i < n; ++i) {
        const double l = std::abs(lam(i)) < floor ? std::copysign(floor, lam(i)) : lam(i);
        step -= eig.eigenvectors().col(i).dot(ev.gradient) / l * eig.eigenvectors().col(i);
      }
      const double len = step.norm();
      if (len > h_max) step *= h_max / len;
      // Backtrack until |grad f| decreases.
      bool moved = false;
      for (double alpha = 1.0; alpha > 1e-6; alpha *= 0.5) {
        const Eigen::VectorXd trial = x + alpha * step;
        SpectralValue next = eval_spectral(field, trial);
        const double r = next.gradient.norm();
        if (r < (1.0 - 1e-4 * alpha) * residual) {
          x = trial;
          ev = std::move(next);
          residual = r;
          moved = true;
          break;
        }
      }
      if (!moved) break;
      converged = residual < options.tol;
    }
    if (!converged) {
      ++out.failed_seeds;
      continue;
    }
    if (ev.value < options.min_value) continue;

    for (int d = 0; d < n; ++d) {
      x(d) = std::fmod(x(d), period[d]);
      if (x(d) < 0.0) x(d) += period[d];
      if (x(d) >= period[d]) x(d) = 0.0;
    }

    GridIndex cell{};
    for (int d = 0; d < n; ++d) cell[d] = static_cast<int>(std::floor(x(d) / field.spacing(d)));
    bool duplicate = false;
    for (int code = 0; code < static_cast<int>(std::pow(3, n)) && !duplicate; ++code) {
      GridIndex c = cell;
      int r = code;
      for (int d = 0; d < n; ++d) {
        c[d] += r % 3 - 1;
        r /= 3;
      }
      const auto it = buckets.find(bucket_of(c));
      if (it == buckets.end()) continue;
      for (std::size_t k : it->second) {
        if (torus_distance(out.points[k].position, x, period) < merge_radius) {
          duplicate = true;
          break;
        }
      }
    }
    if (duplicate) continue;

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(ev.hessian, Eigen::EigenvaluesOnly);
    CriticalPoint cp;
    cp.position = x;
    cp.value = ev.value;
    cp.residual = ev.gradient.norm();
    cp.index = static_cast<int>((eig.eigenvalues().array() < 0.0).count());
    cp.min_abs_eigenvalue = eig.eigenvalues().cwiseAbs().minCoeff();
    cp.degenerate = cp.min_abs_eigenvalue < 1e-8;
    buckets[bucket_of(cell)].push_back(out.points.size());
    out.points.push_back(std::move(cp));
  }

  std::sort(out.points.begin(), out.points.end(), [](const CriticalPoint& a, const CriticalPoint& b) {
    if (a.value != b.value) return a.value < b.value;
    return std::lexicographical_compare(a.position.data(), a.position.data() + a.position.size(),
                                        b.position.data(), b.position.data() + b.position.size());
  });
  return out;
}

}  // namespace

CriticalPointSearch find_critical_points(const GridField& field,
                                         const CriticalSearchOptions& options) {
  if (!field.spectrum()) throw std::logic_error("critical point search needs a spectral field");
  if (options.refine > 0) return search_at(field, options, options.refine);
  int refine = auto_refinement(field, options.max_fine_spacing);
  auto out = search_at(field, options, refine);
  const bool complete = options.min_value == -std::numeric_limits<double>::infinity();
  while (complete && refine < 16) {
    int alternating = 0, degenerate = 0;
    for (const auto& p : out.points) {
      alternating += p.index % 2 == 0 ? 1 : -1;
      degenerate += p.degenerate;
    }
    if (alternating == 0 || degenerate > 0) break;
    refine *= 2;
    out = search_at(field, options, refine);
  }
  return out;
}

std::vector<int> count_by_index_below(std::span<const CriticalPoint> points, int n, double u) {
  std::vector<int> counts(n + 1, 0);
  for (const auto& p : points)
    if (!p.degenerate && p.value <= u) ++counts[p.index];
  return counts;
}

}  // namespace grftopo
