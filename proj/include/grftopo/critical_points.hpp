#pragma once

#include <limits>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "grftopo/field_sampler.hpp"

namespace grftopo {

struct CriticalPoint {
  Eigen::VectorXd position;  // wrapped into [0, L)
  double value = 0.0;
  int index = 0;  // number of negative Hessian eigenvalues
  double residual = 0.0;  // |grad f| at the returned position
  double min_abs_eigenvalue = 0.0;
  bool degenerate = false;  // |eigenvalue| < 1e-8; excluded from index counts
};

struct CriticalSearchOptions {
  double tol = 1e-9;  // gradient residual; callers pass 1e-9 * sqrt(lambda_2)
  /// Only seeds whose cell reaches within 0.25 of this value are refined,
  /// and only points with value >= min_value are returned.
  double min_value = -std::numeric_limits<double>::infinity();
  int max_iterations = 50;
  /// Seeding grid refinement; 0 picks the smallest factor with fine spacing
  /// below `max_fine_spacing` correlation lengths, doubling it (up to 16)
  /// while an unfiltered search violates sum (-1)^i C_i = 0.
  int refine = 0;
  double max_fine_spacing = 0.125;
};

struct CriticalPointSearch {
  std::vector<CriticalPoint> points;  // sorted by value, then position
  int seeds = 0;
  int refine = 1;
  int failed_seeds = 0;  // stalled, or not converged within max_iterations
};

/// Damped Newton iteration on the exact gradient of the field's
/// trigonometric interpolant, seeded from every cell of the refined grid
/// where each gradient component changes sign and from every discrete local
/// extremum.
/// Converged points closer than h/2 (torus distance) are merged.
CriticalPointSearch find_critical_points(const GridField& field,
                                         const CriticalSearchOptions& options = {});

/// C_0..C_n: non-degenerate points with value <= u, by index.
std::vector<int> count_by_index_below(std::span<const CriticalPoint> points, int n, double u);

}  // namespace grftopo
