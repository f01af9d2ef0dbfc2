#pragma once

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "grftopo/critical_points.hpp"
#include "grftopo/field_sampler.hpp"

namespace grftopo {

/// excursion: {f >= u}; sojourn: {f <= u}.
enum class Side { excursion, sojourn };

std::string to_string(Side side);
Side side_from_string(const std::string& name);

inline bool on_side(double value, double u, Side side) {
  return side == Side::excursion ? value >= u : value <= u;
}

struct ComponentLabels {
  int count = 0;
  std::vector<int> labels;  // -1 off the set; otherwise 0..count-1 in order of first vertex
};

/// Connected components of the thresholded vertex set under face
/// (2n-neighbour) connectivity with periodic wrap.
ComponentLabels component_count(const GridField& field, double u, Side side);

/// Euler characteristic of the cubical complex of all cells whose vertices
/// lie on the chosen side, with torus identifications.
long euler_characteristic(const GridField& field, double u, Side side);

/// Euler characteristic of each labelled component; sums to the total.
std::vector<long> component_euler(const GridField& field, double u, Side side,
                                  const ComponentLabels& labels);

struct PersistencePair {
  double birth = 0.0;
  double death = 0.0;  // +inf for components that never merge
  std::size_t birth_vertex = 0;
};

/// 0-dimensional persistence of the sublevel filtration (elder rule,
/// vertex ties broken by index). Pairs are in order of death.
std::vector<PersistencePair> sublevel_persistence(const GridField& field);

/// #(births <= u) - #(deaths <= u).
int running_component_count(std::span<const PersistencePair> pairs, double u);

struct BallClassification {
  std::vector<int> critical_count;  // per component
  std::vector<char> is_ball;        // per component
  int n_balls = 0;
};

/// A component is a ball when it holds exactly one critical point of the
/// interpolant (a maximum on the excursion side, a minimum on the sojourn
/// side) and its Euler characteristic is 1. `critical` must contain every
/// critical point on the chosen side of u.
BallClassification classify_balls(const GridField& field, double u, Side side,
                                  const ComponentLabels& labels,
                                  std::span<const CriticalPoint> critical);

int ball_component_count(const GridField& field, double u, Side side,
                         std::span<const CriticalPoint> critical);

struct NodalCounts {
  int n_nodal = 0;
  int n_sphere = 0;
};

/// Components of the discrete level set: faces separating an on-side vertex
/// from an off-side one, linked through shared codimension-2 faces. With a
/// ball classification of the same side, a nodal component is a sphere when
/// it is the only boundary component of a ball.
NodalCounts nodal_component_count(const GridField& field, double u, Side side = Side::excursion,
                                  const ComponentLabels* labels = nullptr,
                                  const BallClassification* balls = nullptr);

/// b_0..b_n. Supports n = 1, 2, 3.
std::vector<int> betti_numbers(const GridField& field, double u, Side side);

struct LevelTopology {
  double u = 0.0;
  Side side = Side::excursion;
  int n_components = 0;
  int n_ball_components = 0;
  int n_nodal_components = 0;
  int n_sphere_components = 0;
  long euler_characteristic = 0;
  std::vector<int> betti;
  /// Non-degenerate critical points in the set, indexed so that the
  /// identity (f, excursion, u) == (-f, sojourn, -u) holds: on the sojourn
  /// side by Morse index, on the excursion side by index of -f.
  std::vector<int> crit_counts_below;
};

/// Everything above for one level. `critical` as for classify_balls.
LevelTopology analyze_level(const GridField& field, double u, Side side,
                            std::span<const CriticalPoint> critical);

nlohmann::json to_json(const LevelTopology& t);

}  // namespace grftopo
