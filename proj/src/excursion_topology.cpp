#include "grftopo/excursion_topology.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "union_find.hpp"

namespace grftopo {

namespace {

std::vector<std::uint8_t> membership(const GridField& field, double u, Side side) {
  std::vector<std::uint8_t> in(field.size());
  for (std::size_t i = 0; i < field.size(); ++i) in[i] = on_side(field[i], u, side) ? 1 : 0;
  return in;
}

/// next[d][v]: vertex one step along +e_d.
std::vector<std::vector<std::size_t>> forward_neighbours(const GridField& field) {
  const int n = field.dimension();
  std::vector<std::vector<std::size_t>> next(n, std::vector<std::size_t>(field.size()));
  for (int d = 0; d < n; ++d)
    for (std::size_t v = 0; v < field.size(); ++v) next[d][v] = field.shifted(v, d, 1);
  return next;
}

ComponentLabels label_components(const GridField& field, const std::vector<std::uint8_t>& in) {
  const int n = field.dimension();
  detail::UnionFind uf(field.size());
  for (std::size_t v = 0; v < field.size(); ++v) {
    if (!in[v]) continue;
    for (int d = 0; d < n; ++d) {
      const std::size_t w = field.shifted(v, d, 1);
      if (in[w]) uf.unite(v, w);
    }
  }
  ComponentLabels out;
  out.labels.assign(field.size(), -1);
  std::vector<int> root_label(field.size(), -1);
  for (std::size_t v = 0; v < field.size(); ++v) {
    if (!in[v]) continue;
    const std::size_t r = uf.find(v);
    if (root_label[r] < 0) root_label[r] = out.count++;
    out.labels[v] = root_label[r];
  }
  return out;
}

/// Calls visit(lower_corner, dim) for every cell of the cubical complex of
/// the on-side vertices.
template <class Visit>
void for_each_cell(const GridField& field, const std::vector<std::uint8_t>& in, Visit&& visit) {
  const int n = field.dimension();
  const auto next = forward_neighbours(field);
  const unsigned full = 1u << n;
  for (std::size_t v = 0; v < field.size(); ++v) {
    if (!in[v]) continue;
    // corner[T] for T a subset of axes: v shifted by +1 along each axis in T.
    std::array<std::size_t, 1u << kMaxGridDim> corner{};
    corner[0] = v;
    for (unsigned t = 1; t < full; ++t) {
      const int d = std::countr_zero(t);
      corner[t] = next[d][corner[t & (t - 1)]];
    }
    for (unsigned s = 0; s < full; ++s) {
      bool all = true;
      for (unsigned t = s;; t = (t - 1) & s) {
        if (!in[corner[t]]) {
          all = false;
          break;
        }
        if (t == 0) break;
      }
      if (all) visit(v, std::popcount(s));
    }
  }
}

long euler_from_membership(const GridField& field, const std::vector<std::uint8_t>& in) {
  long chi = 0;
  for_each_cell(field, in, [&](std::size_t, int dim) { chi += dim % 2 ? -1 : 1; });
  return chi;
}

int count_complement_cavities(const GridField& field, const std::vector<std::uint8_t>& in) {
  // Complement components under (3^n - 1)-connectivity that do not wrap
  // around the torus: a component wraps when some vertex is reached with two
  // different lifts to the universal cover.
  const int n = field.dimension();
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

  std::vector<std::uint8_t> seen(field.size(), 0);
  std::vector<GridIndex> lift(field.size());
  int cavities = 0;
  std::deque<std::size_t> queue;
  for (std::size_t s = 0; s < field.size(); ++s) {
    if (in[s] || seen[s]) continue;
    bool wraps = false;
    seen[s] = 1;
    lift[s] = field.coords(s);
    queue.push_back(s);
    while (!queue.empty()) {
      const std::size_t v = queue.front();
      queue.pop_front();
      for (const auto& off : offsets) {
        std::size_t w = v;
        GridIndex target = lift[v];
        for (int d = 0; d < n; ++d) {
          if (off[d] == 0) continue;
          w = field.shifted(w, d, off[d]);
          target[d] += off[d];
        }
        if (in[w]) continue;
        if (!seen[w]) {
          seen[w] = 1;
          lift[w] = target;
          queue.push_back(w);
        } else if (lift[w] != target) {
          wraps = true;
        }
      }
    }
    if (!wraps) ++cavities;
  }
  return cavities;
}

std::vector<int> betti_from(const GridField& field, const std::vector<std::uint8_t>& in, int b0,
                            long chi) {
  const int n = field.dimension();
  if (n < 1 || n > 3) throw std::invalid_argument("Betti numbers are implemented for n <= 3");
  std::vector<int> b(n + 1, 0);
  const auto on = static_cast<std::size_t>(std::count(in.begin(), in.end(), std::uint8_t{1}));
  if (on == 0) return b;
  if (on == field.size()) {
    // b_k of the n-torus is C(n, k).
    for (int k = 0; k <= n; ++k) {
      int c = 1;
      for (int j = 0; j < k; ++j) c = c * (n - j) / (j + 1);
      b[k] = c;
    }
    return b;
  }
  b[0] = b0;
  if (n == 1) return b;
  if (n == 2) {
    b[1] = static_cast<int>(b0 - chi);
    return b;
  }
  b[2] = count_complement_cavities(field, in);
  b[1] = static_cast<int>(b0 + b[2] - chi);
  return b;
}

}  // namespace

std::string to_string(Side side) { return side == Side::excursion ? "excursion" : "sojourn"; }

Side side_from_string(const std::string& name) {
  if (name == "excursion") return Side::excursion;
  if (name == "sojourn") return Side::sojourn;
  throw std::invalid_argument("unknown side: " + name);
}

ComponentLabels component_count(const GridField& field, double u, Side side) {
  return label_components(field, membership(field, u, side));
}

long euler_characteristic(const GridField& field, double u, Side side) {
  return euler_from_membership(field, membership(field, u, side));
}

std::vector<long> component_euler(const GridField& field, double u, Side side,
                                  const ComponentLabels& labels) {
  std::vector<long> chi(labels.count, 0);
  for_each_cell(field, membership(field, u, side),
                [&](std::size_t v, int dim) { chi[labels.labels[v]] += dim % 2 ? -1 : 1; });
  return chi;
}

std::vector<PersistencePair> sublevel_persistence(const GridField& field) {
  const std::size_t total = field.size();
  const int n = field.dimension();
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return field[a] < field[b] || (field[a] == field[b] && a < b);
  });
  std::vector<std::size_t> rank(total);
  for (std::size_t r = 0; r < total; ++r) rank[order[r]] = r;

  detail::UnionFind uf(total);
  std::vector<std::uint8_t> present(total, 0);
  // Birth vertex of the component rooted at each root.
  std::vector<std::size_t> birth(total);
  std::vector<PersistencePair> pairs;
  std::vector<std::size_t> roots;

  for (std::size_t v : order) {
    roots.clear();
    for (int d = 0; d < n; ++d) {
      for (int step : {-1, 1}) {
        const std::size_t w = field.shifted(v, d, step);
        if (!present[w]) continue;
        const std::size_t r = uf.find(w);
        if (std::find(roots.begin(), roots.end(), r) == roots.end()) roots.push_back(r);
      }
    }
    present[v] = 1;
    if (roots.empty()) {
      birth[v] = v;
      continue;
    }
    const auto elder = *std::min_element(roots.begin(), roots.end(), [&](auto a, auto b) {
      return rank[birth[a]] < rank[birth[b]];
    });
    for (std::size_t r : roots) {
      if (r == elder) continue;
      pairs.push_back({field[birth[r]], field[v], birth[r]});
      uf.attach(r, elder);
    }
    uf.attach(v, elder);
  }

  std::vector<std::size_t> essential;
  for (std::size_t v = 0; v < total; ++v)
    if (uf.find(v) == v) essential.push_back(birth[v]);
  std::sort(essential.begin(), essential.end(),
            [&](std::size_t a, std::size_t b) { return rank[a] < rank[b]; });
  for (std::size_t b : essential)
    pairs.push_back({field[b], std::numeric_limits<double>::infinity(), b});
  return pairs;
}

int running_component_count(std::span<const PersistencePair> pairs, double u) {
  int count = 0;
  for (const auto& p : pairs) {
    if (p.birth <= u) ++count;
    if (p.death <= u) --count;
  }
  return count;
}

BallClassification classify_balls(const GridField& field, double u, Side side,
                                   const ComponentLabels& labels,
                                   std::span<const CriticalPoint> critical) {
  const int n = field.dimension();
  BallClassification out;
  out.critical_count.assign(labels.count, 0);
  out.is_ball.assign(labels.count, 0);
  std::vector<int> extremum(labels.count, 0);
  const int wanted_index = side == Side::excursion ? n : 0;

  for (const auto& cp : critical) {
    if (!on_side(cp.value, u, side)) continue;
    // Attribute the point to the on-side corner of its cell nearest to it.
    GridIndex lower{};
    for (int d = 0; d < n; ++d) {
      const double h = field.spacing(d);
      lower[d] = static_cast<int>(std::floor(cp.position[d] / h));
    }
    double best = std::numeric_limits<double>::infinity();
    int label = -1;
    for (unsigned t = 0; t < (1u << n); ++t) {
      GridIndex c = lower;
      double dist = 0.0;
      for (int d = 0; d < n; ++d) {
        if (t >> d & 1u) ++c[d];
        const double delta = cp.position[d] - c[d] * field.spacing(d);
        dist += delta * delta;
      }
      const std::size_t idx = field.index(c);
      if (labels.labels[idx] >= 0 && dist < best) {
        best = dist;
        label = labels.labels[idx];
      }
    }
    if (label < 0) continue;
    ++out.critical_count[label];
    if (!cp.degenerate && cp.index == wanted_index) ++extremum[label];
  }

  const auto chi = component_euler(field, u, side, labels);
  for (int c = 0; c < labels.count; ++c) {
    if (out.critical_count[c] == 1 && extremum[c] == 1 && chi[c] == 1) {
      out.is_ball[c] = 1;
      ++out.n_balls;
    }
  }
  return out;
}

int ball_component_count(const GridField& field, double u, Side side,
                         std::span<const CriticalPoint> critical) {
  const auto labels = component_count(field, u, side);
  return classify_balls(field, u, side, labels, critical).n_balls;
}

NodalCounts nodal_component_count(const GridField& field, double u, Side side,
                                  const ComponentLabels* labels,
                                  const BallClassification* balls) {
  const int n = field.dimension();
  const auto in = membership(field, u, side);
  const auto next = forward_neighbours(field);
  const std::size_t total = field.size();
  auto face = [n](std::size_t v, int d) { return v * static_cast<std::size_t>(n) + d; };
  auto boundary = [&](std::size_t v, int d) { return in[v] != in[next[d][v]]; };

  detail::UnionFind uf(total * n);
  for (std::size_t a = 0; a < total; ++a) {
    for (int b = 0; b < n; ++b) {
      for (int c = b + 1; c < n; ++c) {
        const std::size_t bv = next[b][a];
        const std::size_t cv = next[c][a];
        const std::size_t ab = face(a, b), cd = face(cv, b), ac = face(a, c), bd = face(bv, c);
        const bool fab = boundary(a, b), fcd = boundary(cv, b), fac = boundary(a, c),
                   fbd = boundary(bv, c);
        const int k = fab + fcd + fac + fbd;
        if (k == 2) {
          std::size_t first = 0;
          bool have = false;
          for (auto [f, on] : {std::pair{ab, fab}, {cd, fcd}, {ac, fac}, {bd, fbd}}) {
            if (!on) continue;
            if (have) uf.unite(first, f);
            first = f;
            have = true;
          }
        } else if (k == 4) {
          // Diagonal configuration: each on-side vertex is enclosed separately.
          if (in[a]) {
            uf.unite(ab, ac);
            uf.unite(bd, cd);
          } else {
            uf.unite(ab, bd);
            uf.unite(ac, cd);
          }
        }
      }
    }
  }

  ComponentLabels local;
  if (!labels) {
    local = label_components(field, in);
    labels = &local;
  }
  std::vector<int> nodal_label(total * n, -1);
  std::vector<int> owner;  // set component on the chosen side, per nodal component
  NodalCounts out;
  for (std::size_t v = 0; v < total; ++v) {
    for (int d = 0; d < n; ++d) {
      if (!boundary(v, d)) continue;
      const std::size_t r = uf.find(face(v, d));
      if (nodal_label[r] < 0) {
        nodal_label[r] = out.n_nodal++;
        const std::size_t inside = in[v] ? v : next[d][v];
        owner.push_back(labels->labels[inside]);
      }
    }
  }
  if (balls) {
    std::vector<int> per_component(labels->count, 0);
    for (int o : owner) ++per_component[o];
    for (int o : owner)
      if (balls->is_ball[o] && per_component[o] == 1) ++out.n_sphere;
  }
  return out;
}

std::vector<int> betti_numbers(const GridField& field, double u, Side side) {
  if (field.dimension() > 3) throw std::invalid_argument("Betti numbers are implemented for n <= 3");
  const auto in = membership(field, u, side);
  return betti_from(field, in, label_components(field, in).count, euler_from_membership(field, in));
}

LevelTopology analyze_level(const GridField& field, double u, Side side,
                            std::span<const CriticalPoint> critical) {
  const int n = field.dimension();
  const auto in = membership(field, u, side);
  LevelTopology t;
  t.u = u;
  t.side = side;
  const auto labels = label_components(field, in);
  t.n_components = labels.count;
  t.euler_characteristic = euler_from_membership(field, in);
  const auto balls = classify_balls(field, u, side, labels, critical);
  t.n_ball_components = balls.n_balls;
  const auto nodal = nodal_component_count(field, u, side, &labels, &balls);
  t.n_nodal_components = nodal.n_nodal;
  t.n_sphere_components = nodal.n_sphere;
  t.betti = betti_from(field, in, labels.count, t.euler_characteristic);
  t.crit_counts_below.assign(n + 1, 0);
  for (const auto& cp : critical) {
    if (cp.degenerate || !on_side(cp.value, u, side)) continue;
    ++t.crit_counts_below[side == Side::sojourn ? cp.index : n - cp.index];
  }
  return t;
}

nlohmann::json to_json(const LevelTopology& t) {
  return {{"u", t.u},
          {"side", to_string(t.side)},
          {"n_components", t.n_components},
          {"n_ball_components", t.n_ball_components},
          {"n_nodal_components", t.n_nodal_components},
          {"n_sphere_components", t.n_sphere_components},
          {"euler_characteristic", t.euler_characteristic},
          {"betti", t.betti},
          {"crit_counts_below", t.crit_counts_below}};
}

}  // namespace grftopo
