#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <queue>
#include <random>

#include "grftopo/critical_points.hpp"
#include "grftopo/excursion_topology.hpp"

using namespace grftopo;

namespace {

GridField grid2(int m, double side, const std::function<double(double, double)>& fn) {
  std::vector<double> values(static_cast<std::size_t>(m) * m);
  const double h = side / m;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) values[static_cast<std::size_t>(i) * m + j] = fn(i * h, j * h);
  return field_from_values({m, m}, {side, side}, std::move(values));
}

GridField grid3(int m, const std::function<double(double, double, double)>& fn) {
  std::vector<double> values(static_cast<std::size_t>(m) * m * m);
  std::size_t k = 0;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      for (int l = 0; l < m; ++l) values[k++] = fn(i, j, l);
  return GridField({m, m, m}, {double(m), double(m), double(m)}, std::move(values));
}

double bump(double x, double y, double cx, double cy, double s) {
  return std::exp(-((x - cx) * (x - cx) + (y - cy) * (y - cy)) / (2 * s * s));
}

GridField random_field(std::uint64_t seed, int m = 64, double side = 32.0) {
  return sample_torus(make_model(ModelKind::bargmann_fock, 2), {side, side}, {m, m}, seed);
}

// Breadth-first flood fill with face connectivity and wrap.
std::vector<int> flood_fill(const GridField& f, double u, Side side, int& count) {
  std::vector<int> label(f.size(), -1);
  count = 0;
  for (std::size_t s = 0; s < f.size(); ++s) {
    if (label[s] >= 0 || !on_side(f[s], u, side)) continue;
    std::queue<std::size_t> q;
    q.push(s);
    label[s] = count;
    while (!q.empty()) {
      const auto v = q.front();
      q.pop();
      for (int d = 0; d < f.dimension(); ++d)
        for (int step : {-1, 1}) {
          const auto w = f.shifted(v, d, step);
          if (label[w] < 0 && on_side(f[w], u, side)) {
            label[w] = count;
            q.push(w);
          }
        }
    }
    ++count;
  }
  return label;
}

// Marching squares on a 2-torus: nodes are crossing grid edges, segments join
// crossings within a cell; in saddle cells each on-side corner is cut off.
int marching_squares_components(const GridField& f, double u, Side side) {
  const int m0 = f.shape()[0], m1 = f.shape()[1];
  auto in = [&](int i, int j) {
    return on_side(f[f.index({(i + m0) % m0, (j + m1) % m1, 0})], u, side);
  };
  // edge ids: horizontal (i,j)-(i,j+1) -> 2*(i*m1+j), vertical (i,j)-(i+1,j) -> 2*(i*m1+j)+1
  auto hid = [&](int i, int j) { return 2 * (((i + m0) % m0) * m1 + (j + m1) % m1); };
  auto vid = [&](int i, int j) { return hid(i, j) + 1; };
  std::vector<int> parent(2 * m0 * m1);
  for (std::size_t k = 0; k < parent.size(); ++k) parent[k] = static_cast<int>(k);
  std::function<int(int)> find = [&](int x) { return parent[x] == x ? x : parent[x] = find(parent[x]); };
  auto join = [&](int a, int b) { parent[find(a)] = find(b); };
  std::vector<char> crossing(parent.size(), 0);
  for (int i = 0; i < m0; ++i)
    for (int j = 0; j < m1; ++j) {
      crossing[hid(i, j)] = in(i, j) != in(i, j + 1);
      crossing[vid(i, j)] = in(i, j) != in(i + 1, j);
    }
  for (int i = 0; i < m0; ++i)
    for (int j = 0; j < m1; ++j) {
      // corners c0=(i,j) c1=(i,j+1) c2=(i+1,j+1) c3=(i+1,j); edges e0=c0c1 e1=c1c2 e2=c3c2 e3=c0c3
      const int e[4] = {hid(i, j), vid(i, j + 1), hid(i + 1, j), vid(i, j)};
      std::vector<int> cross;
      for (int k = 0; k < 4; ++k)
        if (crossing[e[k]]) cross.push_back(e[k]);
      if (cross.size() == 2) {
        join(cross[0], cross[1]);
      } else if (cross.size() == 4) {
        const bool c[4] = {in(i, j), in(i, j + 1), in(i + 1, j + 1), in(i + 1, j)};
        // corner k is incident to edges e[k] and e[(k+3)%4]
        for (int k = 0; k < 4; ++k)
          if (c[k]) join(e[k], e[(k + 3) % 4]);
      }
    }
  int count = 0;
  for (std::size_t k = 0; k < parent.size(); ++k)
    if (crossing[k] && find(static_cast<int>(k)) == static_cast<int>(k)) ++count;
  return count;
}

std::vector<CriticalPoint> critical(const GridField& f) { return find_critical_points(f).points; }

}  // namespace

TEST_SUITE("excursion_topology") {

TEST_CASE("single bump") {
  const auto f = grid2(64, 64.0, [](double x, double y) { return bump(x, y, 32.3, 31.7, 4.0); });
  const auto crit = critical(f);
  const auto t = analyze_level(f, 0.5, Side::excursion, crit);
  CHECK(t.n_components == 1);
  CHECK(t.euler_characteristic == 1);
  CHECK(t.n_ball_components == 1);
  CHECK(t.n_nodal_components == 1);
  CHECK(t.n_sphere_components == 1);
  CHECK(t.betti == std::vector<int>{1, 0, 0});
  CHECK(euler_characteristic(f, -1.0, Side::excursion) == 0);
  CHECK(component_count(f, -1.0, Side::excursion).count == 1);
}

TEST_CASE("two disjoint bumps") {
  const auto f = grid2(64, 64.0, [](double x, double y) {
    return bump(x, y, 16.2, 16.1, 3.0) + bump(x, y, 45.7, 44.9, 3.0);
  });
  CHECK(component_count(f, 0.5, Side::excursion).count == 2);
  CHECK(ball_component_count(f, 0.5, Side::excursion, critical(f)) == 2);
}

TEST_CASE("annulus") {
  const auto f = grid2(32, 32.0, [](double x, double y) {
    const double r = std::hypot(x - 16.1, y - 15.9);
    return std::exp(-(r - 9.0) * (r - 9.0) / 8.0);
  });
  const auto crit = critical(f);
  const auto t = analyze_level(f, 0.5, Side::excursion, crit);
  CHECK(t.n_components == 1);
  CHECK(t.euler_characteristic == 0);
  CHECK(t.betti == std::vector<int>{1, 1, 0});
  CHECK(t.n_nodal_components == 2);
  CHECK(t.n_sphere_components == 0);
  CHECK(t.n_ball_components == 0);
}

TEST_CASE("dumbbell") {
  const auto f = grid2(64, 64.0, [](double x, double y) {
    return bump(x, y, 24.1, 32.2, 5.0) + bump(x, y, 40.1, 32.2, 5.0);
  });
  const auto crit = critical(f);
  const auto low = component_count(f, 0.4, Side::excursion);
  CHECK(low.count == 1);
  const auto cls = classify_balls(f, 0.4, Side::excursion, low, crit);
  CHECK(cls.critical_count == std::vector<int>{3});
  CHECK(cls.n_balls == 0);
  CHECK(component_count(f, 0.8, Side::excursion).count == 2);
  CHECK(ball_component_count(f, 0.8, Side::excursion, crit) == 2);
}

TEST_CASE("labels match a flood-fill oracle") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto f = random_field(seed);
    for (double u : {-1.5, -0.3, 0.0, 0.7, 2.0}) {
      for (Side side : {Side::excursion, Side::sojourn}) {
        int count = 0;
        const auto oracle = flood_fill(f, u, side, count);
        const auto labels = component_count(f, u, side);
        CHECK(labels.count == count);
        CHECK(labels.labels == oracle);
      }
    }
  }
}

TEST_CASE("nodal counts match marching squares") {
  for (std::uint64_t seed = 100; seed < 110; ++seed) {
    const auto f = random_field(seed);
    for (double u : {-1.0, 0.0, 0.5, 1.5}) {
      CHECK(nodal_component_count(f, u).n_nodal == marching_squares_components(f, u, Side::excursion));
      CHECK(nodal_component_count(f, u, Side::sojourn).n_nodal ==
            marching_squares_components(f, u, Side::sojourn));
    }
  }
}

TEST_CASE("sublevel persistence") {
  const double two_pi = 2 * std::numbers::pi;
  const auto cc = grid2(64, 64.0, [&](double x, double y) {
    return std::cos(two_pi * x / 64.0) * std::cos(two_pi * y / 64.0);
  });
  const auto pairs = sublevel_persistence(cc);
  CHECK(pairs.size() == 2);
  for (const auto& p : pairs) CHECK(p.birth == doctest::Approx(-1.0));

  std::vector<double> ramp(64);
  for (int i = 0; i < 64; ++i) ramp[i] = i;
  CHECK(sublevel_persistence(GridField({64}, {64.0}, ramp)).size() == 1);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> level(-2.5, 2.5);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto f = random_field(seed + 40);
    const auto pp = sublevel_persistence(f);
    CHECK(std::is_sorted(pp.begin(), pp.end(),
                         [](const auto& a, const auto& b) { return a.death < b.death; }));
    for (int k = 0; k < 20; ++k) {
      const double u = level(rng);
      CHECK(running_component_count(pp, u) == component_count(f, u, Side::sojourn).count);
    }
  }
}

TEST_CASE("solid ball with a cavity") {
  const auto f = grid3(32, [](int i, int j, int l) {
    const double r = std::sqrt((i - 15.7) * (i - 15.7) + (j - 16.2) * (j - 16.2) + (l - 15.9) * (l - 15.9));
    return 3.0 - std::abs(r - 8.0);
  });
  CHECK(euler_characteristic(f, 0.0, Side::excursion) == 2);
  CHECK(betti_numbers(f, 0.0, Side::excursion) == std::vector<int>{1, 0, 1, 0});
  // the complement of the shell: the cavity is a ball, the outside wraps the torus
  CHECK(betti_numbers(f, 0.0, Side::sojourn)[0] == 2);
  CHECK(betti_numbers(f, -100.0, Side::excursion) == std::vector<int>{1, 3, 3, 1});
}

TEST_CASE("euler characteristic is additive over components") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto f = random_field(seed + 7);
    for (double u : {-1.0, 0.0, 0.4, 1.2}) {
      for (Side side : {Side::excursion, Side::sojourn}) {
        const auto labels = component_count(f, u, side);
        const auto parts = component_euler(f, u, side, labels);
        long sum = 0;
        for (long c : parts) sum += c;
        CHECK(sum == euler_characteristic(f, u, side));
      }
    }
  }
}

TEST_CASE("negation identity is exact") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto f = random_field(seed + 60);
    const auto g = f.negated();
    const auto cf = critical(f);
    const auto cg = critical(g);
    for (double u : {-1.3, 0.2, 1.1, 2.4}) {
      const auto a = analyze_level(f, u, Side::excursion, cf);
      const auto b = analyze_level(g, -u, Side::sojourn, cg);
      CHECK(a.n_components == b.n_components);
      CHECK(a.n_ball_components == b.n_ball_components);
      CHECK(a.n_nodal_components == b.n_nodal_components);
      CHECK(a.n_sphere_components == b.n_sphere_components);
      CHECK(a.euler_characteristic == b.euler_characteristic);
      CHECK(a.betti == b.betti);
      CHECK(a.crit_counts_below == b.crit_counts_below);
    }
  }
}

TEST_CASE("observables are constant between vertex values") {
  const auto f = random_field(77, 64, 32.0);
  std::vector<double> v(f.values().begin(), f.values().end());
  std::sort(v.begin(), v.end());
  for (std::size_t k = 0; k + 1 < v.size(); k += 13) {
    if (!(v[k] < v[k + 1])) continue;
    const double a = v[k] + 0.25 * (v[k + 1] - v[k]);
    const double b = v[k] + 0.75 * (v[k + 1] - v[k]);
    CHECK(component_count(f, a, Side::excursion).count == component_count(f, b, Side::excursion).count);
    CHECK(euler_characteristic(f, a, Side::sojourn) == euler_characteristic(f, b, Side::sojourn));
    CHECK(nodal_component_count(f, a).n_nodal == nodal_component_count(f, b).n_nodal);
  }
}

TEST_CASE("level invariants on random fields") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto f = random_field(seed + 200);
    const auto crit = critical(f);
    for (double u : {-2.0, -0.5, 0.0, 0.8, 1.6, 2.5}) {
      for (Side side : {Side::excursion, Side::sojourn}) {
        const auto t = analyze_level(f, u, side, crit);
        CHECK(t.n_ball_components <= t.n_components);
        CHECK(t.n_sphere_components <= t.n_nodal_components);
        CHECK(t.betti[0] == t.n_components);
        CHECK(t.euler_characteristic == t.betti[0] - t.betti[1] + t.betti[2]);
      }
    }
  }
  const auto f = random_field(5);
  CHECK(betti_numbers(f, 10.0, Side::excursion) == std::vector<int>{0, 0, 0});
  CHECK(betti_numbers(f, -10.0, Side::excursion) == std::vector<int>{1, 2, 1});
  CHECK(side_from_string(to_string(Side::sojourn)) == Side::sojourn);
  CHECK_THROWS(side_from_string("inside"));
}

}
