#include "doctest.h"
#include "test_util.hpp"

#include "grainmap/transport.hpp"

#include <functional>
#include <random>

using namespace grainmap;

namespace {

ImageSupport points_support(const std::vector<Vec3>& pts, const std::vector<double>& w) {
  ImageSupport s;
  for (std::size_t j = 0; j < pts.size(); ++j) s.add(pts[j], w[j], Provenance::Voxel, 0, {});
  return s;
}

CellModel euclidean_model(const std::vector<Vec3>& sites, const std::vector<double>& kappa) {
  CellModel m;
  m.sites = sites;
  m.A.assign(sites.size(), Mat3::Identity());
  m.kappa = kappa;
  return m;
}

double xi_of(const Clustering& c, std::size_t cell, std::size_t point) {
  for (const auto& e : c.entries)
    if (e.cell == cell && e.point == point) return e.xi;
  return 0.0;
}

// Integral transportation vertices: enumerate every integer split of each
// point's weight across the cells and keep those meeting the cell totals.
double brute_force_optimum(const ImageSupport& s, const CellModel& m) {
  const std::size_t n = s.size(), k = m.k();
  std::vector<int> load(k, 0);
  double best = std::numeric_limits<double>::infinity();
  std::function<void(std::size_t, double)> rec_point;
  std::function<void(std::size_t, std::size_t, int, double)> rec_split =
      [&](std::size_t j, std::size_t i, int left, double cost) {
        if (i + 1 == k) {
          load[i] += left;
          rec_point(j + 1, cost + left * m.cost(i, s.points[j]));
          load[i] -= left;
          return;
        }
        for (int a = 0; a <= left; ++a) {
          load[i] += a;
          rec_split(j, i + 1, left - a, cost + a * m.cost(i, s.points[j]));
          load[i] -= a;
        }
      };
  rec_point = [&](std::size_t j, double cost) {
    if (j == n) {
      for (std::size_t i = 0; i < k; ++i)
        if (load[i] != static_cast<int>(m.kappa[i])) return;
      best = std::min(best, cost);
      return;
    }
    rec_split(j, 0, static_cast<int>(s.weights[j]), cost);
  };
  rec_point(0, 0.0);
  return best;
}

void check_optimality(const ImageSupport& s, const CellModel& m, const WcaaResult& r) {
  double scale = 0.0;
  for (std::size_t j = 0; j < s.size(); ++j)
    for (std::size_t i = 0; i < m.k(); ++i) scale = std::max(scale, m.cost(i, s.points[j]));
  scale = std::max(scale, 1.0);
  const auto cs = check_complementary_slackness(s, m, r.clustering, r.duals);
  CHECK(cs.max_cs_residual <= 1e-6 * scale);
  CHECK(cs.max_dual_infeasibility <= 1e-6 * scale);
  CHECK(std::abs(r.objective - r.dual_objective) <= 1e-6 * std::max(1.0, std::abs(r.objective)));
  CHECK(r.clustering.fractional_points() <= m.k() - 1);
  // Every cell receives exactly its target weight; every point is fully assigned.
  std::vector<double> got(m.k(), 0.0), frac(s.size(), 0.0);
  for (const auto& e : r.clustering.entries) {
    got[e.cell] += e.xi * s.weights[e.point];
    frac[e.point] += e.xi;
  }
  for (std::size_t i = 0; i < m.k(); ++i) CHECK(got[i] == doctest::Approx(r.kappa[i]).epsilon(1e-9));
  for (double f : frac) CHECK(f == doctest::Approx(1.0).epsilon(1e-9));
}

}  // namespace

TEST_CASE("two points on two sites: identity assignment, zero cost") {
  const auto s = points_support({Vec3(0, 0, 0), Vec3(1, 0, 0)}, {1, 1});
  const auto m = euclidean_model({Vec3(0, 0, 0), Vec3(1, 0, 0)}, {1, 1});
  const auto r = solve_wcaa(s, m);
  CHECK(xi_of(r.clustering, 0, 0) == 1.0);
  CHECK(xi_of(r.clustering, 1, 1) == 1.0);
  CHECK(r.objective == 0.0);
  // Symmetric instance: both sizes normalize to 0.
  CHECK(r.duals.gamma[0] == doctest::Approx(0.0));
  CHECK(r.duals.gamma[1] == doctest::Approx(0.0));
  check_optimality(s, m, r);
}

TEST_CASE("unbalanced targets split the point at 1") {
  const auto s = points_support({Vec3(0, 0, 0), Vec3(1, 0, 0)}, {1, 1});
  const auto m = euclidean_model({Vec3(0, 0, 0), Vec3(1, 0, 0)}, {1.5, 0.5});
  const auto r = solve_wcaa(s, m);
  CHECK(xi_of(r.clustering, 0, 0) == doctest::Approx(1.0));
  CHECK(xi_of(r.clustering, 0, 1) == doctest::Approx(0.5));
  CHECK(xi_of(r.clustering, 1, 1) == doctest::Approx(0.5));
  CHECK(r.objective == doctest::Approx(0.5));
  CHECK(r.clustering.fractional_points() == 1);
  check_optimality(s, m, r);
}

TEST_CASE("random 6-point 3-site instances match vertex enumeration") {
  std::mt19937 rng(17);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  std::uniform_int_distribution<int> w(1, 3);
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<Vec3> pts(6), sites(3);
    std::vector<double> wt(6);
    for (auto& p : pts) p = {u(rng), u(rng), u(rng)};
    for (auto& p : sites) p = {u(rng), u(rng), u(rng)};
    int total = 0;
    for (auto& x : wt) total += static_cast<int>(x = w(rng));
    std::uniform_int_distribution<int> cut(0, total);
    int a = cut(rng), b = cut(rng);
    if (a > b) std::swap(a, b);
    const std::vector<double> kappa{double(a), double(b - a), double(total - b)};
    if (kappa[0] == 0 || kappa[1] == 0 || kappa[2] == 0) continue;
    const auto s = points_support(pts, wt);
    const auto m = euclidean_model(sites, kappa);
    for (int cand : {1, 3}) {
      WcaaOptions o;
      o.candidates = cand;
      const auto r = solve_wcaa(s, m, o);
      CHECK(r.objective == doctest::Approx(brute_force_optimum(s, m)).epsilon(1e-9));
      check_optimality(s, m, r);
    }
  }
}

TEST_CASE("targets are rescaled to the support weight") {
  const auto s = points_support({Vec3(0, 0, 0), Vec3(1, 0, 0)}, {2, 2});
  const auto m = euclidean_model({Vec3(0, 0, 0), Vec3(1, 0, 0)}, {1, 1});
  const auto r = solve_wcaa(s, m);
  CHECK(r.kappa[0] == doctest::Approx(2.0));
  CHECK(r.objective == 0.0);
}

TEST_CASE("zero-cost instance has zero residual") {
  const std::vector<Vec3> sites{Vec3(0, 0, 0), Vec3(3, 0, 0), Vec3(0, 3, 0)};
  const auto s = points_support(sites, {2, 1, 4});
  const auto m = euclidean_model(sites, {2, 1, 4});
  const auto r = solve_wcaa(s, m);
  const auto cs = check_complementary_slackness(s, m, r.clustering, r.duals);
  CHECK(r.objective == 0.0);
  CHECK(cs.max_cs_residual == 0.0);
}

TEST_CASE("lowering one size by 1 shows up as dual infeasibility 1") {
  const auto scan = testutil::random_scan(8, 3, 4);
  const auto stats = compute_stats(scan);
  const auto s = voxel_support(scan);
  const auto m = model_from_stats(stats);
  const auto r = solve_wcaa(s, m);
  auto duals = r.duals;
  duals.gamma[1] -= 1.0;
  const auto cs = check_complementary_slackness(s, m, r.clustering, duals);
  CHECK(cs.max_dual_infeasibility == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("voxel instances: optimality, fractional bound and compatibility") {
  for (unsigned seed : {1u, 2u, 3u}) {
    const auto scan = testutil::random_scan(16, 6, seed);
    const auto stats = compute_stats(scan);
    const auto s = voxel_support(scan);
    const auto m = model_from_stats(stats);
    const auto r = solve_wcaa(s, m);
    check_optimality(s, m, r);
    // Positively assigned points lie in their cell of the dual diagram.
    const auto d = diagram_from_duals(m, r.duals);
    double scale = 0.0;
    for (std::size_t j = 0; j < s.size(); ++j) scale = std::max(scale, m.cost(0, s.points[j]));
    bool compatible = true;
    for (const auto& e : r.clustering.entries) {
      const double hi = h_value(d, e.cell, s.points[e.point]);
      for (std::size_t l = 0; l < d.k(); ++l)
        compatible = compatible && hi <= h_value(d, l, s.points[e.point]) + 1e-6 * scale;
    }
    CHECK(compatible);
    // Candidate restriction does not change the optimum.
    WcaaOptions all;
    all.candidates = 6;
    CHECK(solve_wcaa(s, m, all).objective == doctest::Approx(r.objective).epsilon(1e-9));
  }
}

TEST_CASE("diagram from duals carries the model shapes and dual sizes") {
  const std::vector<Vec3> sites{Vec3(0, 0, 0), Vec3(4, 0, 0)};
  CellModel m = euclidean_model(sites, {1, 1});
  m.A[1] = Vec3(2, 1, 1).asDiagonal();
  DualSolution duals{{0.0, 0.0}, {0.0, 2.5}};
  const auto d = diagram_from_duals(m, duals);
  CHECK(d.cell(1).A == m.A[1]);
  CHECK(d.cell(1).site == sites[1]);
  CHECK(d.cell(1).gamma == 2.5);
}

TEST_CASE("invalid transport inputs") {
  const auto m = euclidean_model({Vec3(0, 0, 0), Vec3(1, 0, 0)}, {1, 1});
  CHECK_THROWS_AS(solve_wcaa(ImageSupport{}, m), DataError);
  const auto s = points_support({Vec3(0, 0, 0)}, {1});
  WcaaOptions o;
  o.candidates = 0;
  CHECK_THROWS_AS(solve_wcaa(s, m, o), ConfigError);
  CHECK_THROWS_AS(solve_wcaa(s, euclidean_model({Vec3(0, 0, 0)}, {0})), DataError);
}
