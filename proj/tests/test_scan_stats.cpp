#include "doctest.h"
#include "test_util.hpp"

#include "grainmap/scan_stats.hpp"

#include <deque>
#include <random>

using namespace grainmap;

TEST_CASE("single grain filling 2x2x1") {
  const auto scan = testutil::make_scan({2, 2, 1}, {1, 1, 1, 1});
  const auto s = compute_stats(scan);
  CHECK(s.kappa[0] == 4);
  CHECK(s.centroid[0].isApprox(Vec3(1, 1, 0.5)));
}

TEST_CASE("one-voxel grain has zero covariance and the coarse-ridge precision") {
  const auto scan = testutil::make_scan({3, 1, 1}, {1, 2, 2});
  const auto s = compute_stats(scan);
  CHECK(s.covariance[0].norm() == 0.0);
  CHECK((s.precision[0] - Mat3::Identity() / kRidgeTiny).norm() < 1e-15);
}

TEST_CASE("covariances match a two-pass moment oracle on a random 32^3 scan") {
  const auto scan = testutil::random_scan(32, 5, 11);
  const auto s = compute_stats(scan);
  std::size_t total = 0;
  for (std::size_t g = 0; g < 5; ++g) {
    // Pass 1: mean; pass 2: centered second moments, accumulated entry-wise.
    double m[3] = {0, 0, 0};
    std::size_t cnt = 0;
    for (std::size_t v = 0; v < scan.n(); ++v)
      if (scan.labels()[v] == g + 1) {
        const auto c = scan.volume().coords(v);
        for (int a = 0; a < 3; ++a) m[a] += c[a] + 0.5;
        ++cnt;
      }
    for (double& x : m) x /= static_cast<double>(cnt);
    double cov[3][3] = {};
    for (std::size_t v = 0; v < scan.n(); ++v)
      if (scan.labels()[v] == g + 1) {
        const auto c = scan.volume().coords(v);
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 3; ++b) cov[a][b] += (c[a] + 0.5 - m[a]) * (c[b] + 0.5 - m[b]);
      }
    CHECK(s.kappa[g] == cnt);
    total += s.kappa[g];
    for (int a = 0; a < 3; ++a) {
      CHECK(s.centroid[g](a) == doctest::Approx(m[a]).epsilon(1e-12));
      for (int b = 0; b < 3; ++b) {
        const double ref = cov[a][b] / static_cast<double>(cnt);
        CHECK(std::abs(s.covariance[g](a, b) - ref) <= 1e-9 * std::max(1.0, std::abs(ref)));
      }
    }
  }
  CHECK(total == scan.n());
}

TEST_CASE("stats are invariant under reflection of the traversal order") {
  // Reversing x permutes the voxel visiting order; moments must agree after
  // mapping the centroid back.
  const auto scan = testutil::random_scan(16, 4, 5);
  LabelVolume flipped = scan.volume();
  for (std::size_t v = 0; v < scan.n(); ++v) {
    const auto c = scan.volume().coords(v);
    flipped.labels[flipped.index(15 - c[0], c[1], c[2])] = scan.labels()[v];
  }
  const auto a = compute_stats(scan);
  const auto b = compute_stats(GrainScan::from_volume(flipped));
  for (std::size_t g = 0; g < 4; ++g) {
    CHECK(a.kappa[g] == b.kappa[g]);
    CHECK(std::abs(a.centroid[g].x() - (16.0 - b.centroid[g].x())) < 1e-12);
    CHECK(std::abs(a.covariance[g](1, 2) - b.covariance[g](1, 2)) < 1e-12);
    CHECK(std::abs(a.covariance[g](0, 1) + b.covariance[g](0, 1)) < 1e-12);
  }
}

TEST_CASE("two half-volumes share exactly one edge") {
  std::vector<Label> l(4 * 4 * 4);
  for (std::size_t v = 0; v < l.size(); ++v) l[v] = (v % 4) < 2 ? 1 : 2;
  const auto g = compute_neighbors(testutil::make_scan({4, 4, 4}, l));
  CHECK(g.edge_count() == 1);
  CHECK(g.adjacent(0, 1));
  CHECK_FALSE(g.interior[0]);
}

TEST_CASE("corner-only contact is an edge under 26-adjacency") {
  // 2x2x2: grain 1 at (0,0,0), grain 2 at (1,1,1), grain 3 elsewhere.
  std::vector<Label> l(8, 3);
  l[0] = 1;
  l[7] = 2;
  const auto g = compute_neighbors(testutil::make_scan({2, 2, 2}, l));
  CHECK(g.adjacent(0, 1));
  CHECK(g.adjacent(1, 0));
  CHECK(g.edge_count() == 3);
}

TEST_CASE("interior flag marks grains away from the outer faces") {
  std::vector<Label> l(27, 1);
  l[13] = 2;  // center of 3x3x3
  const auto g = compute_neighbors(testutil::make_scan({3, 3, 3}, l));
  CHECK(g.interior[1]);
  CHECK_FALSE(g.interior[0]);
}

TEST_CASE("boundary distances on the 4x1x1 two-grain volume") {
  const auto scan = testutil::make_scan({4, 1, 1}, {1, 1, 2, 2});
  const auto f = compute_boundary_distance(scan);
  CHECK(f.distance == std::vector<std::uint32_t>{2, 1, 1, 2});
  CHECK(delta_interior_mask(f, 1) == std::vector<bool>{true, true, true, true});
  CHECK(delta_interior_mask(f, 2) == std::vector<bool>{true, false, false, true});
  CHECK_THROWS_AS(delta_interior_mask(f, 0), ConfigError);
}

TEST_CASE("single-grain volume has infinite distances") {
  const auto f = compute_boundary_distance(testutil::make_scan({2, 2, 2}, std::vector<Label>(8, 1)));
  for (auto d : f.distance) CHECK(d == BoundaryDistanceField::kInfinite);
}

namespace {

// Plain BFS from one voxel: d(v) = 1 + steps to the nearest voxel that has a
// differently-labeled 6-neighbor.
std::uint32_t bfs_oracle(const LabelVolume& v, std::size_t start) {
  const Dims d = v.dims;
  std::vector<int> dist(v.size(), -1);
  std::deque<std::size_t> q{start};
  dist[start] = 0;
  const int off[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  while (!q.empty()) {
    const std::size_t u = q.front();
    q.pop_front();
    const auto c = v.coords(u);
    for (const auto& o : off) {
      const int x = c[0] + o[0], y = c[1] + o[1], z = c[2] + o[2];
      if (x < 0 || y < 0 || z < 0 || x >= d.nx || y >= d.ny || z >= d.nz) continue;
      if (v.labels[v.index(x, y, z)] != v.labels[u]) return static_cast<std::uint32_t>(dist[u] + 1);
    }
    for (const auto& o : off) {
      const int x = c[0] + o[0], y = c[1] + o[1], z = c[2] + o[2];
      if (x < 0 || y < 0 || z < 0 || x >= d.nx || y >= d.ny || z >= d.nz) continue;
      const std::size_t w = v.index(x, y, z);
      if (dist[w] < 0) {
        dist[w] = dist[u] + 1;
        q.push_back(w);
      }
    }
  }
  return BoundaryDistanceField::kInfinite;
}

}  // namespace

TEST_CASE("distance field agrees with per-voxel BFS on sampled voxels") {
  const auto scan = testutil::random_scan(32, 5, 21);
  const auto f = compute_boundary_distance(scan);
  std::mt19937 rng(4);
  std::uniform_int_distribution<std::size_t> pick(0, scan.n() - 1);
  for (int t = 0; t < 100; ++t) {
    const std::size_t v = pick(rng);
    CHECK(f.distance[v] == bfs_oracle(scan.volume(), v));
  }
}

TEST_CASE("delta=4 interior count equals a recount of the distance field") {
  const auto scan = testutil::random_scan(64, 20, 8);
  const auto f = compute_boundary_distance(scan);
  const auto mask = delta_interior_mask(f, 4);
  std::size_t a = 0, b = 0;
  for (bool m : mask) a += m;
  for (auto d : f.distance) b += d >= 4;
  CHECK(a == b);
  CHECK(a > 0);
}

TEST_CASE("stats JSON round trip") {
  const auto dir = testutil::temp_dir("stats_json");
  const auto s = compute_stats(testutil::random_scan(8, 3, 2));
  write_stats_json(s, dir / "s.json");
  const auto r = read_stats_json(dir / "s.json");
  CHECK(r.kappa == s.kappa);
  CHECK((r.centroid[1] - s.centroid[1]).norm() < 1e-12);
  CHECK((r.covariance[2] - s.covariance[2]).norm() < 1e-12);
}
