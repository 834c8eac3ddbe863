#include "doctest.h"
#include "test_util.hpp"

#include "grainmap/pipeline.hpp"
#include "grainmap/support.hpp"

#include <cmath>
#include <numbers>
#include <set>

using namespace grainmap;

namespace {

ImageSupport unit_points(const std::vector<Vec3>& pts) {
  ImageSupport s;
  for (std::size_t j = 0; j < pts.size(); ++j) {
    const std::uint32_t m = static_cast<std::uint32_t>(j);
    s.add(pts[j], 1.0, Provenance::Voxel, 0, std::span<const std::uint32_t>(&m, 1));
  }
  return s;
}

}  // namespace

TEST_CASE("Fibonacci directions are unit vectors spread over the sphere") {
  const auto d = fibonacci_directions(64);
  Vec3 sum = Vec3::Zero();
  for (const auto& v : d) {
    CHECK(v.norm() == doctest::Approx(1.0).epsilon(1e-12));
    sum += v;
  }
  CHECK(sum.norm() < 0.5);
}

TEST_CASE("three collinear points on one ray collapse to their centroid") {
  const Vec3 dir = fibonacci_directions(64)[5];
  const auto in = unit_points({1.0 * dir, 2.0 * dir, 3.0 * dir});
  PencilParams p;
  p.batch_error = std::numeric_limits<double>::infinity();
  const auto out = pencil_coreset(in, {Vec3::Zero()}, {Mat3::Identity()}, p);
  REQUIRE(out.size() == 1);
  CHECK((out.points[0] - 2.0 * dir).norm() < 1e-12);
  CHECK(out.weights[0] == 3.0);
  CHECK(out.members.size() == 3);
  CHECK(out.provenance[0] == Provenance::BatchCentroid);
}

TEST_CASE("batch error below the two-point error keeps every point") {
  const Vec3 dir = fibonacci_directions(64)[5];
  const auto in = unit_points({1.0 * dir, 2.0 * dir, 3.0 * dir});
  PencilParams p;
  p.batch_error = 0.49;  // two adjacent unit points cost 0.5
  const auto out = pencil_coreset(in, {Vec3::Zero()}, {Mat3::Identity()}, p);
  REQUIRE(out.size() == 3);
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK((out.points[j] - (j + 1.0) * dir).norm() < 1e-12);
    CHECK(out.weights[j] == 1.0);
  }
}

TEST_CASE("pencil batch centroids lie on the rays of their site") {
  const auto scan = testutil::random_scan(24, 6, 3);
  const auto stats = compute_stats(scan);
  for (bool ell : {true, false}) {
    PencilParams p;
    p.rays_per_site = 32;
    p.batch_error = 4.0;
    p.ellipsoidal = ell;
    const auto out = pencil_coreset(scan, stats, p);
    out.validate();
    CHECK(out.total_weight() == static_cast<double>(scan.n()));
    CHECK(out.size() <= scan.n());
    CHECK(out.members.size() == scan.n());
    // Distance in the site metric from each point to the nearest ray line.
    double worst = 0.0;
    for (std::size_t j = 0; j < out.size(); ++j) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < stats.k(); ++i) {
        const Mat3 M = ell ? stats.precision[i] : Mat3::Identity();
        const Vec3 d = out.points[j] - stats.centroid[i];
        if (d.dot(M * d) < 1e-24) {
          best = 0.0;
          continue;
        }
        // Rays of site i in the metric M: map Fibonacci directions by M^{-1/2}.
        Eigen::SelfAdjointEigenSolver<Mat3> es(M);
        const Mat3 isq = es.eigenvectors() * es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
                         es.eigenvectors().transpose();
        const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
        for (Vec3 r : fibonacci_directions(p.rays_per_site, golden * static_cast<double>(i))) {
          r = isq * r;
          r /= std::sqrt(r.dot(M * r));
          const double t = d.dot(M * r);
          if (t < 0.0) continue;
          const Vec3 perp = d - t * r;
          best = std::min(best, std::sqrt(std::max(0.0, perp.dot(M * perp))));
        }
      }
      worst = std::max(worst, best);
    }
    CHECK(worst <= 1e-9);
  }
}

TEST_CASE("invalid pencil parameters") {
  const auto in = unit_points({Vec3(1, 0, 0)});
  PencilParams p;
  p.rays_per_site = 3;
  CHECK_THROWS_AS(pencil_coreset(in, {Vec3::Zero()}, {Mat3::Identity()}, p), ConfigError);
  p.rays_per_site = 64;
  p.batch_error = 0.0;
  CHECK_THROWS_AS(pencil_coreset(in, {Vec3::Zero()}, {Mat3::Identity()}, p), ConfigError);
}

TEST_CASE("4x4x1 resolution coreset gives four 2x2 block centroids") {
  std::vector<Label> l(16);
  for (std::size_t v = 0; v < 16; ++v) l[v] = static_cast<Label>(v % 4 < 2 ? 1 : 2);
  const auto scan = testutil::make_scan({4, 4, 1}, l);
  const auto s = resolution_coreset(scan, {2, 2, 1});
  REQUIRE(s.size() == 4);
  const std::vector<Vec3> expect{{1, 1, 0.5}, {3, 1, 0.5}, {1, 3, 0.5}, {3, 3, 0.5}};
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(s.weights[j] == 4.0);
    CHECK((s.points[j] - expect[j]).norm() < 1e-15);
    CHECK(s.provenance[j] == Provenance::CoarseCell);
  }
}

TEST_CASE("resolution tau equal to dims reproduces the voxel support") {
  const auto scan = testutil::random_scan(6, 3, 1);
  const auto s = resolution_coreset(scan, {6, 6, 6});
  const auto v = voxel_support(scan);
  REQUIRE(s.size() == v.size());
  for (std::size_t j = 0; j < s.size(); ++j) {
    CHECK(s.points[j] == v.points[j]);
    CHECK(s.weights[j] == 1.0);
  }
}

TEST_CASE("uneven resolution splits conserve weight") {
  const auto scan = testutil::random_scan(7, 3, 2);
  const auto s = resolution_coreset(scan, {3, 2, 5});
  CHECK(s.size() <= 30u);
  CHECK(s.total_weight() == 343.0);
  CHECK_THROWS_AS(resolution_coreset(scan, {0, 2, 2}), ConfigError);
  CHECK_THROWS_AS(resolution_coreset(scan, {8, 2, 2}), ConfigError);
}

TEST_CASE("advisory tau") {
  CHECK(advisory_tau(1, 0.5) == 11);
  // Reference value ceil(2^(10/3)) computed independently: 2^(10/3) = 10.0794.
  CHECK(std::ceil(std::pow(2.0, 10.0 / 3.0)) == 11.0);
  // k=50, eps=0.01: 1.25e9 is the constant-free size (k / eps^(2/3))^3; the
  // 2^(8/3) factor per axis multiplies it by 2^8.
  const double free = 50.0 / std::pow(0.01, 2.0 / 3.0);
  CHECK(free * free * free == doctest::Approx(1.25e9).epsilon(1e-9));
  const double t = static_cast<double>(advisory_tau(50, 0.01));
  CHECK(t * t * t == doctest::Approx(256 * 1.25e9).epsilon(0.001));
  CHECK_THROWS_AS(advisory_tau(1, 0.6), ConfigError);
  CHECK_THROWS_AS(advisory_tau(1, 0.0), ConfigError);
}

TEST_CASE("interior removal on the 4x1x1 two-grain volume") {
  const auto scan = testutil::make_scan({4, 1, 1}, {1, 1, 2, 2});
  const auto stats = compute_stats(scan);
  const auto field = compute_boundary_distance(scan);
  const auto s = interior_removal(scan, stats, field, voxel_support(scan), 2);
  REQUIRE(s.size() == 4);
  CHECK(s.points[0] == scan.center(1));
  CHECK(s.points[1] == scan.center(2));
  CHECK(s.provenance[2] == Provenance::InteriorRepresentative);
  CHECK(s.grain[2] == 1);
  CHECK(s.grain[3] == 2);
  CHECK(s.points[2] == stats.centroid[0]);
  CHECK(s.total_weight() == 4.0);
  CHECK_THROWS_AS(interior_removal(scan, stats, field, voxel_support(scan), 1), ConfigError);
}

TEST_CASE("combined support strategies") {
  SynthOptions o;
  o.k = 20;
  o.dims = {64, 64, 64};
  o.seed = 1;
  const auto scan = synthesize(o).scan;
  const auto stats = compute_stats(scan);

  SupportStrategy none;
  const auto v = combined_support(scan, stats, none);
  CHECK(v.size() == scan.n());
  CHECK(v.total_weight() == static_cast<double>(scan.n()));

  SupportStrategy res;
  res.kind = SupportKind::Resolution;
  res.tau = {32, 32, 32};
  res.interior_delta = 4;
  const auto r = combined_support(scan, stats, res);
  r.validate();
  CHECK(r.size() < 32u * 32u * 32u);
  CHECK(r.total_weight() == 262144.0);
  std::set<std::uint32_t> covered(r.members.begin(), r.members.end());
  CHECK(covered.size() == scan.n());
  CHECK(r.size() <= 32u * 32u * 32u + scan.k());

  SupportStrategy pen;
  pen.kind = SupportKind::Pencil;
  pen.interior_delta = 4;
  const auto p = combined_support(scan, stats, pen);
  CHECK(p.total_weight() == 262144.0);
  CHECK(p.size() <= scan.n() + scan.k());
}

TEST_CASE("support JSON lists every point") {
  const auto dir = testutil::temp_dir("support_json");
  const auto scan = testutil::make_scan({4, 1, 1}, {1, 1, 2, 2});
  write_support_json(voxel_support(scan), dir / "s.json");
  CHECK(std::filesystem::file_size(dir / "s.json") > 0);
}
