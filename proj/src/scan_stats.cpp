#include "grainmap/scan_stats.hpp"

#include "json.hpp"

#include <fstream>

namespace grainmap {

using nlohmann::json;

Mat3 regularized_precision(const Mat3& covariance, std::size_t kappa) {
  const double eps = kappa < 4 ? kRidgeTiny : kRidge;
  const double tr = covariance.trace();
  const double ridge = eps * (tr > 0.0 ? tr / 3.0 : 1.0);
  const Mat3 reg = covariance + ridge * Mat3::Identity();
  Mat3 p = reg.inverse();
  return 0.5 * (p + p.transpose());
}

GrainStats compute_stats(const GrainScan& scan) {
  const std::size_t k = scan.k();
  GrainStats s;
  s.n = scan.n();
  s.kappa.assign(k, 0);
  std::vector<Vec3> sum(k, Vec3::Zero());
  const auto& labels = scan.labels();
  for (std::size_t v = 0; v < labels.size(); ++v) {
    const std::size_t g = labels[v] - 1;
    ++s.kappa[g];
    sum[g] += scan.center(v);
  }
  s.centroid.resize(k);
  for (std::size_t g = 0; g < k; ++g) s.centroid[g] = sum[g] / static_cast<double>(s.kappa[g]);

  std::vector<Mat3> moment(k, Mat3::Zero());
  for (std::size_t v = 0; v < labels.size(); ++v) {
    const std::size_t g = labels[v] - 1;
    const Vec3 d = scan.center(v) - s.centroid[g];
    moment[g].noalias() += d * d.transpose();
  }
  s.covariance.resize(k);
  s.precision.resize(k);
  for (std::size_t g = 0; g < k; ++g) {
    s.covariance[g] = moment[g] / static_cast<double>(s.kappa[g]);
    s.precision[g] = regularized_precision(s.covariance[g], s.kappa[g]);
  }
  return s;
}

void write_stats_json(const GrainStats& stats, const std::filesystem::path& path) {
  json grains = json::array();
  for (std::size_t g = 0; g < stats.k(); ++g) {
    const auto& c = stats.centroid[g];
    json cov = json::array();
    for (int r = 0; r < 3; ++r)
      for (int col = 0; col < 3; ++col) cov.push_back(stats.covariance[g](r, col));
    grains.push_back({{"label", g + 1},
                      {"kappa", stats.kappa[g]},
                      {"centroid", {c.x(), c.y(), c.z()}},
                      {"covariance", cov}});
  }
  json j{{"n", stats.n}, {"k", stats.k()}, {"grains", grains}};
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

GrainStats read_stats_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  GrainStats s;
  try {
    json j;
    in >> j;
    s.n = j.at("n").get<std::size_t>();
    for (const auto& g : j.at("grains")) {
      s.kappa.push_back(g.at("kappa").get<std::size_t>());
      const auto c = g.at("centroid").get<std::vector<double>>();
      const auto m = g.at("covariance").get<std::vector<double>>();
      if (c.size() != 3 || m.size() != 9) throw DataError("bad grain entry in " + path.string());
      s.centroid.emplace_back(c[0], c[1], c[2]);
      Mat3 cov;
      for (int r = 0; r < 3; ++r)
        for (int col = 0; col < 3; ++col) cov(r, col) = m[r * 3 + col];
      s.covariance.push_back(cov);
      s.precision.push_back(regularized_precision(cov, s.kappa.back()));
    }
  } catch (const json::exception& e) {
    throw DataError("invalid stats file " + path.string() + ": " + e.what());
  }
  return s;
}

std::size_t NeighborGraph::edge_count() const {
  std::size_t e = 0;
  for (const auto& a : adjacency) e += a.size();
  return e / 2;
}

NeighborGraph compute_neighbors(const LabelVolume& volume, Label k) {
  NeighborGraph g;
  g.adjacency.resize(k);
  g.interior.assign(k, true);
  const auto& d = volume.dims;
  const auto& labels = volume.labels;
  for (int z = 0; z < d.nz; ++z) {
    for (int y = 0; y < d.ny; ++y) {
      for (int x = 0; x < d.nx; ++x) {
        const Label a = labels[volume.index(x, y, z)];
        if (a == 0 || a > k) continue;
        if (x == 0 || y == 0 || z == 0 || x == d.nx - 1 || y == d.ny - 1 || z == d.nz - 1)
          g.interior[a - 1] = false;
        // Visit each unordered voxel pair once: the 13 offsets lexicographically after 0.
        for (int dz = 0; dz <= 1; ++dz) {
          for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
              if (dz == 0 && (dy < 0 || (dy == 0 && dx <= 0))) continue;
              const int xx = x + dx, yy = y + dy, zz = z + dz;
              if (xx < 0 || yy < 0 || zz >= d.nz || xx >= d.nx || yy >= d.ny) continue;
              const Label b = labels[volume.index(xx, yy, zz)];
              if (b == 0 || b == a || b > k) continue;
              g.adjacency[a - 1].insert(b - 1);
              g.adjacency[b - 1].insert(a - 1);
            }
          }
        }
      }
    }
  }
  return g;
}

NeighborGraph compute_neighbors(const GrainScan& scan) {
  return compute_neighbors(scan.volume(), scan.k());
}

BoundaryDistanceField compute_boundary_distance(const GrainScan& scan) {
  const auto& vol = scan.volume();
  const auto& d = vol.dims;
  const auto& labels = vol.labels;
  BoundaryDistanceField f;
  f.dims = d;
  f.distance.assign(labels.size(), BoundaryDistanceField::kInfinite);

  const std::ptrdiff_t sx = 1, sy = d.nx, sz = static_cast<std::ptrdiff_t>(d.nx) * d.ny;
  auto for_face_neighbors = [&](std::size_t v, auto&& fn) {
    const auto c = vol.coords(v);
    const auto iv = static_cast<std::ptrdiff_t>(v);
    if (c[0] > 0) fn(static_cast<std::size_t>(iv - sx));
    if (c[0] + 1 < d.nx) fn(static_cast<std::size_t>(iv + sx));
    if (c[1] > 0) fn(static_cast<std::size_t>(iv - sy));
    if (c[1] + 1 < d.ny) fn(static_cast<std::size_t>(iv + sy));
    if (c[2] > 0) fn(static_cast<std::size_t>(iv - sz));
    if (c[2] + 1 < d.nz) fn(static_cast<std::size_t>(iv + sz));
  };

  std::vector<std::size_t> frontier;
  for (std::size_t v = 0; v < labels.size(); ++v) {
    bool source = false;
    for_face_neighbors(v, [&](std::size_t w) { source = source || labels[w] != labels[v]; });
    if (source) {
      f.distance[v] = 1;
      frontier.push_back(v);
    }
  }
  std::vector<std::size_t> next;
  for (std::uint32_t level = 1; !frontier.empty(); ++level) {
    next.clear();
    for (std::size_t v : frontier) {
      for_face_neighbors(v, [&](std::size_t w) {
        if (f.distance[w] == BoundaryDistanceField::kInfinite) {
          f.distance[w] = level + 1;
          next.push_back(w);
        }
      });
    }
    frontier.swap(next);
  }
  return f;
}

std::vector<bool> delta_interior_mask(const BoundaryDistanceField& field, int delta) {
  if (delta < 1) throw ConfigError("delta must be >= 1");
  std::vector<bool> mask(field.distance.size());
  for (std::size_t v = 0; v < mask.size(); ++v)
    mask[v] = field.distance[v] >= static_cast<std::uint32_t>(delta);
  return mask;
}

}  // namespace grainmap
