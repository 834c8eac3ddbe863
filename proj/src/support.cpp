#include "grainmap/support.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

namespace grainmap {

using nlohmann::json;

const char* provenance_name(Provenance p) {
  switch (p) {
    case Provenance::Voxel: return "voxel";
    case Provenance::BatchCentroid: return "batch_centroid";
    case Provenance::CoarseCell: return "coarse_cell";
    case Provenance::InteriorRepresentative: return "interior_representative";
  }
  return "unknown";
}

double ImageSupport::total_weight() const {
  double w = 0.0;
  for (double v : weights) w += v;
  return w;
}

void ImageSupport::add(const Vec3& point, double weight, Provenance prov, Label grain_id,
                       std::span<const std::uint32_t> voxels) {
  points.push_back(point);
  weights.push_back(weight);
  provenance.push_back(prov);
  grain.push_back(grain_id);
  members.insert(members.end(), voxels.begin(), voxels.end());
  member_offsets.push_back(members.size());
}

void ImageSupport::validate() const {
  const std::size_t n = points.size();
  if (weights.size() != n || provenance.size() != n || grain.size() != n ||
      member_offsets.size() != n + 1 || member_offsets.back() != members.size())
    throw DataError("image support: inconsistent array lengths");
  for (std::size_t j = 0; j < n; ++j) {
    if (!(weights[j] > 0.0) || !std::isfinite(weights[j]))
      throw DataError("image support: non-positive weight at point " + std::to_string(j));
    if (!points[j].allFinite())
      throw DataError("image support: non-finite coordinates at point " + std::to_string(j));
  }
}

ImageSupport voxel_support(const GrainScan& scan) {
  ImageSupport s;
  const std::size_t n = scan.n();
  s.points.resize(n);
  s.weights.assign(n, 1.0);
  s.provenance.assign(n, Provenance::Voxel);
  s.grain.assign(n, 0);
  s.member_offsets.resize(n + 1);
  s.members.resize(n);
  for (std::size_t v = 0; v < n; ++v) {
    s.points[v] = scan.center(v);
    s.member_offsets[v] = v;
    s.members[v] = static_cast<std::uint32_t>(v);
  }
  s.member_offsets[n] = n;
  return s;
}

void write_support_json(const ImageSupport& support, const std::filesystem::path& path) {
  json pts = json::array();
  for (std::size_t j = 0; j < support.size(); ++j) {
    const auto& p = support.points[j];
    json e{{"x", {p.x(), p.y(), p.z()}},
           {"w", support.weights[j]},
           {"provenance", provenance_name(support.provenance[j])}};
    if (support.grain[j]) e["grain"] = support.grain[j];
    pts.push_back(std::move(e));
  }
  json j{{"size", support.size()}, {"total_weight", support.total_weight()}, {"points", pts}};
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(1) << '\n';
}

std::vector<Vec3> fibonacci_directions(int r, double azimuth) {
  std::vector<Vec3> dirs(static_cast<std::size_t>(r));
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int t = 0; t < r; ++t) {
    const double z = 1.0 - (2.0 * t + 1.0) / r;
    const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * t + azimuth;
    dirs[static_cast<std::size_t>(t)] = {rho * std::cos(phi), rho * std::sin(phi), z};
  }
  return dirs;
}

namespace {

Mat3 inverse_sqrt(const Mat3& A) {
  Eigen::SelfAdjointEigenSolver<Mat3> es(A);
  const Vec3 d = es.eigenvalues().cwiseSqrt().cwiseInverse();
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

struct Projected {
  std::uint32_t site;
  std::uint32_t ray;
  double t;
  std::size_t point;
};

}  // namespace

ImageSupport pencil_coreset(const ImageSupport& input, const std::vector<Vec3>& sites,
                            const std::vector<Mat3>& metrics, const PencilParams& params) {
  if (params.rays_per_site < 6) throw ConfigError("pencil coreset needs at least 6 rays per site");
  if (!(params.batch_error > 0.0)) throw ConfigError("pencil batch error must be positive");
  const std::size_t k = sites.size();
  if (k == 0) throw DataError("pencil coreset: no sites");
  if (params.ellipsoidal && metrics.size() != k)
    throw DataError("pencil coreset: one metric per site required");

  const std::size_t r = static_cast<std::size_t>(params.rays_per_site);
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  std::vector<Mat3> metric(k, Mat3::Identity());
  std::vector<std::vector<Vec3>> rays(k);
  std::vector<std::vector<Vec3>> dual_rays(k);  // A d, so that t = (x - s) . A d
  for (std::size_t i = 0; i < k; ++i) {
    if (params.ellipsoidal) metric[i] = metrics[i];
    const Mat3 map = params.ellipsoidal ? inverse_sqrt(metric[i]) : Mat3::Identity();
    rays[i] = fibonacci_directions(params.rays_per_site, golden * static_cast<double>(i));
    for (auto& d : rays[i]) {
      d = map * d;
      d /= std::sqrt(d.dot(metric[i] * d));
    }
    dual_rays[i].resize(r);
    for (std::size_t q = 0; q < r; ++q) dual_rays[i][q] = metric[i] * rays[i][q];
  }

  const std::size_t n = input.size();
  std::vector<Projected> proj(n);
  parallel_for(n, 2048, [&](std::size_t begin, std::size_t end) {
    for (std::size_t j = begin; j < end; ++j) {
      const Vec3& x = input.points[j];
      std::size_t best_i = 0;
      double best_c = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < k; ++i) {
        const Vec3 d = x - sites[i];
        const double c = d.dot(metric[i] * d);
        if (c < best_c) {
          best_c = c;
          best_i = i;
        }
      }
      // Largest projection length == smallest perpendicular distance.
      const Vec3 d = x - sites[best_i];
      std::size_t best_q = 0;
      double best_t = -std::numeric_limits<double>::infinity();
      for (std::size_t q = 0; q < r; ++q) {
        const double t = d.dot(dual_rays[best_i][q]);
        if (t > best_t) {
          best_t = t;
          best_q = q;
        }
      }
      proj[j] = {static_cast<std::uint32_t>(best_i), static_cast<std::uint32_t>(best_q),
                 std::max(0.0, best_t), j};
    }
  });
  std::sort(proj.begin(), proj.end(), [](const Projected& a, const Projected& b) {
    if (a.site != b.site) return a.site < b.site;
    if (a.ray != b.ray) return a.ray < b.ray;
    if (a.t != b.t) return a.t < b.t;
    return a.point < b.point;
  });

  ImageSupport out;
  std::vector<std::uint32_t> batch_members;
  auto emit = [&](std::size_t from, std::size_t to, double w, double tbar) {
    const auto& p0 = proj[from];
    batch_members.clear();
    for (std::size_t e = from; e < to; ++e) {
      const auto m = input.members_of(proj[e].point);
      batch_members.insert(batch_members.end(), m.begin(), m.end());
    }
    std::sort(batch_members.begin(), batch_members.end());
    const Vec3 c = sites[p0.site] + tbar * rays[p0.site][p0.ray];
    out.add(c, w, Provenance::BatchCentroid, 0, batch_members);
  };

  for (std::size_t a = 0; a < n;) {
    std::size_t b = a;
    while (b < n && proj[b].site == proj[a].site && proj[b].ray == proj[a].ray) ++b;
    // Greedy batches along the ray [a, b); error = sum w (t - tbar)^2.
    std::size_t start = a;
    double W = 0.0, mean = 0.0, sse = 0.0;
    for (std::size_t e = a; e < b; ++e) {
      const double w = input.weights[proj[e].point];
      const double t = proj[e].t;
      const double W2 = W + w;
      const double mean2 = mean + (w / W2) * (t - mean);
      const double sse2 = sse + w * (t - mean) * (t - mean2);
      if (e > start && sse2 > params.batch_error) {
        emit(start, e, W, mean);
        start = e;
        W = w;
        mean = t;
        sse = 0.0;
      } else {
        W = W2;
        mean = mean2;
        sse = sse2;
      }
    }
    emit(start, b, W, mean);
    a = b;
  }
  return out;
}

ImageSupport pencil_coreset(const GrainScan& scan, const GrainStats& stats,
                            const PencilParams& params) {
  return pencil_coreset(voxel_support(scan), stats.centroid, stats.precision, params);
}

ImageSupport resolution_coreset(const GrainScan& scan, const std::array<int, 3>& tau) {
  const Dims& d = scan.dims();
  for (int a = 0; a < 3; ++a) {
    if (tau[a] <= 0) throw ConfigError("resolution coreset: tau components must be positive");
    if (tau[a] > d[a]) throw ConfigError("resolution coreset: tau exceeds the volume dimensions");
  }
  // Near-equal splits, remainder to the leading cells.
  std::array<std::vector<int>, 3> start;
  for (int a = 0; a < 3; ++a) {
    const int q = d[a] / tau[a], rem = d[a] % tau[a];
    start[a].resize(static_cast<std::size_t>(tau[a]) + 1);
    start[a][0] = 0;
    for (int c = 0; c < tau[a]; ++c) start[a][c + 1] = start[a][c] + q + (c < rem ? 1 : 0);
  }
  const LabelVolume& vol = scan.volume();
  ImageSupport out;
  std::vector<std::uint32_t> mem;
  for (int cz = 0; cz < tau[2]; ++cz)
    for (int cy = 0; cy < tau[1]; ++cy)
      for (int cx = 0; cx < tau[0]; ++cx) {
        mem.clear();
        Vec3 sum = Vec3::Zero();
        for (int z = start[2][cz]; z < start[2][cz + 1]; ++z)
          for (int y = start[1][cy]; y < start[1][cy + 1]; ++y)
            for (int x = start[0][cx]; x < start[0][cx + 1]; ++x) {
              const std::size_t v = vol.index(x, y, z);
              mem.push_back(static_cast<std::uint32_t>(v));
              sum += vol.center(v);
            }
        const double w = static_cast<double>(mem.size());
        const bool single = mem.size() == 1;
        out.add(single ? vol.center(mem[0]) : Vec3(sum / w), w,
                single ? Provenance::Voxel : Provenance::CoarseCell, 0, mem);
      }
  return out;
}

long long advisory_tau(long long k, double eps) {
  if (!(eps > 0.0 && eps <= 0.5)) throw ConfigError("advisory tau: eps must lie in (0, 0.5]");
  if (k < 1) throw ConfigError("advisory tau: k must be positive");
  return static_cast<long long>(
      std::ceil(std::pow(2.0, 8.0 / 3.0) * static_cast<double>(k) / std::pow(eps, 2.0 / 3.0) - 1e-9));
}

ImageSupport interior_removal(const GrainScan& scan, const GrainStats& stats,
                              const BoundaryDistanceField& field, const ImageSupport& support,
                              int delta) {
  if (delta < 2) throw ConfigError("interior removal requires delta >= 2");
  const auto& labels = scan.labels();
  const std::size_t k = scan.k();
  std::vector<double> removed(k, 0.0);
  std::vector<std::vector<std::uint32_t>> removed_members(k);
  ImageSupport out;
  for (std::size_t j = 0; j < support.size(); ++j) {
    const auto mem = support.members_of(j);
    bool interior = !mem.empty() && support.provenance[j] != Provenance::InteriorRepresentative;
    const Label g = mem.empty() ? 0 : labels[mem[0]];
    for (std::size_t t = 0; interior && t < mem.size(); ++t)
      interior = labels[mem[t]] == g && field.distance[mem[t]] >= static_cast<std::uint32_t>(delta);
    if (interior) {
      removed[g - 1] += support.weights[j];
      removed_members[g - 1].insert(removed_members[g - 1].end(), mem.begin(), mem.end());
    } else {
      out.add(support.points[j], support.weights[j], support.provenance[j], support.grain[j], mem);
    }
  }
  for (std::size_t g = 0; g < k; ++g) {
    if (removed[g] <= 0.0) continue;
    auto& m = removed_members[g];
    std::sort(m.begin(), m.end());
    out.add(stats.centroid[g], removed[g], Provenance::InteriorRepresentative,
            static_cast<Label>(g + 1), m);
  }
  return out;
}

ImageSupport combined_support(const GrainScan& scan, const GrainStats& stats,
                              const SupportStrategy& strategy, const BoundaryDistanceField* field) {
  ImageSupport s;
  switch (strategy.kind) {
    case SupportKind::None: s = voxel_support(scan); break;
    case SupportKind::Pencil: s = pencil_coreset(scan, stats, strategy.pencil); break;
    case SupportKind::Resolution: s = resolution_coreset(scan, strategy.tau); break;
  }
  if (strategy.interior_delta) {
    if (field) return interior_removal(scan, stats, *field, s, *strategy.interior_delta);
    const auto f = compute_boundary_distance(scan);
    return interior_removal(scan, stats, f, s, *strategy.interior_delta);
  }
  return s;
}

}  // namespace grainmap
