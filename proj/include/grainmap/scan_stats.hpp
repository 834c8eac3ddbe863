#pragma once

#include "grainmap/common.hpp"
#include "grainmap/volume.hpp"

#include <cstdint>
#include <filesystem>
#include <limits>
#include <set>
#include <vector>

namespace grainmap {

/// Per-grain measurements; index g = label - 1.
struct GrainStats {
  std::size_t n = 0;
  std::vector<std::size_t> kappa;
  std::vector<Vec3> centroid;    // µm
  std::vector<Mat3> covariance;  // µm², divided by kappa
  std::vector<Mat3> precision;   // regularized inverse covariance

  std::size_t k() const { return kappa.size(); }
};

/// Relative ridge added to the covariance before inversion; grains with fewer
/// than 4 voxels are rank deficient and get the coarse ridge.
inline constexpr double kRidge = 1e-8;
inline constexpr double kRidgeTiny = 1.0;

GrainStats compute_stats(const GrainScan& scan);

/// Centered second moment divided by kappa, and the regularized precision.
Mat3 regularized_precision(const Mat3& covariance, std::size_t kappa);

void write_stats_json(const GrainStats& stats, const std::filesystem::path& path);
GrainStats read_stats_json(const std::filesystem::path& path);

/// 26-adjacency between grains (indices are 0-based grain ids).
struct NeighborGraph {
  std::vector<std::set<std::uint32_t>> adjacency;
  std::vector<bool> interior;  // grain touches no outer face of the volume

  std::size_t k() const { return adjacency.size(); }
  bool adjacent(std::uint32_t a, std::uint32_t b) const { return adjacency[a].count(b) > 0; }
  std::size_t edge_count() const;
};

/// Adjacency among labels 1..k of an arbitrary label volume; label 0 voxels
/// are ignored.
NeighborGraph compute_neighbors(const LabelVolume& volume, Label k);
NeighborGraph compute_neighbors(const GrainScan& scan);

/// Grid-graph (6-connected) distance to the nearest differently-labeled voxel.
/// Voxels with a differently-labeled face neighbor have distance 1.
struct BoundaryDistanceField {
  static constexpr std::uint32_t kInfinite = std::numeric_limits<std::uint32_t>::max();
  Dims dims;
  std::vector<std::uint32_t> distance;
};

BoundaryDistanceField compute_boundary_distance(const GrainScan& scan);

/// True where distance >= delta. Throws ConfigError for delta < 1.
std::vector<bool> delta_interior_mask(const BoundaryDistanceField& field, int delta);

}  // namespace grainmap
