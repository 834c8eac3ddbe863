#pragma once

#include "grainmap/image_support.hpp"
#include "grainmap/scan_stats.hpp"

#include <array>
#include <limits>
#include <optional>
#include <vector>

namespace grainmap {

struct PencilParams {
  int rays_per_site = 64;
  double batch_error = 1.0;  // bound on sum_B w |x - c(B)|_A^2
  bool ellipsoidal = true;   // rays and errors in the site metric, else Euclidean
};

/// r quasi-uniform unit directions (spherical Fibonacci lattice), rotated
/// about the z axis by `azimuth`.
std::vector<Vec3> fibonacci_directions(int r, double azimuth = 0.0);

/// Projects every point of `input` onto the nearest ray of its nearest site
/// and replaces runs of points along each ray by batch centroids. Weight and
/// member voxels are carried over.
ImageSupport pencil_coreset(const ImageSupport& input, const std::vector<Vec3>& sites,
                            const std::vector<Mat3>& metrics, const PencilParams& params);

/// Pencil coreset of the voxel support, rays through the grain centroids.
ImageSupport pencil_coreset(const GrainScan& scan, const GrainStats& stats,
                            const PencilParams& params);

/// Coarse grid of tau cells per axis; each non-empty cell becomes the centroid
/// of its voxel centers, weighted by the voxel count.
ImageSupport resolution_coreset(const GrainScan& scan, const std::array<int, 3>& tau);

/// ceil(2^(8/3) k / eps^(2/3)); eps must lie in (0, 0.5].
long long advisory_tau(long long k, double eps);

/// Drops support points whose voxels all lie in the delta-interior of a single
/// grain and appends one representative per grain at its centroid. delta >= 2.
ImageSupport interior_removal(const GrainScan& scan, const GrainStats& stats,
                              const BoundaryDistanceField& field, const ImageSupport& support,
                              int delta);

enum class SupportKind { None, Pencil, Resolution };

struct SupportStrategy {
  SupportKind kind = SupportKind::None;
  PencilParams pencil;
  std::array<int, 3> tau{0, 0, 0};
  std::optional<int> interior_delta;
};

ImageSupport combined_support(const GrainScan& scan, const GrainStats& stats,
                              const SupportStrategy& strategy,
                              const BoundaryDistanceField* field = nullptr);

}  // namespace grainmap
