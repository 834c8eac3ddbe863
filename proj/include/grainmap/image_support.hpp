#pragma once

#include "grainmap/common.hpp"
#include "grainmap/volume.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace grainmap {

enum class Provenance : std::uint8_t {
  Voxel,
  BatchCentroid,
  CoarseCell,
  InteriorRepresentative,
};

const char* provenance_name(Provenance p);

/// Weighted point set fed to the clustering LPs. Every point remembers the
/// fine voxels it aggregates (CSR layout) so later stages can reason about
/// grain purity and depth.
struct ImageSupport {
  std::vector<Vec3> points;
  std::vector<double> weights;
  std::vector<Provenance> provenance;
  std::vector<Label> grain;  // 1-based grain for interior representatives, else 0
  std::vector<std::size_t> member_offsets{0};
  std::vector<std::uint32_t> members;

  std::size_t size() const { return points.size(); }
  double total_weight() const;

  std::span<const std::uint32_t> members_of(std::size_t p) const {
    return {members.data() + member_offsets[p], members.data() + member_offsets[p + 1]};
  }

  void add(const Vec3& point, double weight, Provenance prov, Label grain_id,
           std::span<const std::uint32_t> voxels);

  /// Throws DataError on non-positive weights, non-finite coordinates or
  /// inconsistent bookkeeping.
  void validate() const;
};

/// One unit-weight point per voxel center.
ImageSupport voxel_support(const GrainScan& scan);

void write_support_json(const ImageSupport& support, const std::filesystem::path& path);

}  // namespace grainmap
