#pragma once

#include "grainmap/common.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace grainmap {

using Label = std::uint32_t;

struct Dims {
  int nx = 0;
  int ny = 0;
  int nz = 0;

  std::size_t count() const {
    return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) *
           static_cast<std::size_t>(nz);
  }
  int operator[](int axis) const { return axis == 0 ? nx : axis == 1 ? ny : nz; }
  bool operator==(const Dims&) const = default;
};

/// Dense labeled voxel grid, x-fastest. Label 0 means "unassigned" and only
/// appears in rasterized outputs.
struct LabelVolume {
  Dims dims;
  Vec3 spacing{1.0, 1.0, 1.0};
  std::vector<Label> labels;

  std::size_t size() const { return labels.size(); }

  std::size_t index(int x, int y, int z) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(dims.nx) *
               (static_cast<std::size_t>(y) + static_cast<std::size_t>(dims.ny) * z);
  }
  std::array<int, 3> coords(std::size_t idx) const {
    const auto nx = static_cast<std::size_t>(dims.nx);
    const auto ny = static_cast<std::size_t>(dims.ny);
    return {static_cast<int>(idx % nx), static_cast<int>((idx / nx) % ny),
            static_cast<int>(idx / (nx * ny))};
  }
  /// Physical voxel center ((i+1/2)sx, (j+1/2)sy, (l+1/2)sz) in µm.
  Vec3 center(std::size_t idx) const {
    const auto c = coords(idx);
    return {(c[0] + 0.5) * spacing.x(), (c[1] + 0.5) * spacing.y(),
            (c[2] + 0.5) * spacing.z()};
  }
  Label max_label() const;
};

/// Ground-truth grain scan: every label lies in [1, k] and every grain is
/// non-empty. Immutable once constructed.
class GrainScan {
 public:
  /// Validates `volume`; k defaults to the maximum label.
  static GrainScan from_volume(LabelVolume volume, std::optional<Label> k = std::nullopt);

  const LabelVolume& volume() const { return volume_; }
  const Dims& dims() const { return volume_.dims; }
  const Vec3& spacing() const { return volume_.spacing; }
  const std::vector<Label>& labels() const { return volume_.labels; }
  std::size_t n() const { return volume_.labels.size(); }
  Label k() const { return k_; }
  Vec3 center(std::size_t idx) const { return volume_.center(idx); }

 private:
  GrainScan(LabelVolume volume, Label k) : volume_(std::move(volume)), k_(k) {}

  LabelVolume volume_;
  Label k_ = 0;
};

struct VolumeHeader {
  Dims dims;
  Vec3 spacing{1.0, 1.0, 1.0};
  std::optional<Label> k;
  int scalar_bytes = 2;  // 2 (uint16) or 4 (uint32)
  std::string byte_order = "little-endian";
};

VolumeHeader read_header(const std::filesystem::path& header_path);
void write_header(const VolumeHeader& header, const std::filesystem::path& header_path);

/// Reads a label volume without grain-scan validation (label 0 allowed).
LabelVolume load_labels(const std::filesystem::path& header_path,
                        const std::filesystem::path& data_path,
                        std::optional<Label>* header_k = nullptr);
void save_labels(const LabelVolume& volume, std::optional<Label> k,
                 const std::filesystem::path& header_path,
                 const std::filesystem::path& data_path);

GrainScan load_scan(const std::filesystem::path& header_path,
                    const std::filesystem::path& data_path);
void save_scan(const GrainScan& scan, const std::filesystem::path& header_path,
               const std::filesystem::path& data_path);

enum class Axis { X = 0, Y = 1, Z = 2 };
Axis parse_axis(const std::string& name);

/// Deterministic, injective label -> 24-bit RGB mapping; label 0 is black.
std::array<std::uint8_t, 3> label_color(Label label);

/// Writes the slice `index` orthogonal to `axis` as binary PPM (P6).
void export_slice(const LabelVolume& volume, Axis axis, int index,
                  const std::filesystem::path& out_path);

}  // namespace grainmap
