#pragma once

#include "grainmap/common.hpp"
#include "grainmap/volume.hpp"

#include <filesystem>
#include <limits>
#include <vector>

namespace grainmap {

/// One cell of an anisotropic power diagram:
/// h(x) = (x - site)^T A (x - site) + gamma.
struct Cell {
  Mat3 A = Mat3::Identity();
  Vec3 site = Vec3::Zero();
  double gamma = 0.0;
};

/// True when A is symmetric and its smallest eigenvalue exceeds
/// 1e-12 * ||A||.
bool is_spd(const Mat3& A);

class DiagramParams {
 public:
  DiagramParams() = default;

  /// Validates SPD matrices and pairwise distinct sites.
  explicit DiagramParams(std::vector<Cell> cells);

  std::size_t k() const { return cells_.size(); }
  const Cell& cell(std::size_t i) const { return cells_[i]; }
  const std::vector<Cell>& cells() const { return cells_; }

 private:
  std::vector<Cell> cells_;
};

DiagramParams voronoi(const std::vector<Vec3>& sites);
DiagramParams power(const std::vector<Vec3>& sites, const std::vector<double>& gammas);

/// h_i(x) for the 0-based cell index i.
inline double h_value(const Cell& c, const Vec3& x) {
  const Vec3 d = x - c.site;
  return d.dot(c.A * d) + c.gamma;
}
inline double h_value(const DiagramParams& p, std::size_t i, const Vec3& x) {
  return h_value(p.cell(i), x);
}

struct ClassificationResult {
  Label label = 0;  // 1-based cell, or 0 on a (numerical) boundary
  double margin = std::numeric_limits<double>::infinity();  // h_second - h_best
};

ClassificationResult classify(const DiagramParams& params, const Vec3& x, double tie_tol);

/// Relative tie tolerance: 1e-9 times the median over cells of
/// |gamma_i| + lambda_max(A_i) R^2, with R the half-diagonal of the volume box.
double default_tie_tolerance(const DiagramParams& params, const Dims& dims, const Vec3& spacing);

enum class TieRule {
  Unassigned,   // margin <= tie_tol gives label 0
  LowestIndex,  // always the argmin, ties to the lowest cell index
};

LabelVolume rasterize(const DiagramParams& params, const Dims& dims, const Vec3& spacing,
                      double tie_tol, TieRule rule = TieRule::Unassigned);

void write_diagram_json(const DiagramParams& params, const std::filesystem::path& path);
DiagramParams read_diagram_json(const std::filesystem::path& path);

}  // namespace grainmap
