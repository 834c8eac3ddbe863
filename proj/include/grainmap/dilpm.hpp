#pragma once

#include "grainmap/diagram.hpp"
#include "grainmap/image_support.hpp"
#include "grainmap/scan_stats.hpp"
#include "grainmap/support.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace grainmap {

/// (1, x1, x2, x3, x1^2, x1x2, x1x3, x2^2, x2x3, x3^2)
using Lifted = Eigen::Matrix<double, 10, 1>;
/// (alpha, a1, a2, a3, A11, 2A12, 2A13, A22, 2A23, A33)
using ParamVector = Eigen::Matrix<double, 10, 1>;

Lifted lift(const Vec3& x);

/// a = -2 A s, alpha = s^T A s + gamma, so that encode(A, s, gamma) . lift(x) = h(x).
ParamVector encode(const Mat3& A, const Vec3& s, double gamma);

struct DecodedDiagram {
  std::vector<Cell> cells;
  double beta = 0.0;    // common shift added to every A
  double eps_pd = 0.0;  // positive-definiteness threshold used
};

/// Reads A off each vector; if some A has smallest eigenvalue <= eps_pd, adds
/// beta = eps_pd - min lambda_min times the identity to every A. Then
/// s = -A^-1 a / 2 and gamma = alpha - s^T A s. eps_pd defaults to 1e-6 times
/// the median |trace A|.
DecodedDiagram decode(const std::vector<ParamVector>& params,
                      std::optional<double> eps_pd = std::nullopt);

/// Per support point: majority grain (1-based) of its voxels and its depth, the
/// smallest boundary distance of its voxels when they all share one grain (0
/// for mixed points).
struct Attribution {
  Label grain = 0;
  std::uint32_t depth = 0;
};

std::vector<Attribution> attribute_support(const GrainScan& scan,
                                           const BoundaryDistanceField& field,
                                           const ImageSupport& support);

struct SeparationInstance {
  std::size_t k = 0;
  double margin = 1.0;
  std::vector<Vec3> points;
  std::vector<double> weights;
  std::vector<std::uint32_t> cell;  // 0-based owner grain
  std::vector<bool> strict;
  /// neighbors[i]: grains l for which h_i <= h_l is imposed on points of i.
  std::vector<std::vector<std::uint32_t>> neighbors;
  std::vector<std::string> warnings;

  std::size_t size() const { return points.size(); }
  std::size_t row_count() const;
};

struct Ring {
  int inner = 2;  // strict iff inner <= depth < outer
  int outer = 4;
};

/// Strict points have depth >= delta (or lie in the ring, deeper points are
/// dropped); the rest are soft. Constraints only between neighboring grains.
SeparationInstance build_instance(const GrainScan& scan, const BoundaryDistanceField& field,
                                  const NeighborGraph& graph, const ImageSupport& support,
                                  int delta, std::optional<Ring> ring = std::nullopt,
                                  double margin = 1.0);

struct DilpmOptions {
  int seeds_per_pair = 4;
  int rows_per_pair = 24;  // most violated rows added per ordered pair and round
  int max_rounds = 500;
  double tolerance = 1e-7;       // relative to the margin
  double regularization = 1e-6;  // L1 weight on the parameters, relative to the mean point weight
};

struct DilpmSolution {
  std::vector<ParamVector> params;  // physical coordinates
  double objective = 0.0;           // sum_j w_j zeta_j
  std::vector<double> slack;        // zeta per instance point (0 for strict)
  std::size_t rounds = 0;
  std::size_t rows_used = 0;
  std::size_t lp_iterations = 0;
};

DilpmSolution solve_dilpm(const SeparationInstance& instance, const DilpmOptions& options = {});

struct DilpmFitOptions {
  int delta = 2;
  std::optional<Ring> ring;
  double margin = 1.0;
  SupportStrategy support;
  DilpmOptions solver;
};

struct DilpmFit {
  DiagramParams diagram;
  DilpmSolution solution;
  double beta = 0.0;
  std::size_t strict_points = 0;
  std::size_t soft_points = 0;
  std::vector<std::string> warnings;
};

DilpmFit fit_dilpm(const GrainScan& scan, const DilpmFitOptions& options);

}  // namespace grainmap
