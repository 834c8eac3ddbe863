#pragma once

#include "grainmap/common.hpp"
#include "grainmap/diagram.hpp"
#include "grainmap/image_support.hpp"
#include "grainmap/scan_stats.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace grainmap {

/// Fixed shape parameters and target cluster weights of the assignment LP.
struct CellModel {
  std::vector<Mat3> A;
  std::vector<Vec3> sites;
  std::vector<double> kappa;

  std::size_t k() const { return sites.size(); }
  double cost(std::size_t cell, const Vec3& x) const {
    const Vec3 d = x - sites[cell];
    return d.dot(A[cell] * d);
  }
};

/// Covariance-derived model: A_i = precision_i, s_i = centroid_i, kappa_i.
CellModel model_from_stats(const GrainStats& stats);

struct Assignment {
  std::uint32_t cell;  // 0-based
  std::size_t point;
  double xi;  // fraction of the point assigned to the cell
};

/// Sparse fractional clustering, sorted by (point, cell).
struct Clustering {
  std::vector<Assignment> entries;

  /// Number of points with two or more positive entries.
  std::size_t fractional_points() const;
};

struct DualSolution {
  std::vector<double> eta;    // per point
  std::vector<double> gamma;  // per cell, min gamma = 0
};

struct WcaaOptions {
  int candidates = 8;                  // initial arcs per point (cheapest sites)
  std::size_t stall_threshold = 5000;  // degenerate pivots before Bland's rule
  std::size_t max_pivots = 0;          // 0: 200 (n + k) + 1e6
};

struct WcaaResult {
  Clustering clustering;
  DualSolution duals;
  double objective = 0.0;       // sum_ij xi_ij w_j c_ij
  double dual_objective = 0.0;  // sum_j w_j eta_j - sum_i kappa_i gamma_i
  std::vector<double> kappa;    // targets after rescaling to the support weight
  std::size_t pivots = 0;
  int final_candidates = 0;
  int escalations = 0;
};

/// Solves the weight-constrained anisotropic assignment LP as a transportation
/// problem by network simplex. Arcs start restricted to each point's cheapest
/// `candidates` sites; the candidate count doubles (warm-started) until the
/// tree duals certify optimality over every arc.
WcaaResult solve_wcaa(const ImageSupport& support, const CellModel& model,
                      const WcaaOptions& options = {});

/// Diagram with the model's A_i, s_i and the dual sizes gamma_i.
DiagramParams diagram_from_duals(const CellModel& model, const DualSolution& duals);

struct SlacknessReport {
  double max_cs_residual = 0.0;          // over xi_ij > 0: |eta_j - c_ij - gamma_i|
  double max_dual_infeasibility = 0.0;   // max over all (i, j) of eta_j - c_ij - gamma_i
};

SlacknessReport check_complementary_slackness(const ImageSupport& support, const CellModel& model,
                                              const Clustering& clustering,
                                              const DualSolution& duals, double tol = 0.0);

void write_clustering_json(const WcaaResult& result, const std::filesystem::path& path);

}  // namespace grainmap
