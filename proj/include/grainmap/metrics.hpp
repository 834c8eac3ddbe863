#pragma once

#include "grainmap/scan_stats.hpp"
#include "grainmap/volume.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace grainmap {

/// Fraction of voxels whose predicted label equals the true one (0 never matches).
double accuracy(const GrainScan& scan, const LabelVolume& predicted);

/// (1/n) sum_i |kappa_i - |C_i||.
double weight_error(const GrainScan& scan, const LabelVolume& predicted);

struct MomentErrors {
  double centroid = 0.0;    // (1/n) sum_i kappa_i |c(G_i) - c(C_i)|
  double covariance = 0.0;  // (1/n) sum_i kappa_i ||Sigma_i - Cov(C_i)||_2
  std::vector<Label> empty_cells;  // predicted cells without voxels
};

/// Empty predicted cells are scored against the volume center and a zero
/// covariance, and listed in `empty_cells`.
MomentErrors moment_errors(const GrainScan& scan, const LabelVolume& predicted);
double centroid_error(const GrainScan& scan, const LabelVolume& predicted);
double covariance_error(const GrainScan& scan, const LabelVolume& predicted);

struct NeighborhoodReport {
  double exact = 0.0;        // % grains with identical neighbor sets
  double within_one = 0.0;   // % with at most one missing or additional neighbor
  double within_two = 0.0;
  double superset = 0.0;     // % whose true neighbors are all present
};

NeighborhoodReport neighborhood_report(const GrainScan& scan, const LabelVolume& predicted);

struct FitReport {
  double accuracy = 0.0;
  double weight_error = 0.0;
  double centroid_error = 0.0;
  double covariance_error = 0.0;
  NeighborhoodReport neighborhoods;
  std::vector<Label> empty_cells;
  std::size_t unassigned_voxels = 0;
  std::vector<std::pair<std::string, double>> runtime_seconds;  // per stage, in order
  std::map<std::string, double> extra;  // method-specific figures
};

FitReport evaluate(const GrainScan& scan, const LabelVolume& predicted);

std::string report_json(const FitReport& report);
std::string report_table(const FitReport& report);
void write_report(const FitReport& report, const std::filesystem::path& json_path);

}  // namespace grainmap
