#pragma once

#include "grainmap/diagram.hpp"
#include "grainmap/dilpm.hpp"
#include "grainmap/metrics.hpp"
#include "grainmap/support.hpp"
#include "grainmap/transport.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

namespace grainmap {

inline constexpr int kSchemaVersion = 1;

/// A volume on disk is a pair <prefix>.json (header) + <prefix>.raw (labels).
struct VolumePaths {
  std::filesystem::path header, data;
  static VolumePaths from_prefix(const std::filesystem::path& prefix);
};

struct SynthOptions {
  int k = 20;
  Dims dims{64, 64, 64};
  Vec3 spacing{1.0, 1.0, 1.0};
  std::uint64_t seed = 1;
  int max_attempts = 10;
};

struct SynthResult {
  GrainScan scan;
  DiagramParams truth;
  int attempts = 0;
};

/// Uniform sites, SPD matrices with eigenvalues in [1, 10] scaled to unit
/// determinant and randomly rotated, gamma = 0; rasterized with ties to the
/// lowest index. Re-samples while some cell stays empty.
SynthResult synthesize(const SynthOptions& options);

enum class FitMethod { Sgbpd, Dilpm };

struct PipelineConfig {
  VolumePaths input;
  SupportStrategy support;
  std::optional<double> tau_eps;  // resolution tau from advisory_tau(k, eps)
  FitMethod method = FitMethod::Sgbpd;
  int candidates = 8;
  /// Optional diagram whose A_i and s_i replace the measured ones (s-GBPD).
  std::optional<std::filesystem::path> reference_diagram;
  int dilpm_delta = 2;
  std::optional<Ring> dilpm_ring;
  double dilpm_margin = 1.0;
  std::optional<double> tie_tolerance;
  std::filesystem::path output_dir = "grainmap_out";
  std::uint64_t seed = 1;
  bool write_slices = true;
};

/// Parses a JSON config (throws ConfigError). Relative input paths are
/// resolved against the config file's directory.
PipelineConfig read_config(const std::filesystem::path& path);

struct FitOutcome {
  DiagramParams diagram;
  LabelVolume predicted;
  FitReport report;
  std::size_t support_size = 0;
  double support_weight = 0.0;
};

/// stats -> support -> solve -> rasterize at the input grid -> metrics.
FitOutcome fit_scan(const GrainScan& scan, const PipelineConfig& config,
                    const DiagramParams* reference = nullptr);

/// fit_scan on the configured input, writing diagram, prediction, reports and
/// slices into the output directory.
FitOutcome cmd_fit(const PipelineConfig& config);

FitReport cmd_eval(const VolumePaths& truth, const VolumePaths& predicted);

}  // namespace grainmap
