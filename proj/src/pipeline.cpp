#include "grainmap/pipeline.hpp"

#include "json.hpp"

#include <chrono>
#include <fstream>
#include <random>

namespace grainmap {

using nlohmann::json;
namespace fs = std::filesystem;

VolumePaths VolumePaths::from_prefix(const fs::path& prefix) {
  VolumePaths p;
  p.header = prefix;
  p.header += ".json";
  p.data = prefix;
  p.data += ".raw";
  return p;
}

SynthResult synthesize(const SynthOptions& o) {
  if (o.k < 2) throw ConfigError("synth: k >= 2 required");
  if (o.dims.nx <= 0 || o.dims.ny <= 0 || o.dims.nz <= 0) throw ConfigError("synth: dims must be positive");
  if (!(o.spacing.minCoeff() > 0.0)) throw ConfigError("synth: spacing must be positive");
  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const Vec3 extent(o.dims.nx * o.spacing.x(), o.dims.ny * o.spacing.y(), o.dims.nz * o.spacing.z());

  for (int attempt = 1; attempt <= o.max_attempts; ++attempt) {
    std::vector<Cell> cells(static_cast<std::size_t>(o.k));
    for (auto& c : cells) {
      c.site = Vec3(unit(rng) * extent.x(), unit(rng) * extent.y(), unit(rng) * extent.z());
      Vec3 ev(1.0 + 9.0 * unit(rng), 1.0 + 9.0 * unit(rng), 1.0 + 9.0 * unit(rng));
      ev /= std::cbrt(ev.prod());
      Eigen::Quaterniond q(gauss(rng), gauss(rng), gauss(rng), gauss(rng));
      q.normalize();
      const Mat3 R = q.toRotationMatrix();
      const Mat3 A = R * ev.asDiagonal() * R.transpose();
      c.A = 0.5 * (A + A.transpose());
      c.gamma = 0.0;
    }
    DiagramParams truth(std::move(cells));
    LabelVolume vol = rasterize(truth, o.dims, o.spacing, 0.0, TieRule::LowestIndex);
    std::vector<std::size_t> count(static_cast<std::size_t>(o.k) + 1, 0);
    for (Label l : vol.labels) ++count[l];
    bool all = true;
    for (int i = 1; i <= o.k; ++i) all = all && count[static_cast<std::size_t>(i)] > 0;
    if (!all) continue;
    return {GrainScan::from_volume(std::move(vol), static_cast<Label>(o.k)), std::move(truth), attempt};
  }
  throw DataError("synth: some cell stayed empty after " + std::to_string(o.max_attempts) +
                  " attempts (reduce k or enlarge the volume)");
}

namespace {

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path q(p);
  return q.is_absolute() ? q : base / q;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

PipelineConfig read_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  PipelineConfig c;
  try {
    json j;
    in >> j;
    if (!j.contains("schema_version")) throw ConfigError("config: missing schema_version");
    if (j.at("schema_version").get<int>() != kSchemaVersion)
      throw ConfigError("config: unsupported schema_version");
    const fs::path base = path.parent_path();
    const auto& input = j.at("input");
    if (input.is_string()) {
      c.input = VolumePaths::from_prefix(resolve(base, input.get<std::string>()));
    } else {
      c.input.header = resolve(base, input.at("header").get<std::string>());
      c.input.data = resolve(base, input.at("data").get<std::string>());
    }
    if (j.contains("support")) {
      const auto& s = j.at("support");
      const std::string kind = get_or<std::string>(s, "strategy", "none");
      if (kind == "none") {
        c.support.kind = SupportKind::None;
      } else if (kind == "pencil") {
        c.support.kind = SupportKind::Pencil;
        c.support.pencil.rays_per_site = get_or(s, "rays", 64);
        c.support.pencil.batch_error = get_or(s, "batch_error", 1.0);
        c.support.pencil.ellipsoidal = get_or(s, "ellipsoidal", true);
      } else if (kind == "resolution") {
        c.support.kind = SupportKind::Resolution;
        if (s.contains("tau")) {
          const auto t = s.at("tau").get<std::vector<int>>();
          if (t.size() != 3) throw ConfigError("config: tau needs three components");
          c.support.tau = {t[0], t[1], t[2]};
        } else if (s.contains("eps")) {
          c.tau_eps = s.at("eps").get<double>();
        } else {
          throw ConfigError("config: resolution strategy needs tau or eps");
        }
      } else {
        throw ConfigError("config: unknown support strategy '" + kind + "'");
      }
      if (s.contains("interior_delta")) c.support.interior_delta = s.at("interior_delta").get<int>();
    }
    const std::string method = get_or<std::string>(j, "method", "sgbpd");
    if (method == "sgbpd") {
      c.method = FitMethod::Sgbpd;
    } else if (method == "dilpm") {
      c.method = FitMethod::Dilpm;
    } else {
      throw ConfigError("config: unknown method '" + method + "'");
    }
    if (j.contains("sgbpd")) {
      const auto& s = j.at("sgbpd");
      c.candidates = get_or(s, "candidates", 8);
      if (s.contains("reference_diagram"))
        c.reference_diagram = resolve(base, s.at("reference_diagram").get<std::string>());
    }
    if (j.contains("dilpm")) {
      const auto& d = j.at("dilpm");
      c.dilpm_delta = get_or(d, "delta", 2);
      c.dilpm_margin = get_or(d, "margin", 1.0);
      if (d.contains("ring")) {
        const auto r = d.at("ring").get<std::vector<int>>();
        if (r.size() != 2) throw ConfigError("config: ring needs [inner, outer]");
        c.dilpm_ring = Ring{r[0], r[1]};
      }
    }
    if (j.contains("tie_tolerance") && !j.at("tie_tolerance").is_null())
      c.tie_tolerance = j.at("tie_tolerance").get<double>();
    if (j.contains("output_dir")) c.output_dir = resolve(base, j.at("output_dir").get<std::string>());
    c.seed = get_or<std::uint64_t>(j, "seed", 1);
    c.write_slices = get_or(j, "write_slices", true);
  } catch (const json::exception& e) {
    throw ConfigError("invalid config " + path.string() + ": " + e.what());
  }
  if (c.candidates < 1) throw ConfigError("config: candidates must be >= 1");
  return c;
}

FitOutcome fit_scan(const GrainScan& scan, const PipelineConfig& config, const DiagramParams* reference) {
  using clock = std::chrono::steady_clock;
  FitOutcome out;
  auto& rt = out.report.runtime_seconds;

  auto t0 = clock::now();
  const GrainStats stats = compute_stats(scan);
  std::optional<BoundaryDistanceField> field;
  if (config.support.interior_delta || config.method == FitMethod::Dilpm)
    field = compute_boundary_distance(scan);
  rt.emplace_back("stats", seconds_since(t0));

  SupportStrategy strategy = config.support;
  if (strategy.kind == SupportKind::Resolution && config.tau_eps) {
    const long long t = advisory_tau(scan.k(), *config.tau_eps);
    for (int a = 0; a < 3; ++a) strategy.tau[a] = static_cast<int>(std::min<long long>(t, scan.dims()[a]));
  }

  DiagramParams diagram;
  if (config.method == FitMethod::Sgbpd) {
    t0 = clock::now();
    const ImageSupport support = combined_support(scan, stats, strategy, field ? &*field : nullptr);
    out.support_size = support.size();
    out.support_weight = support.total_weight();
    rt.emplace_back("support", seconds_since(t0));

    CellModel model = model_from_stats(stats);
    if (reference) {
      if (reference->k() != scan.k()) throw DataError("reference diagram has a different cell count");
      for (std::size_t i = 0; i < scan.k(); ++i) {
        model.A[i] = reference->cell(i).A;
        model.sites[i] = reference->cell(i).site;
      }
    }
    t0 = clock::now();
    WcaaOptions wo;
    wo.candidates = config.candidates;
    const WcaaResult res = solve_wcaa(support, model, wo);
    rt.emplace_back("solve", seconds_since(t0));
    diagram = diagram_from_duals(model, res.duals);
    out.report.extra["objective"] = res.objective;
    out.report.extra["dual_objective"] = res.dual_objective;
    out.report.extra["fractional_points"] = static_cast<double>(res.clustering.fractional_points());
    out.report.extra["support_points"] = static_cast<double>(support.size());
  } else {
    t0 = clock::now();
    const NeighborGraph graph = compute_neighbors(scan);
    const ImageSupport support = combined_support(scan, stats, strategy, &*field);
    out.support_size = support.size();
    out.support_weight = support.total_weight();
    const SeparationInstance inst = build_instance(scan, *field, graph, support, config.dilpm_delta,
                                                   config.dilpm_ring, config.dilpm_margin);
    rt.emplace_back("support", seconds_since(t0));
    if (scan.k() < 2) throw ConfigError("DiLPM: k >= 2 required");
    t0 = clock::now();
    const DilpmSolution sol = solve_dilpm(inst);
    auto decoded = decode(sol.params);
    rt.emplace_back("solve", seconds_since(t0));
    diagram = DiagramParams(std::move(decoded.cells));
    out.report.extra["objective"] = sol.objective;
    out.report.extra["beta"] = decoded.beta;
    out.report.extra["rounds"] = static_cast<double>(sol.rounds);
    out.report.extra["rows_used"] = static_cast<double>(sol.rows_used);
    out.report.extra["support_points"] = static_cast<double>(inst.size());
  }

  t0 = clock::now();
  const double tie = config.tie_tolerance ? *config.tie_tolerance
                                          : default_tie_tolerance(diagram, scan.dims(), scan.spacing());
  out.predicted = rasterize(diagram, scan.dims(), scan.spacing(), tie);
  rt.emplace_back("rasterize", seconds_since(t0));

  t0 = clock::now();
  auto timings = std::move(rt);
  auto extra = std::move(out.report.extra);
  out.report = evaluate(scan, out.predicted);
  out.report.runtime_seconds = std::move(timings);
  out.report.extra = std::move(extra);
  out.report.runtime_seconds.emplace_back("metrics", seconds_since(t0));
  out.diagram = std::move(diagram);
  return out;
}

FitOutcome cmd_fit(const PipelineConfig& config) {
  const GrainScan scan = load_scan(config.input.header, config.input.data);
  std::optional<DiagramParams> reference;
  if (config.reference_diagram) reference = read_diagram_json(*config.reference_diagram);
  FitOutcome out = fit_scan(scan, config, reference ? &*reference : nullptr);

  fs::create_directories(config.output_dir);
  const fs::path dir = config.output_dir;
  write_diagram_json(out.diagram, dir / "diagram.json");
  const auto pred = VolumePaths::from_prefix(dir / "predicted");
  save_labels(out.predicted, static_cast<Label>(scan.k()), pred.header, pred.data);
  FitReport metrics_only = out.report;
  metrics_only.runtime_seconds.clear();
  write_report(metrics_only, dir / "metrics.json");
  write_report(out.report, dir / "report.json");
  {
    std::ofstream txt(dir / "report.txt");
    txt << report_table(out.report);
  }
  if (config.write_slices) {
    const int z = scan.dims().nz / 2;
    export_slice(out.predicted, Axis::Z, z, dir / "slice_predicted_z.ppm");
    export_slice(scan.volume(), Axis::Z, z, dir / "slice_truth_z.ppm");
  }
  return out;
}

FitReport cmd_eval(const VolumePaths& truth, const VolumePaths& predicted) {
  const GrainScan scan = load_scan(truth.header, truth.data);
  const LabelVolume pred = load_labels(predicted.header, predicted.data);
  return evaluate(scan, pred);
}

}  // namespace grainmap
