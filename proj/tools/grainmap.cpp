// grainmap: grain scans to anisotropic power diagrams.

#include "grainmap/pipeline.hpp"

#include "CLI11.hpp"

#include <iostream>

namespace fs = std::filesystem;
using namespace grainmap;

namespace {

Dims to_dims(const std::vector<int>& v) {
  if (v.size() != 3) throw ConfigError("dims need three integers");
  return {v[0], v[1], v[2]};
}

Vec3 to_vec(const std::vector<double>& v) {
  if (v.size() == 1) return Vec3::Constant(v[0]);
  if (v.size() != 3) throw ConfigError("spacing needs one or three values");
  return {v[0], v[1], v[2]};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fit anisotropic power diagrams to voxel grain scans"};
  app.require_subcommand(1);
  app.fallthrough();
  unsigned threads = 0;
  std::string config_path;
  std::string out;
  std::uint64_t seed = 1;
  bool seed_given = false;
  app.add_option("--threads", threads, "worker threads (0 = all cores)");
  app.add_option("--config", config_path, "JSON pipeline config");
  app.add_option("--out", out, "output prefix or directory");
  app.add_option_function<std::uint64_t>(
      "--seed", [&](std::uint64_t s) { seed = s; seed_given = true; }, "random seed (synth)");

  auto* synth = app.add_subcommand("synth", "generate a scan from a random diagram");
  int k = 20;
  std::vector<int> dims{64, 64, 64};
  std::vector<double> spacing{1.0};
  synth->add_option("--k", k, "number of cells");
  synth->add_option("--dims", dims, "nx ny nz")->expected(3);
  synth->add_option("--spacing", spacing, "voxel edge length(s) in um")->expected(1, 3);

  auto* stats = app.add_subcommand("stats", "per-grain statistics as JSON");
  std::string scan_prefix;
  stats->add_option("scan", scan_prefix, "volume prefix (<prefix>.json + <prefix>.raw)")->required();

  auto* fit = app.add_subcommand("fit", "fit a diagram (uses --config)");

  auto* rast = app.add_subcommand("rasterize", "rasterize a diagram file");
  std::string diagram_path;
  double tie_tol = -1.0;
  rast->add_option("diagram", diagram_path, "diagram JSON")->required();
  rast->add_option("--dims", dims, "nx ny nz")->expected(3);
  rast->add_option("--spacing", spacing, "voxel edge length(s) in um")->expected(1, 3);
  rast->add_option("--tie-tol", tie_tol, "tie tolerance (default: relative)");

  auto* eval = app.add_subcommand("eval", "compare a prediction with the ground truth");
  std::string truth_prefix, pred_prefix;
  eval->add_option("truth", truth_prefix, "ground-truth volume prefix")->required();
  eval->add_option("predicted", pred_prefix, "predicted volume prefix")->required();

  auto* slice = app.add_subcommand("slice", "export one slice as PPM");
  std::string axis = "z";
  int index = 0;
  slice->add_option("scan", scan_prefix, "volume prefix")->required();
  slice->add_option("--axis", axis, "x, y or z");
  slice->add_option("--index", index, "slice index")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    set_thread_count(threads);
    if (*synth) {
      SynthOptions o;
      o.k = k;
      o.dims = to_dims(dims);
      o.spacing = to_vec(spacing);
      o.seed = seed;
      const auto r = synthesize(o);
      const fs::path prefix = out.empty() ? fs::path("synth") : fs::path(out);
      if (prefix.has_parent_path()) fs::create_directories(prefix.parent_path());
      const auto p = VolumePaths::from_prefix(prefix);
      save_scan(r.scan, p.header, p.data);
      fs::path dpath = prefix;
      dpath += "_diagram.json";
      write_diagram_json(r.truth, dpath);
      std::cout << "wrote " << p.header.string() << ", " << p.data.string() << ", " << dpath.string()
                << " (attempts " << r.attempts << ")\n";
    } else if (*stats) {
      const auto p = VolumePaths::from_prefix(scan_prefix);
      const auto scan = load_scan(p.header, p.data);
      const auto s = compute_stats(scan);
      const fs::path target = out.empty() ? fs::path(scan_prefix + "_stats.json") : fs::path(out);
      write_stats_json(s, target);
      std::cout << "wrote " << target.string() << '\n';
    } else if (*fit) {
      if (config_path.empty()) throw ConfigError("fit requires --config");
      auto cfg = read_config(config_path);
      if (!out.empty()) cfg.output_dir = out;
      if (seed_given) cfg.seed = seed;
      const auto r = cmd_fit(cfg);
      std::cout << report_table(r.report);
      std::cout << "outputs in " << cfg.output_dir.string() << '\n';
    } else if (*rast) {
      const auto d = read_diagram_json(diagram_path);
      const Dims dm = to_dims(dims);
      const Vec3 sp = to_vec(spacing);
      const double tol = tie_tol >= 0.0 ? tie_tol : default_tie_tolerance(d, dm, sp);
      const auto vol = rasterize(d, dm, sp, tol);
      const auto p = VolumePaths::from_prefix(out.empty() ? fs::path("rasterized") : fs::path(out));
      save_labels(vol, static_cast<Label>(d.k()), p.header, p.data);
      std::cout << "wrote " << p.header.string() << ", " << p.data.string() << '\n';
    } else if (*eval) {
      const auto r = cmd_eval(VolumePaths::from_prefix(truth_prefix), VolumePaths::from_prefix(pred_prefix));
      std::cout << report_table(r);
      if (!out.empty()) write_report(r, out);
    } else if (*slice) {
      const auto p = VolumePaths::from_prefix(scan_prefix);
      std::optional<Label> hk;
      const auto vol = load_labels(p.header, p.data, &hk);
      const fs::path target = out.empty() ? fs::path(scan_prefix + "_slice.ppm") : fs::path(out);
      export_slice(vol, parse_axis(axis), index, target);
      std::cout << "wrote " << target.string() << '\n';
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const SolverError& e) {
    std::cerr << "solver error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
