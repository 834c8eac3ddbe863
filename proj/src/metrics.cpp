#include "grainmap/metrics.hpp"

#include "json.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace grainmap {

using nlohmann::json;

namespace {

void check_dims(const GrainScan& scan, const LabelVolume& predicted) {
  if (!(scan.dims() == predicted.dims) || predicted.labels.size() != scan.n())
    throw DataError("prediction dimensions do not match the scan");
}

std::vector<std::size_t> predicted_counts(const GrainScan& scan, const LabelVolume& predicted) {
  std::vector<std::size_t> c(scan.k() + 1, 0);
  for (Label l : predicted.labels) ++c[l <= scan.k() ? l : 0];
  return c;
}

double spectral_norm(const Mat3& M) {
  Eigen::JacobiSVD<Mat3> svd(M);
  return svd.singularValues()(0);
}

}  // namespace

double accuracy(const GrainScan& scan, const LabelVolume& predicted) {
  check_dims(scan, predicted);
  std::size_t hit = 0;
  const auto& t = scan.labels();
  for (std::size_t v = 0; v < t.size(); ++v) hit += predicted.labels[v] != 0 && predicted.labels[v] == t[v];
  return static_cast<double>(hit) / static_cast<double>(scan.n());
}

double weight_error(const GrainScan& scan, const LabelVolume& predicted) {
  check_dims(scan, predicted);
  const auto pc = predicted_counts(scan, predicted);
  std::vector<std::size_t> tc(scan.k() + 1, 0);
  for (Label l : scan.labels()) ++tc[l];
  std::size_t sum = 0;
  for (std::size_t i = 1; i <= scan.k(); ++i) sum += tc[i] > pc[i] ? tc[i] - pc[i] : pc[i] - tc[i];
  return static_cast<double>(sum) / static_cast<double>(scan.n());
}

MomentErrors moment_errors(const GrainScan& scan, const LabelVolume& predicted) {
  check_dims(scan, predicted);
  const GrainStats truth = compute_stats(scan);
  const std::size_t k = scan.k();
  std::vector<std::size_t> cnt(k, 0);
  std::vector<Vec3> sum(k, Vec3::Zero());
  for (std::size_t v = 0; v < scan.n(); ++v) {
    const Label l = predicted.labels[v];
    if (l == 0 || l > k) continue;
    ++cnt[l - 1];
    sum[l - 1] += scan.center(v);
  }
  std::vector<Vec3> mean(k);
  for (std::size_t i = 0; i < k; ++i)
    mean[i] = cnt[i] ? Vec3(sum[i] / static_cast<double>(cnt[i])) : Vec3::Zero();
  std::vector<Mat3> mom(k, Mat3::Zero());
  for (std::size_t v = 0; v < scan.n(); ++v) {
    const Label l = predicted.labels[v];
    if (l == 0 || l > k) continue;
    const Vec3 d = scan.center(v) - mean[l - 1];
    mom[l - 1].noalias() += d * d.transpose();
  }
  const Dims& dm = scan.dims();
  const Vec3 box_center(0.5 * dm.nx * scan.spacing().x(), 0.5 * dm.ny * scan.spacing().y(),
                        0.5 * dm.nz * scan.spacing().z());
  MomentErrors e;
  for (std::size_t i = 0; i < k; ++i) {
    Vec3 c = mean[i];
    Mat3 cov = Mat3::Zero();
    if (cnt[i] == 0) {
      c = box_center;
      e.empty_cells.push_back(static_cast<Label>(i + 1));
    } else {
      cov = mom[i] / static_cast<double>(cnt[i]);
    }
    const double kap = static_cast<double>(truth.kappa[i]);
    e.centroid += kap * (truth.centroid[i] - c).norm();
    e.covariance += kap * spectral_norm(truth.covariance[i] - cov);
  }
  e.centroid /= static_cast<double>(scan.n());
  e.covariance /= static_cast<double>(scan.n());
  return e;
}

double centroid_error(const GrainScan& scan, const LabelVolume& predicted) {
  return moment_errors(scan, predicted).centroid;
}

double covariance_error(const GrainScan& scan, const LabelVolume& predicted) {
  return moment_errors(scan, predicted).covariance;
}

NeighborhoodReport neighborhood_report(const GrainScan& scan, const LabelVolume& predicted) {
  check_dims(scan, predicted);
  const auto truth = compute_neighbors(scan);
  const auto pred = compute_neighbors(predicted, scan.k());
  std::size_t exact = 0, one = 0, two = 0, sup = 0;
  const std::size_t k = scan.k();
  for (std::size_t i = 0; i < k; ++i) {
    const auto& a = truth.adjacency[i];
    const auto& b = pred.adjacency[i];
    std::size_t missing = 0, extra = 0;
    for (auto x : a) missing += b.count(x) == 0;
    for (auto x : b) extra += a.count(x) == 0;
    const std::size_t diff = missing + extra;
    exact += diff == 0;
    one += diff <= 1;
    two += diff <= 2;
    sup += missing == 0;
  }
  const double f = 100.0 / static_cast<double>(k);
  return {f * static_cast<double>(exact), f * static_cast<double>(one),
          f * static_cast<double>(two), f * static_cast<double>(sup)};
}

FitReport evaluate(const GrainScan& scan, const LabelVolume& predicted) {
  FitReport r;
  r.accuracy = accuracy(scan, predicted);
  r.weight_error = weight_error(scan, predicted);
  const auto m = moment_errors(scan, predicted);
  r.centroid_error = m.centroid;
  r.covariance_error = m.covariance;
  r.empty_cells = m.empty_cells;
  r.neighborhoods = neighborhood_report(scan, predicted);
  for (Label l : predicted.labels) r.unassigned_voxels += l == 0;
  return r;
}

std::string report_json(const FitReport& r) {
  json rt = json::object();
  for (const auto& [stage, sec] : r.runtime_seconds) rt[stage] = sec;
  json j{{"accuracy", r.accuracy},
         {"weight_error", r.weight_error},
         {"centroid_error_um", r.centroid_error},
         {"covariance_error_um2", r.covariance_error},
         {"neighborhood_exact_pct", r.neighborhoods.exact},
         {"neighborhood_le1_pct", r.neighborhoods.within_one},
         {"neighborhood_le2_pct", r.neighborhoods.within_two},
         {"neighborhood_superset_pct", r.neighborhoods.superset},
         {"empty_cells", r.empty_cells},
         {"unassigned_voxels", r.unassigned_voxels},
         {"runtime_seconds", rt}};
  if (!r.extra.empty()) j["extra"] = r.extra;
  return j.dump(2);
}

std::string report_table(const FitReport& r) {
  std::ostringstream os;
  char buf[128];
  auto row = [&](const char* name, double v, const char* fmt) {
    std::snprintf(buf, sizeof buf, fmt, v);
    os << std::left;
    os.width(36);
    os << name << buf << '\n';
  };
  row("Accuracy Phi_G", r.accuracy, "%10.4f");
  row("Relative weight error Psi_G", r.weight_error, "%10.4f");
  row("Relative centroid error [um]", r.centroid_error, "%10.2f");
  row("Relative covariance error [um^2]", r.covariance_error, "%10.2f");
  row("Correct neighborhoods [%]", r.neighborhoods.exact, "%10.2f");
  row("  with at most 1 error [%]", r.neighborhoods.within_one, "%10.2f");
  row("  with at most 2 errors [%]", r.neighborhoods.within_two, "%10.2f");
  row("  all true neighbors present [%]", r.neighborhoods.superset, "%10.2f");
  double total = 0.0;
  for (const auto& [stage, sec] : r.runtime_seconds) {
    row(("Runtime " + stage + " [s]").c_str(), sec, "%10.2f");
    total += sec;
  }
  if (!r.runtime_seconds.empty()) row("Runtime total [s]", total, "%10.2f");
  if (!r.empty_cells.empty()) os << "Empty predicted cells: " << r.empty_cells.size() << '\n';
  return os.str();
}

void write_report(const FitReport& report, const std::filesystem::path& json_path) {
  std::ofstream out(json_path);
  if (!out) throw DataError("cannot write " + json_path.string());
  out << report_json(report) << '\n';
}

}  // namespace grainmap
