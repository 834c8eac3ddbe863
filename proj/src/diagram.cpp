#include "grainmap/diagram.hpp"

#include "json.hpp"

#include <algorithm>
#include <fstream>
#include <cmath>
#include <tuple>

namespace grainmap {

using nlohmann::json;

bool is_spd(const Mat3& A) {
  if (!A.allFinite()) return false;
  const double norm = A.norm();
  if (norm == 0.0) return false;
  if ((A - A.transpose()).norm() > 1e-12 * norm) return false;
  Eigen::SelfAdjointEigenSolver<Mat3> es(A, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0) > 1e-12 * norm;
}

DiagramParams::DiagramParams(std::vector<Cell> cells) : cells_(std::move(cells)) {
  for (std::size_t i = 0; i < cells_.size(); ++i) {
    if (!is_spd(cells_[i].A))
      throw DataError("cell " + std::to_string(i + 1) + ": matrix is not symmetric positive definite");
    if (!cells_[i].site.allFinite() || !std::isfinite(cells_[i].gamma))
      throw DataError("cell " + std::to_string(i + 1) + ": non-finite parameters");
  }
  std::vector<std::size_t> order(cells_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  auto lex = [&](std::size_t a, std::size_t b) {
    const auto& p = cells_[a].site;
    const auto& q = cells_[b].site;
    return std::tie(p.x(), p.y(), p.z()) < std::tie(q.x(), q.y(), q.z());
  };
  std::sort(order.begin(), order.end(), lex);
  for (std::size_t i = 1; i < order.size(); ++i)
    if (cells_[order[i]].site == cells_[order[i - 1]].site)
      throw DataError("duplicate sites for cells " + std::to_string(order[i - 1] + 1) + " and " +
                      std::to_string(order[i] + 1));
}

DiagramParams voronoi(const std::vector<Vec3>& sites) {
  return power(sites, std::vector<double>(sites.size(), 0.0));
}

DiagramParams power(const std::vector<Vec3>& sites, const std::vector<double>& gammas) {
  if (sites.size() != gammas.size()) throw DataError("sites and gammas differ in length");
  std::vector<Cell> cells(sites.size());
  for (std::size_t i = 0; i < sites.size(); ++i) cells[i] = {Mat3::Identity(), sites[i], gammas[i]};
  return DiagramParams(std::move(cells));
}

ClassificationResult classify(const DiagramParams& params, const Vec3& x, double tie_tol) {
  ClassificationResult r;
  double best = std::numeric_limits<double>::infinity();
  double second = std::numeric_limits<double>::infinity();
  std::size_t arg = 0;
  for (std::size_t i = 0; i < params.k(); ++i) {
    const double h = h_value(params.cell(i), x);
    if (h < best) {
      second = best;
      best = h;
      arg = i;
    } else if (h < second) {
      second = h;
    }
  }
  if (params.k() == 0) return r;
  r.margin = second - best;
  r.label = r.margin > tie_tol ? static_cast<Label>(arg + 1) : 0;
  return r;
}

double default_tie_tolerance(const DiagramParams& params, const Dims& dims, const Vec3& spacing) {
  if (params.k() == 0) return 0.0;
  const Vec3 extent(dims.nx * spacing.x(), dims.ny * spacing.y(), dims.nz * spacing.z());
  const double r2 = 0.25 * extent.squaredNorm();
  std::vector<double> scale(params.k());
  for (std::size_t i = 0; i < params.k(); ++i) {
    Eigen::SelfAdjointEigenSolver<Mat3> es(params.cell(i).A, Eigen::EigenvaluesOnly);
    scale[i] = std::abs(params.cell(i).gamma) + es.eigenvalues()(2) * r2;
  }
  std::nth_element(scale.begin(), scale.begin() + scale.size() / 2, scale.end());
  return 1e-9 * scale[scale.size() / 2];
}

LabelVolume rasterize(const DiagramParams& params, const Dims& dims, const Vec3& spacing,
                      double tie_tol, TieRule rule) {
  LabelVolume v;
  v.dims = dims;
  v.spacing = spacing;
  v.labels.assign(dims.count(), 0);
  parallel_for(v.labels.size(), 4096, [&](std::size_t begin, std::size_t end) {
    for (std::size_t idx = begin; idx < end; ++idx) {
      const auto r = classify(params, v.center(idx), rule == TieRule::LowestIndex ? -1.0 : tie_tol);
      v.labels[idx] = r.label;
    }
  });
  return v;
}

void write_diagram_json(const DiagramParams& params, const std::filesystem::path& path) {
  json cells = json::array();
  for (const auto& c : params.cells()) {
    json a = json::array();
    for (int r = 0; r < 3; ++r)
      for (int col = 0; col < 3; ++col) a.push_back(c.A(r, col));
    cells.push_back({{"A", a}, {"s", {c.site.x(), c.site.y(), c.site.z()}}, {"gamma", c.gamma}});
  }
  json j{{"k", params.k()}, {"cells", cells}};
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

DiagramParams read_diagram_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::vector<Cell> cells;
  try {
    json j;
    in >> j;
    for (const auto& c : j.at("cells")) {
      const auto a = c.at("A").get<std::vector<double>>();
      const auto s = c.at("s").get<std::vector<double>>();
      if (a.size() != 9 || s.size() != 3) throw DataError("bad cell entry in " + path.string());
      Cell cell;
      for (int r = 0; r < 3; ++r)
        for (int col = 0; col < 3; ++col) cell.A(r, col) = a[r * 3 + col];
      cell.site = {s[0], s[1], s[2]};
      cell.gamma = c.at("gamma").get<double>();
      cells.push_back(cell);
    }
  } catch (const json::exception& e) {
    throw DataError("invalid diagram file " + path.string() + ": " + e.what());
  }
  return DiagramParams(std::move(cells));
}

}  // namespace grainmap
