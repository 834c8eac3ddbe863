#include "grainmap/dilpm.hpp"

#include "grainmap/dense_simplex.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace grainmap {

Lifted lift(const Vec3& x) {
  Lifted l;
  l << 1.0, x.x(), x.y(), x.z(), x.x() * x.x(), x.x() * x.y(), x.x() * x.z(), x.y() * x.y(),
      x.y() * x.z(), x.z() * x.z();
  return l;
}

ParamVector encode(const Mat3& A, const Vec3& s, double gamma) {
  const Vec3 a = -2.0 * A * s;
  ParamVector p;
  p << s.dot(A * s) + gamma, a.x(), a.y(), a.z(), A(0, 0), A(0, 1) + A(1, 0), A(0, 2) + A(2, 0),
      A(1, 1), A(1, 2) + A(2, 1), A(2, 2);
  return p;
}

namespace {

Mat3 matrix_part(const ParamVector& p) {
  Mat3 A;
  A << p(4), 0.5 * p(5), 0.5 * p(6), 0.5 * p(5), p(7), 0.5 * p(8), 0.5 * p(6), 0.5 * p(8), p(9);
  return A;
}

// Same quadric expressed in x, where y = (x - c) / sigma.
ParamVector to_physical(const ParamVector& q, const Vec3& c, double sigma) {
  const Mat3 A = matrix_part(q) / (sigma * sigma);
  const Vec3 a1(q(1), q(2), q(3));
  const Vec3 a = -2.0 * A * c + a1 / sigma;
  ParamVector p;
  p << c.dot(A * c) - a1.dot(c) / sigma + q(0), a.x(), a.y(), a.z(), A(0, 0), 2.0 * A(0, 1),
      2.0 * A(0, 2), A(1, 1), 2.0 * A(1, 2), A(2, 2);
  return p;
}

}  // namespace

DecodedDiagram decode(const std::vector<ParamVector>& params, std::optional<double> eps_pd) {
  DecodedDiagram out;
  const std::size_t k = params.size();
  if (k == 0) return out;
  std::vector<Mat3> A(k);
  std::vector<double> traces(k);
  double min_eig = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < k; ++i) {
    A[i] = matrix_part(params[i]);
    traces[i] = std::abs(A[i].trace());
    Eigen::SelfAdjointEigenSolver<Mat3> es(A[i], Eigen::EigenvaluesOnly);
    min_eig = std::min(min_eig, es.eigenvalues()(0));
  }
  if (eps_pd) {
    out.eps_pd = *eps_pd;
  } else {
    std::nth_element(traces.begin(), traces.begin() + static_cast<std::ptrdiff_t>(k / 2), traces.end());
    const double med = traces[k / 2];
    out.eps_pd = 1e-6 * (med > 0.0 ? med : 1.0);
  }
  if (min_eig <= out.eps_pd) out.beta = out.eps_pd - min_eig;
  out.cells.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    const Mat3 Abar = A[i] + out.beta * Mat3::Identity();
    const Vec3 a(params[i](1), params[i](2), params[i](3));
    Eigen::LDLT<Mat3> ldlt(Abar);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
      throw SolverError("decode: repaired matrix of cell " + std::to_string(i + 1) + " is singular");
    const Vec3 s = -0.5 * ldlt.solve(a);
    out.cells[i] = {Abar, s, params[i](0) - s.dot(Abar * s)};
  }
  return out;
}

std::vector<Attribution> attribute_support(const GrainScan& scan,
                                           const BoundaryDistanceField& field,
                                           const ImageSupport& support) {
  const auto& labels = scan.labels();
  std::vector<Attribution> att(support.size());
  parallel_for(support.size(), 1024, [&](std::size_t begin, std::size_t end) {
    std::map<Label, std::size_t> votes;
    for (std::size_t j = begin; j < end; ++j) {
      const auto mem = support.members_of(j);
      if (mem.empty()) {
        att[j] = {support.grain[j], support.grain[j] ? BoundaryDistanceField::kInfinite : 0u};
        continue;
      }
      votes.clear();
      std::uint32_t depth = BoundaryDistanceField::kInfinite;
      for (auto v : mem) {
        ++votes[labels[v]];
        depth = std::min(depth, field.distance[v]);
      }
      Label best = 0;
      std::size_t best_n = 0;
      for (const auto& [lab, cnt] : votes)
        if (cnt > best_n) {
          best = lab;
          best_n = cnt;
        }
      att[j] = {best, votes.size() == 1 ? depth : 0u};
    }
  });
  return att;
}

std::size_t SeparationInstance::row_count() const {
  std::size_t r = 0;
  for (std::size_t j = 0; j < points.size(); ++j) r += neighbors[cell[j]].size();
  return r;
}

SeparationInstance build_instance(const GrainScan& scan, const BoundaryDistanceField& field,
                                  const NeighborGraph& graph, const ImageSupport& support,
                                  int delta, std::optional<Ring> ring, double margin) {
  if (delta < 1) throw ConfigError("DiLPM delta must be >= 1");
  if (ring && (ring->inner < 1 || ring->outer <= ring->inner))
    throw ConfigError("DiLPM ring needs 1 <= inner < outer");
  if (!(margin > 0.0)) throw ConfigError("DiLPM margin must be positive");
  const std::size_t k = scan.k();
  SeparationInstance inst;
  inst.k = k;
  inst.margin = margin;
  inst.neighbors.resize(k);
  for (std::size_t i = 0; i < k; ++i)
    inst.neighbors[i].assign(graph.adjacency[i].begin(), graph.adjacency[i].end());

  const auto att = attribute_support(scan, field, support);
  std::vector<std::size_t> strict_count(k, 0);
  for (std::size_t j = 0; j < support.size(); ++j) {
    if (att[j].grain == 0) continue;
    const std::uint32_t d = att[j].depth;
    bool strict;
    if (ring) {
      if (d >= static_cast<std::uint32_t>(ring->outer)) continue;
      strict = d >= static_cast<std::uint32_t>(ring->inner);
    } else {
      strict = d >= static_cast<std::uint32_t>(delta);
    }
    inst.points.push_back(support.points[j]);
    inst.weights.push_back(support.weights[j]);
    inst.cell.push_back(att[j].grain - 1);
    inst.strict.push_back(strict);
    if (strict) ++strict_count[att[j].grain - 1];
  }
  for (std::size_t i = 0; i < k; ++i)
    if (strict_count[i] == 0)
      inst.warnings.push_back("grain " + std::to_string(i + 1) + " has no strict points");
  return inst;
}

namespace {

struct RowRef {
  std::uint32_t point;
  std::uint32_t other;  // neighbor grain l
};

}  // namespace

DilpmSolution solve_dilpm(const SeparationInstance& inst, const DilpmOptions& opt) {
  const std::size_t k = inst.k;
  const std::size_t n = inst.size();
  if (k < 2) throw ConfigError("DiLPM: k >= 2 required");
  if (n == 0) throw DataError("DiLPM: empty instance");
  const double margin = inst.margin;

  // Normalize coordinates to [-1, 1]^3 for conditioning.
  Vec3 lo = inst.points[0], hi = inst.points[0];
  for (const auto& x : inst.points) {
    lo = lo.cwiseMin(x);
    hi = hi.cwiseMax(x);
  }
  const Vec3 center = 0.5 * (lo + hi);
  const double sigma = std::max(0.5 * (hi - lo).maxCoeff(), 1e-12);
  std::vector<Lifted> L(n);
  for (std::size_t j = 0; j < n; ++j) L[j] = lift((inst.points[j] - center) / sigma);

  // Row enumeration: point j gets one row per neighbor of its grain.
  std::vector<std::size_t> row_start(n + 1, 0);
  for (std::size_t j = 0; j < n; ++j) row_start[j + 1] = row_start[j] + inst.neighbors[inst.cell[j]].size();
  const std::size_t R = row_start[n];
  std::vector<RowRef> rows(R);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t t = 0; t < inst.neighbors[inst.cell[j]].size(); ++t)
      rows[row_start[j] + t] = {static_cast<std::uint32_t>(j), inst.neighbors[inst.cell[j]][t]};

  // Ordered pair (i, l) -> dense id.
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::size_t> pair_id;
  for (std::size_t i = 0; i < k; ++i)
    for (auto l : inst.neighbors[i]) pair_id.emplace(std::make_pair(static_cast<std::uint32_t>(i), l), pair_id.size());
  std::vector<std::size_t> row_pair(R);
  for (std::size_t r = 0; r < R; ++r)
    row_pair[r] = pair_id.at({inst.cell[rows[r].point], rows[r].other});

  std::vector<char> active(R, 0);
  std::vector<std::size_t> active_list;

  // Seeds: for each ordered pair, the points of i closest to the centroid of l.
  {
    std::vector<Vec3> centroid(k, Vec3::Zero());
    std::vector<double> mass(k, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      centroid[inst.cell[j]] += inst.weights[j] * inst.points[j];
      mass[inst.cell[j]] += inst.weights[j];
    }
    for (std::size_t i = 0; i < k; ++i)
      if (mass[i] > 0.0) centroid[i] /= mass[i];
    std::vector<std::vector<std::pair<double, std::size_t>>> per_pair(pair_id.size());
    for (std::size_t r = 0; r < R; ++r) {
      const double d = (inst.points[rows[r].point] - centroid[rows[r].other]).squaredNorm();
      per_pair[row_pair[r]].push_back({d, r});
    }
    for (auto& v : per_pair) {
      const std::size_t q = std::min<std::size_t>(v.size(), static_cast<std::size_t>(opt.seeds_per_pair));
      std::partial_sort(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(q), v.end());
      for (std::size_t t = 0; t < q; ++t) {
        active[v[t].second] = 1;
        active_list.push_back(v[t].second);
      }
    }
  }

  DilpmSolution sol;
  std::vector<double> p(10 * k, 0.0);
  std::vector<double> value(R);
  std::vector<double> zeta_lp(n);
  const double tol = opt.tolerance * margin;
  const double mean_weight =
      std::accumulate(inst.weights.begin(), inst.weights.end(), 0.0) / static_cast<double>(n);

  auto row_value = [&](std::size_t r) {
    const std::size_t j = rows[r].point;
    const std::size_t i = inst.cell[j];
    const std::size_t l = rows[r].other;
    double v = 0.0;
    for (int c = 0; c < 10; ++c) v += (p[10 * i + c] - p[10 * l + c]) * L[j](c);
    return v;
  };

  for (;;) {
    if (sol.rounds >= static_cast<std::size_t>(opt.max_rounds))
      throw SolverError("DiLPM: cutting-plane loop did not converge");
    ++sol.rounds;
    std::sort(active_list.begin(), active_list.end());

    // Dual of the restricted problem:
    //   min -b^T u  s.t.  G^T u = 0,  sum_{rows of soft j} u + t_j = w_j,  u, t >= 0.
    std::vector<std::size_t> soft_rows(n, 0);
    for (auto r : active_list)
      if (!inst.strict[rows[r].point]) ++soft_rows[rows[r].point];
    std::vector<int> gub(n, -1);
    int m = static_cast<int>(10 * k);
    for (std::size_t j = 0; j < n; ++j)
      if (soft_rows[j] >= 2) gub[j] = m++;
    DenseSimplex lp(m);
    for (std::size_t j = 0; j < n; ++j)
      if (gub[j] >= 0) lp.set_rhs(gub[j], inst.weights[j]);
    for (auto r : active_list) {
      const std::size_t j = rows[r].point;
      const int i = static_cast<int>(inst.cell[j]);
      const int l = static_cast<int>(rows[r].other);
      std::vector<DenseSimplex::Entry> e;
      e.reserve(21);
      for (int c = 0; c < 10; ++c) {
        if (L[j](c) == 0.0) continue;
        e.push_back({10 * i + c, L[j](c)});
        e.push_back({10 * l + c, -L[j](c)});
      }
      const bool strict = inst.strict[j];
      double hi_bound = DenseSimplex::kInf;
      if (!strict && gub[j] >= 0) e.push_back({gub[j], 1.0});
      if (!strict && gub[j] < 0) hi_bound = inst.weights[j];
      lp.add_column(strict ? -margin : 0.0, 0.0, hi_bound, std::move(e));
    }
    for (std::size_t j = 0; j < n; ++j)
      if (gub[j] >= 0) lp.add_column(0.0, 0.0, DenseSimplex::kInf, {{gub[j], 1.0}});
    // Boxed slack per parameter row: eps |p|_1 in the primal.
    const double eps = opt.regularization * mean_weight;
    for (int c = 0; c < static_cast<int>(10 * k); ++c) lp.add_column(0.0, -eps, eps, {{c, 1.0}});

    DenseSimplex::Options lpo;
    lpo.feas_tol = 1e-6 * eps;
    const auto status = lp.solve(lpo);
    sol.lp_iterations += lp.iterations();
    if (status == DenseSimplex::Status::Unbounded) {
      // Improving ray of the dual = certificate that the strict rows conflict.
      const auto& ray = lp.ray();
      std::size_t best = active_list.front();
      double best_v = -1.0;
      for (std::size_t c = 0; c < active_list.size(); ++c) {
        const std::size_t r = active_list[c];
        if (inst.strict[rows[r].point] && ray[c] > best_v) {
          best_v = ray[c];
          best = r;
        }
      }
      throw SolverError("DiLPM: strict constraints infeasible (grain pair " +
                        std::to_string(inst.cell[rows[best].point] + 1) + ", " +
                        std::to_string(rows[best].other + 1) + ")");
    }
    if (status != DenseSimplex::Status::Optimal)
      throw SolverError("DiLPM: restricted LP failed");
    const auto& y = lp.duals();
    for (std::size_t c = 0; c < 10 * k; ++c) p[c] = y[c];

    // Separation over all rows.
    parallel_for(R, 8192, [&](std::size_t begin, std::size_t end) {
      for (std::size_t r = begin; r < end; ++r) value[r] = row_value(r);
    });
    std::fill(zeta_lp.begin(), zeta_lp.end(), 0.0);
    for (auto r : active_list) {
      const std::size_t j = rows[r].point;
      if (!inst.strict[j]) zeta_lp[j] = std::max(zeta_lp[j], value[r]);
    }
    std::vector<std::vector<std::pair<double, std::size_t>>> viol(pair_id.size());
    for (std::size_t r = 0; r < R; ++r) {
      if (active[r]) continue;
      const std::size_t j = rows[r].point;
      const double v = inst.strict[j] ? value[r] + margin : value[r] - zeta_lp[j];
      if (v > tol) viol[row_pair[r]].push_back({-v, r});
    }
    std::size_t added = 0;
    for (auto& v : viol) {
      const std::size_t q = std::min<std::size_t>(v.size(), static_cast<std::size_t>(opt.rows_per_pair));
      std::partial_sort(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(q), v.end());
      for (std::size_t t = 0; t < q; ++t) {
        active[v[t].second] = 1;
        active_list.push_back(v[t].second);
        ++added;
      }
    }
    if (added == 0) break;
  }

  // Slacks and objective from the final parameters over every row.
  sol.slack.assign(n, 0.0);
  for (std::size_t r = 0; r < R; ++r) {
    const std::size_t j = rows[r].point;
    if (!inst.strict[j]) sol.slack[j] = std::max(sol.slack[j], value[r]);
  }
  sol.objective = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (sol.slack[j] <= tol) sol.slack[j] = 0.0;
    sol.objective += inst.weights[j] * sol.slack[j];
  }
  sol.rows_used = active_list.size();

  // Canonical representative: parameters only matter up to a common additive
  // vector, which is removed here.
  ParamVector mean = ParamVector::Zero();
  sol.params.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    for (int c = 0; c < 10; ++c) sol.params[i](c) = p[10 * i + c];
    mean += sol.params[i];
  }
  mean /= static_cast<double>(k);
  for (auto& q : sol.params) q = to_physical(q - mean, center, sigma);
  return sol;
}

DilpmFit fit_dilpm(const GrainScan& scan, const DilpmFitOptions& options) {
  if (scan.k() < 2) throw ConfigError("DiLPM: k >= 2 required");
  const auto stats = compute_stats(scan);
  const auto field = compute_boundary_distance(scan);
  const auto graph = compute_neighbors(scan);
  const auto support = combined_support(scan, stats, options.support, &field);
  const auto inst = build_instance(scan, field, graph, support, options.delta, options.ring,
                                   options.margin);
  DilpmFit fit;
  fit.warnings = inst.warnings;
  for (bool s : inst.strict) (s ? fit.strict_points : fit.soft_points)++;
  fit.solution = solve_dilpm(inst, options.solver);
  auto decoded = decode(fit.solution.params);
  fit.beta = decoded.beta;
  fit.diagram = DiagramParams(std::move(decoded.cells));
  return fit;
}

}  // namespace grainmap
