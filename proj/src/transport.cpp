#include "grainmap/transport.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

namespace grainmap {

using nlohmann::json;

CellModel model_from_stats(const GrainStats& stats) {
  CellModel m;
  m.A = stats.precision;
  m.sites = stats.centroid;
  m.kappa.assign(stats.kappa.begin(), stats.kappa.end());
  return m;
}

std::size_t Clustering::fractional_points() const {
  std::size_t count = 0;
  for (std::size_t e = 0; e < entries.size();) {
    std::size_t f = e;
    while (f < entries.size() && entries[f].point == entries[e].point) ++f;
    if (f - e >= 2) ++count;
    e = f;
  }
  return count;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Spanning-tree network simplex on the bipartite graph
//   sources 0..n-1 (supply w_j) -> sinks n..n+k-1 (demand kappa_i),
// plus a root R = n+k joined to every node by an artificial arc (j -> R with
// cost 0, R -> i with a big cost). Arc orientation follows the node type: the
// tree arc stored at a source always points to its parent, the one stored at a
// sink always comes from its parent.
class TransportSimplex {
 public:
  TransportSimplex(const ImageSupport& support, const CellModel& model,
                   const std::vector<double>& kappa, double max_cost, std::size_t stall,
                   std::size_t max_pivots)
      : support_(support),
        model_(model),
        n_(support.size()),
        k_(model.k()),
        root_(n_ + k_),
        stall_threshold_(stall),
        max_pivots_(max_pivots) {
    eps_ = 1e-9 * (max_cost + 1.0);
    art_ = (2.0 * static_cast<double>(k_) + 2.0) * (max_cost + 1.0);
    parent_.assign(n_ + k_ + 1, root_);
    cost_.assign(n_ + k_ + 1, 0.0);
    flow_.assign(n_ + k_ + 1, 0.0);
    for (std::size_t j = 0; j < n_; ++j) flow_[j] = support.weights[j];
    for (std::size_t i = 0; i < k_; ++i) {
      cost_[n_ + i] = art_;
      flow_[n_ + i] = kappa[i];
    }
    sink_pot_.assign(k_, 0.0);
    stamp_.assign(n_ + k_ + 1, 0);
    refresh_potentials();
  }

  /// Replaces the priced arc set: for point j, sinks cand[j*m .. j*m+m).
  void set_candidates(std::vector<std::uint32_t> sinks, std::vector<double> costs, std::size_t m) {
    cand_sink_ = std::move(sinks);
    cand_cost_ = std::move(costs);
    m_ = m;
    const std::size_t arcs = cand_sink_.size();
    block_ = std::max<std::size_t>(10, static_cast<std::size_t>(std::sqrt(static_cast<double>(arcs))));
    next_arc_ = 0;
  }

  /// Pivots until no candidate arc has reduced cost below -eps.
  void optimize() {
    const std::size_t arcs = cand_sink_.size();
    if (arcs == 0) return;
    for (;;) {
      const std::size_t in = bland_ ? first_eligible() : block_search();
      if (in == kNone) return;
      if (pivots_ >= max_pivots_)
        throw SolverError("transport simplex did not converge within " +
                          std::to_string(max_pivots_) + " pivots");
      pivot(in);
      ++pivots_;
    }
  }

  double source_pot(std::size_t j) const {
    const std::size_t p = parent_[j];
    return (p == root_ ? 0.0 : sink_pot_[p - n_]) - cost_[j];
  }
  double sink_pot(std::size_t i) const { return sink_pot_[i]; }
  double reduced_cost(std::size_t j, std::size_t i, double c) const {
    return c + source_pot(j) - sink_pot_[i];
  }
  double eps() const { return eps_; }
  std::size_t pivots() const { return pivots_; }

  // Tree access for extraction.
  std::size_t parent(std::size_t u) const { return parent_[u]; }
  double flow(std::size_t u) const { return flow_[u]; }
  std::size_t root() const { return root_; }

 private:
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

  double arc_rc(std::size_t a) const {
    return reduced_cost(a / m_, cand_sink_[a], cand_cost_[a]);
  }

  std::size_t block_search() {
    const std::size_t arcs = cand_sink_.size();
    std::size_t best = kNone;
    double best_rc = -eps_;
    std::size_t cnt = block_;
    std::size_t a = next_arc_;
    for (std::size_t seen = 0; seen < arcs; ++seen) {
      const double rc = arc_rc(a);
      if (rc < best_rc || (rc == best_rc && best != kNone && a < best)) {
        best_rc = rc;
        best = a;
      }
      if (++a == arcs) a = 0;
      if (--cnt == 0) {
        if (best != kNone) break;
        cnt = block_;
      }
    }
    if (best != kNone) next_arc_ = a;
    return best;
  }

  std::size_t first_eligible() const {
    for (std::size_t a = 0; a < cand_sink_.size(); ++a)
      if (arc_rc(a) < -eps_) return a;
    return kNone;
  }

  void refresh_potentials() {
    ++epoch_;
    for (std::size_t i = 0; i < k_; ++i) {
      std::size_t u = n_ + i;
      path_.clear();
      // Climb through (sink, source) pairs until a known sink or the root.
      while (u != root_ && stamp_[u] != epoch_) {
        path_.push_back(u);
        const std::size_t j = parent_[u];
        if (j == root_) break;
        u = parent_[j];
      }
      double pot;
      std::size_t top = path_.empty() ? u : path_.back();
      if (!path_.empty() && parent_[top] == root_) {
        pot = cost_[top];  // artificial R -> sink
      } else if (!path_.empty()) {
        const std::size_t j = parent_[top];
        const std::size_t above = parent_[j];
        const double pj = (above == root_ ? 0.0 : sink_pot_[above - n_]) - cost_[j];
        pot = pj + cost_[top];
      } else {
        continue;  // already stamped
      }
      sink_pot_[top - n_] = pot;
      stamp_[top] = epoch_;
      for (std::size_t t = path_.size() - 1; t-- > 0;) {
        const std::size_t s = path_[t];
        const std::size_t j = parent_[s];
        sink_pot_[s - n_] = sink_pot_[parent_[j] - n_] - cost_[j] + cost_[s];
        stamp_[s] = epoch_;
      }
    }
  }

  void pivot(std::size_t arc) {
    const std::size_t first = arc / m_;
    const std::size_t second = n_ + cand_sink_[arc];
    const double c_in = cand_cost_[arc];

    // Join: lowest common ancestor of the entering arc's endpoints.
    ++epoch_;
    for (std::size_t u = first;; u = parent_[u]) {
      stamp_[u] = epoch_;
      if (u == root_) break;
    }
    std::size_t join = second;
    while (stamp_[join] != epoch_) join = parent_[join];

    // Leaving arc; only arcs traversed backwards by the cycle can block.
    double delta = kInf;
    std::size_t u_out = kNone;
    int side = 0;
    for (std::size_t u = first; u != join; u = parent_[u]) {
      if (u < n_ && flow_[u] < delta) {
        delta = flow_[u];
        u_out = u;
        side = 1;
      }
    }
    for (std::size_t u = second; u != join; u = parent_[u]) {
      if (u >= n_ && flow_[u] <= delta) {
        delta = flow_[u];
        u_out = u;
        side = 2;
      }
    }
    if (u_out == kNone) throw SolverError("transport simplex: unbounded cycle");

    if (delta > 0.0) {
      for (std::size_t u = first; u != join; u = parent_[u]) flow_[u] += u < n_ ? -delta : delta;
      for (std::size_t u = second; u != join; u = parent_[u]) flow_[u] += u < n_ ? delta : -delta;
      degenerate_run_ = 0;
      bland_ = false;
    } else if (++degenerate_run_ >= stall_threshold_) {
      bland_ = true;
    }

    // Re-hang the cut subtree from the entering arc, reversing the path
    // between the entering endpoint and the leaving node.
    std::size_t u = side == 1 ? first : second;
    std::size_t np = side == 1 ? second : first;
    double ncost = c_in;
    double nflow = delta;
    for (;;) {
      const std::size_t op = parent_[u];
      const double oc = cost_[u];
      const double of = flow_[u];
      parent_[u] = np;
      cost_[u] = ncost;
      flow_[u] = nflow;
      if (u == u_out) break;
      np = u;
      ncost = oc;
      nflow = of;
      u = op;
    }
    refresh_potentials();
  }

  const ImageSupport& support_;
  const CellModel& model_;
  std::size_t n_, k_, root_;
  std::size_t stall_threshold_, max_pivots_;
  double eps_ = 0.0, art_ = 0.0;

  std::vector<std::size_t> parent_;
  std::vector<double> cost_;
  std::vector<double> flow_;
  std::vector<double> sink_pot_;
  std::vector<std::uint64_t> stamp_;
  std::uint64_t epoch_ = 0;
  std::vector<std::size_t> path_;

  std::vector<std::uint32_t> cand_sink_;
  std::vector<double> cand_cost_;
  std::size_t m_ = 1;
  std::size_t block_ = 10;
  std::size_t next_arc_ = 0;

  std::size_t pivots_ = 0;
  std::size_t degenerate_run_ = 0;
  bool bland_ = false;
};

void build_candidates(const ImageSupport& support, const CellModel& model, std::size_t m,
                      std::vector<std::uint32_t>& sinks, std::vector<double>& costs) {
  const std::size_t n = support.size();
  const std::size_t k = model.k();
  sinks.assign(n * m, 0);
  costs.assign(n * m, 0.0);
  parallel_for(n, 2048, [&](std::size_t begin, std::size_t end) {
    std::vector<std::pair<double, std::uint32_t>> row(k);
    for (std::size_t j = begin; j < end; ++j) {
      for (std::size_t i = 0; i < k; ++i)
        row[i] = {model.cost(i, support.points[j]), static_cast<std::uint32_t>(i)};
      std::partial_sort(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(m), row.end());
      for (std::size_t t = 0; t < m; ++t) {
        sinks[j * m + t] = row[t].second;
        costs[j * m + t] = row[t].first;
      }
    }
  });
}

double max_arc_cost(const ImageSupport& support, const CellModel& model) {
  const std::size_t n = support.size();
  const std::size_t chunk = 4096;
  std::vector<double> part((n + chunk - 1) / chunk, 0.0);
  parallel_for(n, chunk, [&](std::size_t begin, std::size_t end) {
    double mx = 0.0;
    for (std::size_t j = begin; j < end; ++j)
      for (std::size_t i = 0; i < model.k(); ++i)
        mx = std::max(mx, model.cost(i, support.points[j]));
    part[begin / chunk] = mx;
  });
  return part.empty() ? 0.0 : *std::max_element(part.begin(), part.end());
}

// Most negative reduced cost over all arcs, given the tree potentials.
double full_pricing(const TransportSimplex& ns, const ImageSupport& support,
                    const CellModel& model) {
  const std::size_t n = support.size();
  const std::size_t chunk = 4096;
  std::vector<double> part((n + chunk - 1) / chunk, 0.0);
  parallel_for(n, chunk, [&](std::size_t begin, std::size_t end) {
    double mn = 0.0;
    for (std::size_t j = begin; j < end; ++j)
      for (std::size_t i = 0; i < model.k(); ++i)
        mn = std::min(mn, ns.reduced_cost(j, i, model.cost(i, support.points[j])));
    part[begin / chunk] = mn;
  });
  return part.empty() ? 0.0 : *std::min_element(part.begin(), part.end());
}

// Picks, among all duals that keep the optimal clustering compatible, the
// midpoint of the extreme solutions of the difference system
//   gamma_b - gamma_a <= c(j,a) - c(j,b)   for every (j,b) in the support.
// Symmetric instances thus get symmetric sizes.
bool centered_duals(const ImageSupport& support, const CellModel& model,
                    const Clustering& clustering, DualSolution& out) {
  const std::size_t k = model.k();
  std::vector<double> W(k * k, kInf);  // W[b*k + a]
  for (std::size_t a = 0; a < k; ++a) W[a * k + a] = 0.0;
  std::vector<double> c(k);
  for (const auto& e : clustering.entries) {
    const Vec3& x = support.points[e.point];
    for (std::size_t a = 0; a < k; ++a) c[a] = model.cost(a, x);
    const std::size_t b = e.cell;
    for (std::size_t a = 0; a < k; ++a) W[b * k + a] = std::min(W[b * k + a], c[a] - c[b]);
  }
  // D[a][b]: shortest path a -> b where edge a -> b has weight W[b][a].
  std::vector<double> D(k * k);
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < k; ++b) D[a * k + b] = W[b * k + a];
  for (std::size_t m = 0; m < k; ++m)
    for (std::size_t a = 0; a < k; ++a) {
      const double dam = D[a * k + m];
      if (dam == kInf) continue;
      for (std::size_t b = 0; b < k; ++b) D[a * k + b] = std::min(D[a * k + b], dam + D[m * k + b]);
    }
  double scale = 0.0;
  for (double v : D)
    if (std::isfinite(v)) scale = std::max(scale, std::abs(v));
  for (std::size_t a = 0; a < k; ++a)
    if (D[a * k + a] < -1e-9 * (scale + 1.0)) return false;

  std::vector<double> hi(k), lo(k);
  for (std::size_t b = 0; b < k; ++b) {
    double v = 0.0;
    for (std::size_t a = 0; a < k; ++a) v = std::min(v, D[a * k + b]);
    hi[b] = v;
  }
  for (std::size_t a = 0; a < k; ++a) {
    double v = 0.0;
    for (std::size_t b = 0; b < k; ++b) v = std::min(v, D[a * k + b]);
    lo[a] = -v;
  }
  out.gamma.resize(k);
  for (std::size_t i = 0; i < k; ++i) out.gamma[i] = 0.5 * (hi[i] + lo[i]);
  return true;
}

void fill_eta(const ImageSupport& support, const CellModel& model, DualSolution& d) {
  const double g0 = *std::min_element(d.gamma.begin(), d.gamma.end());
  for (double& g : d.gamma) g -= g0;
  d.eta.assign(support.size(), 0.0);
  parallel_for(support.size(), 4096, [&](std::size_t begin, std::size_t end) {
    for (std::size_t j = begin; j < end; ++j) {
      double best = kInf;
      for (std::size_t i = 0; i < model.k(); ++i)
        best = std::min(best, model.cost(i, support.points[j]) + d.gamma[i]);
      d.eta[j] = best;
    }
  });
}

}  // namespace

WcaaResult solve_wcaa(const ImageSupport& support, const CellModel& model,
                      const WcaaOptions& options) {
  const std::size_t n = support.size();
  const std::size_t k = model.k();
  if (k == 0) throw DataError("transport: no cells");
  if (n == 0) throw DataError("transport: empty support");
  if (model.A.size() != k || model.kappa.size() != k)
    throw DataError("transport: inconsistent cell model");
  if (options.candidates < 1) throw ConfigError("candidates per point must be >= 1");
  support.validate();

  WcaaResult result;
  const double total_w = support.total_weight();
  double total_k = 0.0;
  for (double kv : model.kappa) {
    if (!(kv >= 0.0) || !std::isfinite(kv)) throw DataError("transport: invalid target weight");
    total_k += kv;
  }
  if (total_k <= 0.0) throw DataError("transport: target weights sum to zero");
  result.kappa.resize(k);
  for (std::size_t i = 0; i < k; ++i) result.kappa[i] = model.kappa[i] * (total_w / total_k);

  const double max_cost = max_arc_cost(support, model);
  const std::size_t max_pivots =
      options.max_pivots ? options.max_pivots : 200 * (n + k) + 1000000;
  TransportSimplex ns(support, model, result.kappa, max_cost, options.stall_threshold, max_pivots);

  std::size_t m = std::min<std::size_t>(static_cast<std::size_t>(options.candidates), k);
  for (;;) {
    std::vector<std::uint32_t> sinks;
    std::vector<double> costs;
    build_candidates(support, model, m, sinks, costs);
    ns.set_candidates(std::move(sinks), std::move(costs), m);
    ns.optimize();
    if (m == k) break;
    if (full_pricing(ns, support, model) >= -ns.eps()) break;
    m = std::min(2 * m, k);
    ++result.escalations;
  }
  result.final_candidates = static_cast<int>(m);
  result.pivots = ns.pivots();

  // Extract flows from the tree; artificial arcs must carry nothing.
  double artificial = 0.0;
  auto& entries = result.clustering.entries;
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t p = ns.parent(j);
    if (p == ns.root()) {
      artificial += ns.flow(j);
    } else if (ns.flow(j) > 1e-12 * std::max(1.0, support.weights[j])) {
      entries.push_back({static_cast<std::uint32_t>(p - n), j, ns.flow(j)});
    }
  }
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t u = n + i;
    const std::size_t p = ns.parent(u);
    if (p == ns.root()) {
      artificial += ns.flow(u);
    } else if (ns.flow(u) > 1e-12 * std::max(1.0, support.weights[p])) {
      entries.push_back({static_cast<std::uint32_t>(i), p, ns.flow(u)});
    }
  }
  if (artificial > 1e-9 * total_w)
    throw SolverError("transport problem infeasible (residual artificial flow " +
                      std::to_string(artificial) + ")");
  std::sort(entries.begin(), entries.end(), [](const Assignment& a, const Assignment& b) {
    return a.point != b.point ? a.point < b.point : a.cell < b.cell;
  });
  result.objective = 0.0;
  for (auto& e : entries) {
    result.objective += e.xi * model.cost(e.cell, support.points[e.point]);
    e.xi /= support.weights[e.point];
  }

  // Duals: centered sizes when the difference system is consistent, else the
  // tree potentials.
  DualSolution duals;
  if (!centered_duals(support, model, result.clustering, duals)) {
    duals.gamma.resize(k);
    for (std::size_t i = 0; i < k; ++i) duals.gamma[i] = -ns.sink_pot(i);
  }
  fill_eta(support, model, duals);
  result.duals = std::move(duals);

  result.dual_objective = 0.0;
  for (std::size_t j = 0; j < n; ++j) result.dual_objective += support.weights[j] * result.duals.eta[j];
  for (std::size_t i = 0; i < k; ++i) result.dual_objective -= result.kappa[i] * result.duals.gamma[i];
  return result;
}

DiagramParams diagram_from_duals(const CellModel& model, const DualSolution& duals) {
  if (duals.gamma.size() != model.k()) throw DataError("dual sizes do not match the cell count");
  std::vector<Cell> cells(model.k());
  for (std::size_t i = 0; i < model.k(); ++i) cells[i] = {model.A[i], model.sites[i], duals.gamma[i]};
  return DiagramParams(std::move(cells));
}

SlacknessReport check_complementary_slackness(const ImageSupport& support, const CellModel& model,
                                              const Clustering& clustering,
                                              const DualSolution& duals, double tol) {
  SlacknessReport r;
  for (const auto& e : clustering.entries) {
    if (e.xi <= tol) continue;
    const double res = std::abs(duals.eta[e.point] - model.cost(e.cell, support.points[e.point]) -
                                duals.gamma[e.cell]);
    r.max_cs_residual = std::max(r.max_cs_residual, res);
  }
  const std::size_t n = support.size();
  const std::size_t chunk = 4096;
  std::vector<double> part((n + chunk - 1) / chunk, 0.0);
  parallel_for(n, chunk, [&](std::size_t begin, std::size_t end) {
    double mx = 0.0;
    for (std::size_t j = begin; j < end; ++j)
      for (std::size_t i = 0; i < model.k(); ++i)
        mx = std::max(mx, duals.eta[j] - model.cost(i, support.points[j]) - duals.gamma[i]);
    part[begin / chunk] = mx;
  });
  for (double v : part) r.max_dual_infeasibility = std::max(r.max_dual_infeasibility, v);
  return r;
}

void write_clustering_json(const WcaaResult& result, const std::filesystem::path& path) {
  json entries = json::array();
  for (const auto& e : result.clustering.entries)
    entries.push_back({{"cell", e.cell + 1}, {"point", e.point}, {"xi", e.xi}});
  json j{{"objective", result.objective},
         {"dual_objective", result.dual_objective},
         {"pivots", result.pivots},
         {"candidates", result.final_candidates},
         {"escalations", result.escalations},
         {"kappa", result.kappa},
         {"gamma", result.duals.gamma},
         {"eta", result.duals.eta},
         {"entries", entries}};
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(1) << '\n';
}

}  // namespace grainmap
