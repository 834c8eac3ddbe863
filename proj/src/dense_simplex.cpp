#include "grainmap/dense_simplex.hpp"

#include <algorithm>
#include <cmath>

namespace grainmap {

int DenseSimplex::add_column(double cost, double lo, double hi, std::vector<Entry> entries) {
  if (!std::isfinite(lo)) throw SolverError("dense simplex: lower bounds must be finite");
  if (hi < lo) throw SolverError("dense simplex: empty bound interval");
  for (const auto& e : entries)
    if (e.row < 0 || e.row >= m_) throw SolverError("dense simplex: row index out of range");
  cols_.push_back({cost, lo, hi, std::move(entries)});
  return static_cast<int>(cols_.size()) - 1;
}

void DenseSimplex::column_times_inverse(int j, std::vector<double>& alpha) const {
  const std::size_t m = static_cast<std::size_t>(m_);
  std::fill(alpha.begin(), alpha.end(), 0.0);
  for (const auto& e : all_[static_cast<std::size_t>(j)].entries) {
    const std::size_t c = static_cast<std::size_t>(e.row);
    for (std::size_t r = 0; r < m; ++r) alpha[r] += binv_[r * m + c] * e.value;
  }
}

double DenseSimplex::reduced_cost(int j, const std::vector<double>& cost) const {
  double d = cost[static_cast<std::size_t>(j)];
  for (const auto& e : all_[static_cast<std::size_t>(j)].entries)
    d -= y_[static_cast<std::size_t>(e.row)] * e.value;
  return d;
}

void DenseSimplex::compute_duals(const std::vector<double>& cost) {
  const std::size_t m = static_cast<std::size_t>(m_);
  std::fill(y_.begin(), y_.end(), 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    const double cb = cost[static_cast<std::size_t>(basis_[r])];
    if (cb == 0.0) continue;
    const double* row = &binv_[r * m];
    for (std::size_t i = 0; i < m; ++i) y_[i] += cb * row[i];
  }
}

void DenseSimplex::recompute_basic_values() {
  const std::size_t m = static_cast<std::size_t>(m_);
  std::vector<double> rhs(b_);
  for (std::size_t j = 0; j < all_.size(); ++j) {
    if (where_[j] >= 0 || value_[j] == 0.0) continue;
    for (const auto& e : all_[j].entries) rhs[static_cast<std::size_t>(e.row)] -= e.value * value_[j];
  }
  for (std::size_t r = 0; r < m; ++r) {
    double v = 0.0;
    for (std::size_t i = 0; i < m; ++i) v += binv_[r * m + i] * rhs[i];
    value_[static_cast<std::size_t>(basis_[r])] = v;
  }
}

void DenseSimplex::refactor() {
  const std::size_t m = static_cast<std::size_t>(m_);
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(m_, m_);
  for (std::size_t r = 0; r < m; ++r)
    for (const auto& e : all_[static_cast<std::size_t>(basis_[r])].entries)
      B(e.row, static_cast<Eigen::Index>(r)) = e.value;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(B);
  const Eigen::MatrixXd inv = lu.inverse();
  if (!inv.allFinite()) throw SolverError("dense simplex: singular basis");
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t i = 0; i < m; ++i)
      binv_[r * m + i] = inv(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i));
  recompute_basic_values();
  since_refactor_ = 0;
}

bool DenseSimplex::run_phase(const std::vector<double>& cost, const Options& opt, bool phase_one) {
  const std::size_t m = static_cast<std::size_t>(m_);
  const std::size_t ncols = all_.size();
  std::vector<double> alpha(m);
  std::size_t degenerate = 0;
  bool bland = false;
  for (;;) {
    if (iterations_ >= opt.max_iterations) {
      status_ = Status::IterationLimit;
      return false;
    }
    compute_duals(cost);

    int q = -1;
    double best = 0.0;
    for (std::size_t j = 0; j < ncols; ++j) {
      if (where_[j] >= 0) continue;
      const auto& c = all_[j];
      if (c.hi <= c.lo) continue;
      const double d = reduced_cost(static_cast<int>(j), cost);
      const bool at_lo = value_[j] <= c.lo;
      const double gain = at_lo ? -d : d;
      if (gain <= opt.opt_tol) continue;
      if (bland) {
        q = static_cast<int>(j);
        break;
      }
      if (gain > best) {
        best = gain;
        q = static_cast<int>(j);
      }
    }
    if (q < 0) return true;

    const auto& cq = all_[static_cast<std::size_t>(q)];
    const double dir = value_[static_cast<std::size_t>(q)] <= cq.lo ? 1.0 : -1.0;
    column_times_inverse(q, alpha);

    // Two-pass (Harris) ratio test: bound the step with relaxed bounds, then
    // take the largest pivot among the rows blocking within that step.
    double amax = 0.0;
    for (double a : alpha) amax = std::max(amax, std::abs(a));
    const double ptol = std::max(opt.pivot_tol, 1e-9 * amax);
    auto slack_of = [&](std::size_t r, double rate, double relax) {
      const std::size_t bj = static_cast<std::size_t>(basis_[r]);
      if (rate < 0.0) return (value_[bj] - all_[bj].lo + relax) / -rate;
      if (!std::isfinite(all_[bj].hi)) return kInf;
      return (all_[bj].hi - value_[bj] + relax) / rate;
    };
    double bound = cq.hi - cq.lo;
    for (std::size_t r = 0; r < m; ++r) {
      if (std::abs(alpha[r]) <= ptol) continue;
      bound = std::min(bound, slack_of(r, -dir * alpha[r], opt.feas_tol));
    }
    double theta = cq.hi - cq.lo;
    int leave = -1;
    double leave_piv = 0.0;
    if (std::isfinite(bound)) {
      for (std::size_t r = 0; r < m; ++r) {
        const double a = alpha[r];
        if (std::abs(a) <= ptol) continue;
        const double lim = slack_of(r, -dir * a, 0.0);
        if (lim > bound) continue;
        bool take = leave < 0;
        if (!take) {
          take = bland ? basis_[r] < basis_[static_cast<std::size_t>(leave)]
                       : std::abs(a) > std::abs(leave_piv);
        }
        if (take) {
          leave = static_cast<int>(r);
          leave_piv = a;
          theta = std::max(lim, 0.0);
        }
      }
      if (leave >= 0 && theta >= cq.hi - cq.lo) {
        theta = cq.hi - cq.lo;
        leave = -1;
      }
    }
    if (!std::isfinite(theta)) {
      if (phase_one) throw SolverError("dense simplex: unbounded phase one");
      status_ = Status::Unbounded;
      ray_.assign(cols_.size(), 0.0);
      if (static_cast<std::size_t>(q) < cols_.size()) ray_[static_cast<std::size_t>(q)] = dir;
      for (std::size_t r = 0; r < m; ++r) {
        const std::size_t bj = static_cast<std::size_t>(basis_[r]);
        if (bj < cols_.size()) ray_[bj] = -dir * alpha[r];
      }
      return false;
    }

    ++iterations_;
    if (theta <= opt.feas_tol * 1e-3) {
      if (++degenerate >= opt.bland_after) bland = true;
    } else {
      degenerate = 0;
      bland = false;
    }

    value_[static_cast<std::size_t>(q)] += dir * theta;
    for (std::size_t r = 0; r < m; ++r)
      if (alpha[r] != 0.0) value_[static_cast<std::size_t>(basis_[r])] -= dir * theta * alpha[r];

    if (leave < 0) {
      value_[static_cast<std::size_t>(q)] = dir > 0 ? cq.hi : cq.lo;  // bound flip
      continue;
    }
    const std::size_t lr = static_cast<std::size_t>(leave);
    const std::size_t out = static_cast<std::size_t>(basis_[lr]);
    const double rate = -dir * alpha[lr];
    value_[out] = rate < 0.0 ? all_[out].lo : all_[out].hi;
    where_[out] = -1;
    basis_[lr] = q;
    where_[static_cast<std::size_t>(q)] = leave;

    double* prow = &binv_[lr * m];
    const double inv = 1.0 / alpha[lr];
    for (std::size_t i = 0; i < m; ++i) prow[i] *= inv;
    for (std::size_t r = 0; r < m; ++r) {
      if (r == lr || alpha[r] == 0.0) continue;
      double* row = &binv_[r * m];
      const double f = alpha[r];
      for (std::size_t i = 0; i < m; ++i) row[i] -= f * prow[i];
    }
    if (++since_refactor_ >= std::max(opt.refactor_every, m_ / 4)) refactor();
  }
}

DenseSimplex::Status DenseSimplex::solve(const Options& opt) {
  const std::size_t m = static_cast<std::size_t>(m_);
  const std::size_t n = cols_.size();
  all_ = cols_;
  value_.assign(n + m, 0.0);
  where_.assign(n + m, -1);
  basis_.assign(m, -1);
  binv_.assign(m * m, 0.0);
  y_.assign(m, 0.0);
  iterations_ = 0;
  since_refactor_ = 0;
  ray_.clear();

  std::vector<double> resid(b_);
  for (std::size_t j = 0; j < n; ++j) {
    value_[j] = all_[j].lo;
    if (value_[j] != 0.0)
      for (const auto& e : all_[j].entries) resid[static_cast<std::size_t>(e.row)] -= e.value * value_[j];
  }

  // Crash basis: singleton columns that can absorb the residual, else artificials.
  double bscale = 1.0;
  for (double v : b_) bscale = std::max(bscale, std::abs(v));
  bool need_phase_one = false;
  std::vector<double> diag(m, 1.0);
  for (std::size_t j = 0; j < n; ++j) {
    if (all_[j].entries.size() != 1) continue;
    const auto e = all_[j].entries[0];
    const std::size_t r = static_cast<std::size_t>(e.row);
    if (basis_[r] >= 0 || e.value == 0.0) continue;
    const double v = all_[j].lo + resid[r] / e.value;
    if (v < all_[j].lo - opt.feas_tol || v > all_[j].hi + opt.feas_tol) continue;
    basis_[r] = static_cast<int>(j);
    where_[j] = static_cast<int>(r);
    value_[j] = std::clamp(v, all_[j].lo, all_[j].hi);
    diag[r] = e.value;
  }
  for (std::size_t r = 0; r < m; ++r) {
    const double sign = resid[r] >= 0.0 ? 1.0 : -1.0;
    Column art{0.0, 0.0, 0.0, {{static_cast<int>(r), sign}}};
    const std::size_t j = all_.size();
    if (basis_[r] < 0) {
      if (std::abs(resid[r]) > opt.feas_tol * bscale) {
        art.hi = kInf;
        need_phase_one = true;
      }
      basis_[r] = static_cast<int>(j);
      where_[j] = static_cast<int>(r);
      value_[j] = std::abs(resid[r]) > opt.feas_tol * bscale ? std::abs(resid[r]) : 0.0;
      diag[r] = sign;
    }
    all_.push_back(std::move(art));
  }
  for (std::size_t r = 0; r < m; ++r) binv_[r * m + r] = 1.0 / diag[r];

  if (need_phase_one) {
    std::vector<double> cost(all_.size(), 0.0);
    for (std::size_t j = n; j < all_.size(); ++j)
      if (std::isinf(all_[j].hi)) cost[j] = 1.0;
    if (!run_phase(cost, opt, true)) return status_;
    double infeas = 0.0;
    for (std::size_t j = n; j < all_.size(); ++j) infeas += value_[j];
    if (infeas > opt.feas_tol * bscale * static_cast<double>(m)) {
      status_ = Status::Infeasible;
      return status_;
    }
    for (std::size_t j = n; j < all_.size(); ++j) {
      all_[j].hi = 0.0;
      value_[j] = 0.0;
    }
    refactor();
  }

  std::vector<double> cost(all_.size(), 0.0);
  for (std::size_t j = 0; j < n; ++j) cost[j] = all_[j].cost;
  if (!run_phase(cost, opt, false)) return status_;

  refactor();
  compute_duals(cost);
  x_.assign(value_.begin(), value_.begin() + static_cast<std::ptrdiff_t>(n));
  for (std::size_t j = 0; j < n; ++j) x_[j] = std::clamp(x_[j], all_[j].lo, all_[j].hi);
  objective_ = 0.0;
  for (std::size_t j = 0; j < n; ++j) objective_ += all_[j].cost * x_[j];
  status_ = Status::Optimal;
  return status_;
}

}  // namespace grainmap
