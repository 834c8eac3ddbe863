#pragma once

#include "grainmap/common.hpp"

#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

namespace grainmap {

/// Bounded revised simplex with an explicit dense basis inverse:
///   min c^T x  s.t.  A x = b,  lo <= x <= hi.
/// Columns are sparse; lower bounds must be finite.
class DenseSimplex {
 public:
  static constexpr double kInf = std::numeric_limits<double>::infinity();

  enum class Status { Optimal, Infeasible, Unbounded, IterationLimit };

  struct Entry {
    int row;
    double value;
  };

  explicit DenseSimplex(int rows) : m_(rows), b_(static_cast<std::size_t>(rows), 0.0) {}

  int rows() const { return m_; }
  int cols() const { return static_cast<int>(cols_.size()); }

  void set_rhs(int row, double value) { b_[static_cast<std::size_t>(row)] = value; }

  /// Returns the column index.
  int add_column(double cost, double lo, double hi, std::vector<Entry> entries);

  struct Options {
    double feas_tol = 1e-9;
    double opt_tol = 1e-9;
    double pivot_tol = 1e-9;
    std::size_t max_iterations = 1000000;
    std::size_t bland_after = 2000;  // consecutive degenerate pivots
    int refactor_every = 64;
  };

  Status solve(const Options& options);
  Status solve() { return solve(Options{}); }

  Status status() const { return status_; }
  double objective() const { return objective_; }
  const std::vector<double>& x() const { return x_; }
  /// Simplex multipliers y with reduced costs c - A^T y.
  const std::vector<double>& duals() const { return y_; }
  std::size_t iterations() const { return iterations_; }
  /// On Unbounded: the improving direction over the structural columns.
  const std::vector<double>& ray() const { return ray_; }

 private:
  struct Column {
    double cost, lo, hi;
    std::vector<Entry> entries;
  };

  bool run_phase(const std::vector<double>& cost, const Options& opt, bool phase_one);
  void refactor();
  void compute_duals(const std::vector<double>& cost);
  double reduced_cost(int j, const std::vector<double>& cost) const;
  void column_times_inverse(int j, std::vector<double>& alpha) const;
  void recompute_basic_values();

  int m_;
  std::vector<double> b_;
  std::vector<Column> cols_;

  // Working state over structural + artificial columns.
  std::vector<Column> all_;
  std::vector<int> basis_;          // column index per row
  std::vector<int> where_;          // row in basis or -1
  std::vector<double> value_;       // current value of every column
  std::vector<double> binv_;        // row-major m x m
  std::vector<double> y_;
  std::vector<double> x_;
  std::vector<double> ray_;
  Status status_ = Status::Optimal;
  double objective_ = 0.0;
  std::size_t iterations_ = 0;
  int since_refactor_ = 0;
};

}  // namespace grainmap
