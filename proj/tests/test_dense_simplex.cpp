#include "doctest.h"

#include "grainmap/dense_simplex.hpp"

#include <random>

using namespace grainmap;

namespace {

struct Lp {
  int m = 0;
  Eigen::MatrixXd A;
  Eigen::VectorXd b, c, lo, hi;
};

// Enumerates every basis with every bound pattern of the nonbasic columns.
double vertex_oracle(const Lp& lp) {
  const int m = lp.m, n = static_cast<int>(lp.c.size());
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> pick(static_cast<std::size_t>(n), 0);
  for (int mask = 0; mask < (1 << n); ++mask) {
    if (__builtin_popcount(static_cast<unsigned>(mask)) != m) continue;
    std::vector<int> basic, nonbasic;
    for (int j = 0; j < n; ++j) ((mask >> j) & 1 ? basic : nonbasic).push_back(j);
    Eigen::MatrixXd B(m, m);
    for (int r = 0; r < m; ++r) B.col(r) = lp.A.col(basic[static_cast<std::size_t>(r)]);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(B);
    if (lu.rank() < m) continue;
    const int nb = static_cast<int>(nonbasic.size());
    for (int bounds = 0; bounds < (1 << nb); ++bounds) {
      Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
      bool ok = true;
      for (int t = 0; t < nb; ++t) {
        const int j = nonbasic[static_cast<std::size_t>(t)];
        x(j) = (bounds >> t) & 1 ? lp.hi(j) : lp.lo(j);
        ok = ok && std::isfinite(x(j));
      }
      if (!ok) continue;
      const Eigen::VectorXd xb = lu.solve(lp.b - lp.A * x);
      for (int r = 0; r < m; ++r) {
        const int j = basic[static_cast<std::size_t>(r)];
        x(j) = xb(r);
        ok = ok && x(j) >= lp.lo(j) - 1e-9 && x(j) <= lp.hi(j) + 1e-9;
      }
      if (ok) best = std::min(best, lp.c.dot(x));
    }
  }
  return best;
}

DenseSimplex to_solver(const Lp& lp) {
  DenseSimplex s(lp.m);
  for (int r = 0; r < lp.m; ++r) s.set_rhs(r, lp.b(r));
  for (int j = 0; j < lp.c.size(); ++j) {
    std::vector<DenseSimplex::Entry> e;
    for (int r = 0; r < lp.m; ++r)
      if (lp.A(r, j) != 0.0) e.push_back({r, lp.A(r, j)});
    s.add_column(lp.c(j), lp.lo(j), lp.hi(j), e);
  }
  return s;
}

}  // namespace

TEST_CASE("random bounded LPs match vertex enumeration") {
  std::mt19937 rng(2);
  std::uniform_real_distribution<double> u(-1.0, 1.0), pos(0.0, 2.0);
  std::uniform_int_distribution<int> coin(0, 3);
  for (int trial = 0; trial < 60; ++trial) {
    Lp lp;
    lp.m = 3;
    const int n = 7;
    lp.A.resize(3, n);
    lp.c.resize(n);
    lp.lo.resize(n);
    lp.hi.resize(n);
    Eigen::VectorXd x0(n);
    for (int j = 0; j < n; ++j) {
      for (int r = 0; r < 3; ++r) lp.A(r, j) = coin(rng) == 0 ? 0.0 : std::round(4 * u(rng));
      lp.c(j) = std::round(5 * u(rng));
      lp.lo(j) = coin(rng) == 0 ? -1.0 : 0.0;
      lp.hi(j) = lp.lo(j) + 1.0 + std::round(pos(rng));
      x0(j) = lp.lo(j) + 0.5 * (lp.hi(j) - lp.lo(j));
    }
    lp.b = lp.A * x0;
    auto s = to_solver(lp);
    REQUIRE(s.solve() == DenseSimplex::Status::Optimal);
    const double ref = vertex_oracle(lp);
    CHECK(s.objective() == doctest::Approx(ref).epsilon(1e-9));
    // Primal feasibility and reduced-cost optimality.
    Eigen::VectorXd x(n);
    for (int j = 0; j < n; ++j) x(j) = s.x()[static_cast<std::size_t>(j)];
    CHECK((lp.A * x - lp.b).norm() < 1e-9);
    Eigen::VectorXd y(3);
    for (int r = 0; r < 3; ++r) y(r) = s.duals()[static_cast<std::size_t>(r)];
    const Eigen::VectorXd d = lp.c - lp.A.transpose() * y;
    for (int j = 0; j < n; ++j) {
      if (x(j) > lp.lo(j) + 1e-9) CHECK(d(j) <= 1e-9);
      if (x(j) < lp.hi(j) - 1e-9) CHECK(d(j) >= -1e-9);
    }
  }
}

TEST_CASE("unbounded LP returns an improving ray") {
  // min -x0  s.t.  x0 - x1 = 0, x >= 0.
  DenseSimplex s(1);
  s.add_column(-1.0, 0.0, DenseSimplex::kInf, {{0, 1.0}});
  s.add_column(0.0, 0.0, DenseSimplex::kInf, {{0, -1.0}});
  REQUIRE(s.solve() == DenseSimplex::Status::Unbounded);
  const auto& r = s.ray();
  REQUIRE(r.size() == 2);
  CHECK(r[0] > 0.0);
  CHECK(r[0] - r[1] == doctest::Approx(0.0));
}

TEST_CASE("infeasible LP is reported") {
  DenseSimplex s(1);
  s.set_rhs(0, -1.0);
  s.add_column(1.0, 0.0, DenseSimplex::kInf, {{0, 1.0}});
  s.add_column(1.0, 0.0, DenseSimplex::kInf, {{0, 1.0}});
  CHECK(s.solve() == DenseSimplex::Status::Infeasible);
}

TEST_CASE("degenerate cone LP with zero right-hand side") {
  // min -x0 - x1  s.t.  x0 - x1 = 0, x0 + x1 - x2 = 0, x2 <= 2.
  DenseSimplex s(2);
  s.add_column(-1.0, 0.0, DenseSimplex::kInf, {{0, 1.0}, {1, 1.0}});
  s.add_column(-1.0, 0.0, DenseSimplex::kInf, {{0, -1.0}, {1, 1.0}});
  s.add_column(0.0, 0.0, 2.0, {{1, -1.0}});
  REQUIRE(s.solve() == DenseSimplex::Status::Optimal);
  CHECK(s.objective() == doctest::Approx(-2.0));
  CHECK(s.x()[0] == doctest::Approx(1.0));
}

TEST_CASE("free-ranged boxed column") {
  // min x0 s.t. x0 = 0.3, x0 in [-1, 1].
  DenseSimplex s(1);
  s.set_rhs(0, 0.3);
  s.add_column(1.0, -1.0, 1.0, {{0, 1.0}});
  REQUIRE(s.solve() == DenseSimplex::Status::Optimal);
  CHECK(s.x()[0] == doctest::Approx(0.3));
}
