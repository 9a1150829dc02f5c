#include <cmath>
#include <random>

#include "bidomain/linalg.hpp"
#include "doctest.h"

using namespace bidomain;

namespace {

SparseMatrix from_dense(const DenseMatrix& d) {
  std::vector<Triplet> t;
  for (std::size_t i = 0; i < d.rows(); ++i) {
    for (std::size_t j = 0; j < d.cols(); ++j) {
      if (d(i, j) != 0.0) t.push_back({i, j, d(i, j)});
    }
  }
  return SparseMatrix::from_triplets(d.rows(), d.cols(), std::move(t));
}

SparseMatrix small(std::initializer_list<std::initializer_list<double>> rows) {
  DenseMatrix d(rows.size(), rows.begin()->size());
  std::size_t i = 0;
  for (const auto& r : rows) {
    std::size_t j = 0;
    for (double v : r) d(i, j++) = v;
    ++i;
  }
  return from_dense(d);
}

double rel_err(std::span<const double> x, std::span<const double> ref) {
  Vector d(x.begin(), x.end());
  axpy(-1.0, ref, d);
  return norm2(d) / norm2(ref);
}

DenseMatrix random_sparse(std::size_t n, std::size_t m, double fill, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::bernoulli_distribution keep(fill);
  DenseMatrix d(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (keep(rng)) d(i, j) = u(rng);
    }
  }
  return d;
}

// B^T B + shift*I with shift chosen so that the condition number is at most
// `cond` (Gershgorin bound on the largest eigenvalue of B^T B).
DenseMatrix random_spd(std::size_t n, double cond, std::mt19937_64& rng) {
  const DenseMatrix b = random_sparse(n, n, 0.15, rng);
  DenseMatrix a(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += b(k, i) * b(k, j);
      a(i, j) = s;
    }
  }
  double gershgorin = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) row += std::abs(a(i, j));
    gershgorin = std::max(gershgorin, row);
  }
  const double shift = std::max(gershgorin, 1.0) / (cond - 1.0);
  for (std::size_t i = 0; i < n; ++i) a(i, i) += shift;
  return a;
}

Vector random_vector(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vector v(n);
  for (double& x : v) x = u(rng);
  return v;
}

}  // namespace

TEST_CASE("spmv examples") {
  CHECK(spmv(SparseMatrix::identity(3), Vector{1, 2, 3}) == Vector{1, 2, 3});
  CHECK(spmv(SparseMatrix(2, 3), Vector{1, 2, 3}) == Vector{0, 0});
  CHECK(spmv(small({{4, 1}, {1, 3}}), Vector{1, 2}) == Vector{6, 7});
  CHECK_THROWS_AS(spmv(SparseMatrix::identity(3), Vector{1, 2}), DimensionError);
}

TEST_CASE("from_triplets sums duplicates and keeps columns sorted") {
  const auto a = SparseMatrix::from_triplets(2, 2, {{1, 1, 1.0}, {0, 1, 2.0}, {1, 1, 3.0}, {1, 0, 5.0}});
  CHECK(a.nnz() == 3);
  CHECK(a.at(1, 1) == 4.0);
  CHECK(a.at(0, 0) == 0.0);
  CHECK(a.col_indices() == std::vector<std::size_t>{1, 0, 1});
  CHECK(a.row_offsets() == std::vector<std::size_t>{0, 1, 3});
}

TEST_CASE("from_triplets is independent of triplet order") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<std::size_t> idx(0, 9);
  std::vector<Triplet> t;
  for (int k = 0; k < 300; ++k) t.push_back({idx(rng), idx(rng), u(rng) * std::pow(10.0, idx(rng))});
  const auto a = SparseMatrix::from_triplets(10, 10, t);
  for (int trial = 0; trial < 5; ++trial) {
    std::shuffle(t.begin(), t.end(), rng);
    CHECK(SparseMatrix::from_triplets(10, 10, t) == a);
  }
}

TEST_CASE("from_csr rejects broken structure") {
  CHECK_NOTHROW(SparseMatrix::from_csr(2, 2, {0, 1, 2}, {0, 1}, {1.0, 1.0}));
  CHECK_THROWS_AS(SparseMatrix::from_csr(2, 2, {0, 2, 2}, {1, 0}, {1.0, 1.0}), DimensionError);
  CHECK_THROWS_AS(SparseMatrix::from_csr(2, 2, {0, 2, 2}, {1, 1}, {1.0, 1.0}), DimensionError);
  CHECK_THROWS_AS(SparseMatrix::from_csr(2, 2, {1, 1, 2}, {0, 1}, {1.0, 1.0}), DimensionError);
  CHECK_THROWS_AS(SparseMatrix::from_csr(2, 2, {0, 1, 2}, {0, 2}, {1.0, 1.0}), DimensionError);
}

TEST_CASE("spmv is linear and matches a dense product") {
  std::mt19937_64 rng(11);
  for (std::size_t n : {1u, 5u, 17u, 50u}) {
    const DenseMatrix d = random_sparse(n, n + 3, 0.2, rng);
    const SparseMatrix a = from_dense(d);
    const Vector x = random_vector(n + 3, rng);
    const Vector y = random_vector(n + 3, rng);
    Vector xy = x;
    axpy(1.0, y, xy);
    const Vector ax = spmv(a, x);
    const Vector ay = spmv(a, y);
    const Vector axy = spmv(a, xy);
    const Vector dense = d.multiply(x);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(axy[i] == doctest::Approx(ax[i] + ay[i]).epsilon(1e-12).scale(1.0));
      CHECK(ax[i] == doctest::Approx(dense[i]).epsilon(1e-14).scale(1.0));
    }
  }
}

TEST_CASE("transpose, scaled, add and asymmetry") {
  const auto a = small({{1, 2}, {0, 3}});
  const auto at = a.transpose();
  CHECK(at.at(1, 0) == 2.0);
  CHECK(at.at(0, 1) == 0.0);
  CHECK(a.max_asymmetry() == 2.0);
  const auto s = add(a, at);
  CHECK(s.max_asymmetry() == 0.0);
  CHECK(s.at(0, 1) == 2.0);
  CHECK(a.scaled(-2.0).at(1, 1) == -6.0);
  CHECK(add(a, a, 1.0, -1.0).at(0, 1) == 0.0);
  CHECK_THROWS_AS(add(a, SparseMatrix::identity(3)), DimensionError);
  CHECK(a.row_sums() == Vector{3, 3});
  CHECK(a.diagonal() == Vector{1, 3});
}

TEST_CASE("cg examples") {
  SolverOptions opts;
  opts.tol = 1e-14;
  const Vector b{0.3, -2.0, 7.5};
  const auto r_id = cg_solve(SparseMatrix::identity(3), b, opts);
  CHECK(r_id.iterations <= 1);
  for (std::size_t i = 0; i < 3; ++i) CHECK(r_id.x[i] == doctest::Approx(b[i]).epsilon(1e-15));

  const auto r = cg_solve(small({{4, 1}, {1, 3}}), Vector{1, 2}, opts);
  CHECK(r.x[0] == doctest::Approx(1.0 / 11.0).epsilon(1e-13));
  CHECK(r.x[1] == doctest::Approx(7.0 / 11.0).epsilon(1e-13));

  const auto z = cg_solve(small({{4, 1}, {1, 3}}), Vector{0, 0}, opts);
  CHECK(z.iterations == 0);
  CHECK(z.x == Vector{0, 0});
}

TEST_CASE("cg argument and symmetry checks") {
  SolverOptions opts;
  CHECK_THROWS_AS(cg_solve(SparseMatrix::identity(2), Vector{1, 2, 3}, opts), DimensionError);
  opts.check_symmetry = true;
  CHECK_THROWS(cg_solve(small({{2, 1}, {0, 2}}), Vector{1, 1}, opts));
  opts.tol = 0.0;
  CHECK_THROWS(cg_solve(SparseMatrix::identity(2), Vector{1, 1}, opts));
}

TEST_CASE("cg reports non-convergence with the best iterate") {
  std::mt19937_64 rng(3);
  const DenseMatrix d = random_spd(40, 1e6, rng);
  const Vector b = random_vector(40, rng);
  SolverOptions opts;
  opts.max_iterations = 2;
  opts.tol = 1e-14;
  try {
    cg_solve(from_dense(d), b, opts);
    FAIL("expected non-convergence");
  } catch (const ConvergenceError& e) {
    CHECK(e.best().x.size() == 40);
    CHECK(e.best().relative_residual <= 1.0);
    CHECK(e.best().iterations <= 2);
  }
}

TEST_CASE("bicgstab examples") {
  SolverOptions opts;
  opts.tol = 1e-14;
  const auto r = bicgstab_solve(small({{1, 2}, {0, 1}}), Vector{3, 1}, opts);
  CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.x[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(bicgstab_solve(small({{0, 1}, {1, 1}}), Vector{1, 1}, opts), SolverError);
  opts.jacobi = false;
  const auto z = bicgstab_solve(SparseMatrix::identity(2), Vector{0, 0}, opts);
  CHECK(z.iterations == 0);
}

TEST_CASE("bicgstab and cg agree on SPD systems") {
  std::mt19937_64 rng(5);
  SolverOptions opts;
  opts.tol = 1e-13;
  for (int trial = 0; trial < 5; ++trial) {
    const auto a = from_dense(random_spd(30, 1e2, rng));
    const Vector b = random_vector(30, rng);
    const auto x_cg = cg_solve(a, b, opts).x;
    const auto x_bi = bicgstab_solve(a, b, opts).x;
    CHECK(rel_err(x_bi, x_cg) <= 1e-10);
  }
}

TEST_CASE("cg on random SPD matrices reproduces dense LU") {
  std::mt19937_64 rng(17);
  SolverOptions opts;
  // Tighter tolerances are below the attainable residual at cond 1e6.
  opts.tol = 1e-11;
  opts.max_iterations = 100000;
  for (double cond : {1e2, 1e4, 1e6}) {
    for (std::size_t n : {10u, 40u, 80u}) {
      CAPTURE(cond);
      CAPTURE(n);
      const DenseMatrix d = random_spd(n, cond, rng);
      const Vector b = random_vector(n, rng);
      const Vector ref = lu_solve(d, b);
      CHECK(rel_err(cg_solve(from_dense(d), b, opts).x, ref) <= 1e-8);
    }
  }
}

TEST_CASE("bicgstab on random nonsymmetric diagonally dominant matrices matches dense LU") {
  std::mt19937_64 rng(23);
  SolverOptions opts;
  opts.tol = 1e-14;
  for (std::size_t n : {10u, 60u}) {
    DenseMatrix d = random_sparse(n, n, 0.2, rng);
    for (std::size_t i = 0; i < n; ++i) d(i, i) = 5.0 + static_cast<double>(i % 3);
    const Vector b = random_vector(n, rng);
    CHECK(rel_err(bicgstab_solve(from_dense(d), b, opts).x, lu_solve(d, b)) <= 1e-10);
  }
}

TEST_CASE("lu_solve detects singular matrices") {
  DenseMatrix d(2, 2);
  d(0, 0) = 1;
  d(0, 1) = 2;
  d(1, 0) = 2;
  d(1, 1) = 4;
  CHECK_THROWS_AS(lu_solve(d, Vector{1, 1}), SolverError);
}

TEST_CASE("block system assembly") {
  BlockSystem sys({2, 2, 1});
  CHECK(sys.size() == 5);
  CHECK(sys.offset(2) == 4);
  sys.set_block(0, 0, SparseMatrix::identity(2));
  sys.set_block(1, 2, SparseMatrix::from_triplets(2, 1, {{1, 0, 7.0}}));
  sys.set_block(2, 0, SparseMatrix::from_triplets(1, 2, {{0, 1, -1.0}}));
  CHECK_THROWS_AS(sys.set_block(0, 1, SparseMatrix::identity(3)), DimensionError);
  sys.rhs(0) = {1, 2};
  sys.rhs(2) = {5};
  const auto a = sys.monolithic();
  CHECK(a.rows() == 5);
  CHECK(a.cols() == 5);
  CHECK(a.at(1, 1) == 1.0);
  CHECK(a.at(3, 4) == 7.0);
  CHECK(a.at(4, 1) == -1.0);
  CHECK(a.nnz() == 4);
  CHECK(sys.monolithic_rhs() == Vector{1, 2, 0, 0, 5});
}
