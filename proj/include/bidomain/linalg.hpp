#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bidomain/errors.hpp"

namespace bidomain {

using Vector = std::vector<double>;

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double norm_inf(std::span<const double> a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

struct Triplet {
  std::size_t row = 0;
  std::size_t col = 0;
  double value = 0.0;
};

/// Compressed-row sparse matrix. Column indices are strictly increasing within
/// each row; stored entries may be zero.
class SparseMatrix {
public:
  SparseMatrix() = default;
  SparseMatrix(std::size_t rows, std::size_t cols);

  /// Sums duplicate coordinates. Entries are summed in (row, col, value) order,
  /// so the result is bitwise independent of the order of `triplets`.
  static SparseMatrix from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> triplets);

  /// Takes raw CSR arrays; throws DimensionError if the structural invariants
  /// do not hold.
  static SparseMatrix from_csr(std::size_t rows, std::size_t cols, std::vector<std::size_t> row_offsets,
                               std::vector<std::size_t> col_indices, std::vector<double> values);

  static SparseMatrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t nnz() const { return values_.size(); }
  const std::vector<std::size_t>& row_offsets() const { return row_offsets_; }
  const std::vector<std::size_t>& col_indices() const { return col_indices_; }
  const std::vector<double>& values() const { return values_; }

  /// Value at (i, j); zero when not stored.
  double at(std::size_t i, std::size_t j) const;
  Vector diagonal() const;
  Vector row_sums() const;

  void multiply(std::span<const double> x, std::span<double> y) const;

  SparseMatrix transpose() const;
  SparseMatrix scaled(double factor) const;
  std::vector<Triplet> triplets() const;

  /// max |A_ij - A_ji| over all stored entries of either matrix.
  double max_asymmetry() const;

  friend bool operator==(const SparseMatrix&, const SparseMatrix&) = default;

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> row_offsets_{0};
  std::vector<std::size_t> col_indices_;
  std::vector<double> values_;
};

Vector spmv(const SparseMatrix& a, std::span<const double> x);

/// alpha*A + beta*B
SparseMatrix add(const SparseMatrix& a, const SparseMatrix& b, double alpha = 1.0, double beta = 1.0);

struct SolverOptions {
  double tol = 1e-10;  // relative to ||b||_2
  std::size_t max_iterations = 10000;
  bool jacobi = true;
  bool check_symmetry = false;  // cg only
  double absolute_floor = 1e-14;
};

struct SolveResult {
  Vector x;
  std::size_t iterations = 0;
  double residual_norm = 0.0;
  double relative_residual = 0.0;
};

/// Non-convergence after max_iterations; carries the best iterate seen.
class ConvergenceError : public SolverError {
public:
  ConvergenceError(const std::string& what, SolveResult best)
      : SolverError(what), best_(std::move(best)) {}
  const SolveResult& best() const { return best_; }

private:
  SolveResult best_;
};

/// Conjugate gradients for symmetric positive definite A, optionally
/// Jacobi-preconditioned. Converged when ||b - Ax|| <= max(tol ||b||, floor).
SolveResult cg_solve(const SparseMatrix& a, std::span<const double> b, const SolverOptions& opts,
                     std::span<const double> x0 = {});

SolveResult bicgstab_solve(const SparseMatrix& a, std::span<const double> b, const SolverOptions& opts,
                           std::span<const double> x0 = {});

/// Row-major dense matrix; used as an independent direct-solve path.
class DenseMatrix {
public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}
  explicit DenseMatrix(const SparseMatrix& s);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  Vector multiply(std::span<const double> x) const;

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Gaussian elimination with partial pivoting. Throws SolverError when singular.
Vector lu_solve(DenseMatrix a, std::span<const double> b);

/// Largest system size for which the dense fallback is attempted.
inline constexpr std::size_t kDenseFallbackLimit = 2000;

/// 3x3 grid of optional blocks over the unknown fields, plus right-hand side
/// segments. Missing blocks are zero.
class BlockSystem {
public:
  static constexpr std::size_t kFields = 3;

  explicit BlockSystem(std::array<std::size_t, kFields> sizes);

  std::size_t field_size(std::size_t f) const { return sizes_[f]; }
  std::size_t offset(std::size_t f) const;
  std::size_t size() const;

  void set_block(std::size_t row, std::size_t col, SparseMatrix block);
  const std::optional<SparseMatrix>& block(std::size_t row, std::size_t col) const {
    return blocks_[row][col];
  }

  Vector& rhs(std::size_t row) { return rhs_[row]; }
  const Vector& rhs(std::size_t row) const { return rhs_[row]; }

  SparseMatrix monolithic() const;
  Vector monolithic_rhs() const;

private:
  std::array<std::size_t, kFields> sizes_;
  std::array<std::array<std::optional<SparseMatrix>, kFields>, kFields> blocks_;
  std::array<Vector, kFields> rhs_;
};

}  // namespace bidomain
