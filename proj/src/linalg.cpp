#include "bidomain/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <tuple>

namespace bidomain {

SparseMatrix::SparseMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), row_offsets_(rows + 1, 0) {}

SparseMatrix SparseMatrix::from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> triplets) {
  for (const auto& t : triplets) {
    if (t.row >= rows || t.col >= cols) {
      throw DimensionError("triplet (" + std::to_string(t.row) + ", " + std::to_string(t.col) +
                           ") outside " + std::to_string(rows) + "x" + std::to_string(cols));
    }
  }
  std::sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
    return std::tie(a.row, a.col, a.value) < std::tie(b.row, b.col, b.value);
  });

  SparseMatrix m(rows, cols);
  m.col_indices_.reserve(triplets.size());
  m.values_.reserve(triplets.size());
  std::size_t k = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    while (k < triplets.size() && triplets[k].row == r) {
      const std::size_t c = triplets[k].col;
      double sum = 0.0;
      while (k < triplets.size() && triplets[k].row == r && triplets[k].col == c) {
        sum += triplets[k].value;
        ++k;
      }
      m.col_indices_.push_back(c);
      m.values_.push_back(sum);
    }
    m.row_offsets_[r + 1] = m.col_indices_.size();
  }
  return m;
}

SparseMatrix SparseMatrix::from_csr(std::size_t rows, std::size_t cols, std::vector<std::size_t> row_offsets,
                                    std::vector<std::size_t> col_indices, std::vector<double> values) {
  if (row_offsets.size() != rows + 1 || row_offsets.front() != 0 ||
      row_offsets.back() != col_indices.size() || col_indices.size() != values.size()) {
    throw DimensionError("inconsistent CSR array sizes");
  }
  for (std::size_t r = 0; r < rows; ++r) {
    if (row_offsets[r] > row_offsets[r + 1]) throw DimensionError("row offsets decrease");
    for (std::size_t k = row_offsets[r]; k < row_offsets[r + 1]; ++k) {
      if (col_indices[k] >= cols) throw DimensionError("column index out of range");
      if (k > row_offsets[r] && col_indices[k] <= col_indices[k - 1]) {
        throw DimensionError("column indices not strictly increasing in row " + std::to_string(r));
      }
    }
  }
  SparseMatrix m;
  m.rows_ = rows;
  m.cols_ = cols;
  m.row_offsets_ = std::move(row_offsets);
  m.col_indices_ = std::move(col_indices);
  m.values_ = std::move(values);
  return m;
}

SparseMatrix SparseMatrix::identity(std::size_t n) {
  std::vector<Triplet> t;
  t.reserve(n);
  for (std::size_t i = 0; i < n; ++i) t.push_back({i, i, 1.0});
  return from_triplets(n, n, std::move(t));
}

double SparseMatrix::at(std::size_t i, std::size_t j) const {
  const auto begin = col_indices_.begin() + static_cast<std::ptrdiff_t>(row_offsets_[i]);
  const auto end = col_indices_.begin() + static_cast<std::ptrdiff_t>(row_offsets_[i + 1]);
  const auto it = std::lower_bound(begin, end, j);
  if (it == end || *it != j) return 0.0;
  return values_[static_cast<std::size_t>(it - col_indices_.begin())];
}

Vector SparseMatrix::diagonal() const {
  Vector d(std::min(rows_, cols_), 0.0);
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = at(i, i);
  return d;
}

Vector SparseMatrix::row_sums() const {
  Vector s(rows_, 0.0);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) s[r] += values_[k];
  }
  return s;
}

void SparseMatrix::multiply(std::span<const double> x, std::span<double> y) const {
  if (x.size() != cols_ || y.size() != rows_) {
    throw DimensionError("spmv: matrix is " + std::to_string(rows_) + "x" + std::to_string(cols_) +
                         ", got x of length " + std::to_string(x.size()));
  }
  for (std::size_t r = 0; r < rows_; ++r) {
    double s = 0.0;
    for (std::size_t k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) s += values_[k] * x[col_indices_[k]];
    y[r] = s;
  }
}

SparseMatrix SparseMatrix::transpose() const {
  std::vector<Triplet> t;
  t.reserve(nnz());
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
      t.push_back({col_indices_[k], r, values_[k]});
    }
  }
  return from_triplets(cols_, rows_, std::move(t));
}

SparseMatrix SparseMatrix::scaled(double factor) const {
  SparseMatrix m = *this;
  for (double& v : m.values_) v *= factor;
  return m;
}

std::vector<Triplet> SparseMatrix::triplets() const {
  std::vector<Triplet> t;
  t.reserve(nnz());
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
      t.push_back({r, col_indices_[k], values_[k]});
    }
  }
  return t;
}

double SparseMatrix::max_asymmetry() const {
  if (rows_ != cols_) return std::numeric_limits<double>::infinity();
  double m = 0.0;
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
      m = std::max(m, std::abs(values_[k] - at(col_indices_[k], r)));
    }
  }
  return m;
}

Vector spmv(const SparseMatrix& a, std::span<const double> x) {
  Vector y(a.rows(), 0.0);
  a.multiply(x, y);
  return y;
}

SparseMatrix add(const SparseMatrix& a, const SparseMatrix& b, double alpha, double beta) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("add: shape mismatch");
  auto t = a.triplets();
  for (auto& e : t) e.value *= alpha;
  for (auto e : b.triplets()) {
    e.value *= beta;
    t.push_back(e);
  }
  return SparseMatrix::from_triplets(a.rows(), a.cols(), std::move(t));
}

namespace {

void check_system(const SparseMatrix& a, std::span<const double> b, std::span<const double> x0) {
  if (a.rows() != a.cols()) throw DimensionError("solver: matrix not square");
  if (b.size() != a.rows()) throw DimensionError("solver: rhs length does not match matrix");
  if (!x0.empty() && x0.size() != a.rows()) throw DimensionError("solver: initial guess length mismatch");
}

Vector inverse_diagonal(const SparseMatrix& a, bool jacobi) {
  Vector inv(a.rows(), 1.0);
  if (!jacobi) return inv;
  const Vector d = a.diagonal();
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] == 0.0) {
      throw SolverError("Jacobi preconditioner: zero diagonal entry in row " + std::to_string(i));
    }
    inv[i] = 1.0 / d[i];
  }
  return inv;
}

Vector residual(const SparseMatrix& a, std::span<const double> b, std::span<const double> x) {
  Vector r = spmv(a, x);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = b[i] - r[i];
  return r;
}

SolveResult finish(Vector x, std::size_t it, double rnorm, double bnorm) {
  return {std::move(x), it, rnorm, bnorm > 0.0 ? rnorm / bnorm : rnorm};
}

}  // namespace

SolveResult cg_solve(const SparseMatrix& a, std::span<const double> b, const SolverOptions& opts,
                     std::span<const double> x0) {
  check_system(a, b, x0);
  if (!(opts.tol > 0.0)) throw std::invalid_argument("cg_solve: tol must be positive");
  if (opts.check_symmetry && a.max_asymmetry() > 1e-12) {
    throw SolverError("cg_solve: matrix is not symmetric");
  }
  const std::size_t n = a.rows();
  const double bnorm = norm2(b);
  const double target = std::max(opts.tol * bnorm, opts.absolute_floor);
  const Vector inv_diag = inverse_diagonal(a, opts.jacobi);

  Vector x = x0.empty() ? Vector(n, 0.0) : Vector(x0.begin(), x0.end());
  if (bnorm == 0.0 && x0.empty()) return finish(std::move(x), 0, 0.0, 0.0);

  Vector r = residual(a, b, x);
  double rnorm = norm2(r);
  SolveResult best = finish(x, 0, rnorm, bnorm);
  Vector z(n), p(n), ap(n);
  std::size_t it = 0;
  while (it < opts.max_iterations) {
    if (rnorm <= target) {
      // Guard against drift of the recursively updated residual.
      r = residual(a, b, x);
      rnorm = norm2(r);
      if (rnorm <= target) return finish(std::move(x), it, rnorm, bnorm);
    }
    for (std::size_t i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
    p = z;
    double rz = dot(r, z);
    while (it < opts.max_iterations) {
      a.multiply(p, ap);
      const double pap = dot(p, ap);
      if (!(pap > 0.0)) {
        if (rnorm <= target) break;
        throw SolverError("cg_solve: matrix is not positive definite (p'Ap = " + std::to_string(pap) + ")");
      }
      const double alpha = rz / pap;
      axpy(alpha, p, x);
      axpy(-alpha, ap, r);
      ++it;
      rnorm = norm2(r);
      if (rnorm < best.residual_norm) best = finish(x, it, rnorm, bnorm);
      if (rnorm <= target) break;
      for (std::size_t i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
      const double rz_new = dot(r, z);
      const double beta = rz_new / rz;
      rz = rz_new;
      for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    }
  }
  r = residual(a, b, x);
  rnorm = norm2(r);
  if (rnorm <= target) return finish(std::move(x), it, rnorm, bnorm);
  throw ConvergenceError("cg_solve: no convergence after " + std::to_string(it) +
                             " iterations (relative residual " + std::to_string(best.relative_residual) + ")",
                         std::move(best));
}

SolveResult bicgstab_solve(const SparseMatrix& a, std::span<const double> b, const SolverOptions& opts,
                           std::span<const double> x0) {
  check_system(a, b, x0);
  if (!(opts.tol > 0.0)) throw std::invalid_argument("bicgstab_solve: tol must be positive");
  const std::size_t n = a.rows();
  const double bnorm = norm2(b);
  const double target = std::max(opts.tol * bnorm, opts.absolute_floor);
  const Vector inv_diag = inverse_diagonal(a, opts.jacobi);

  Vector x = x0.empty() ? Vector(n, 0.0) : Vector(x0.begin(), x0.end());
  if (bnorm == 0.0 && x0.empty()) return finish(std::move(x), 0, 0.0, 0.0);

  Vector r = residual(a, b, x);
  double rnorm = norm2(r);
  SolveResult best = finish(x, 0, rnorm, bnorm);
  Vector r_hat(n), p(n), v(n), p_hat(n), s(n), s_hat(n), t(n);
  std::size_t it = 0;

  while (it < opts.max_iterations) {
    if (rnorm <= target) {
      r = residual(a, b, x);
      rnorm = norm2(r);
      if (rnorm <= target) return finish(std::move(x), it, rnorm, bnorm);
    }
    // (Re)start with the shadow residual equal to the current residual.
    r_hat = r;
    double rho = 1.0, alpha = 1.0, omega = 1.0;
    std::fill(p.begin(), p.end(), 0.0);
    std::fill(v.begin(), v.end(), 0.0);
    while (it < opts.max_iterations) {
      const double rho_new = dot(r_hat, r);
      if (rho_new == 0.0 || omega == 0.0) break;
      const double beta = (rho_new / rho) * (alpha / omega);
      rho = rho_new;
      for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * (p[i] - omega * v[i]);
      for (std::size_t i = 0; i < n; ++i) p_hat[i] = inv_diag[i] * p[i];
      a.multiply(p_hat, v);
      const double rv = dot(r_hat, v);
      if (rv == 0.0) break;
      alpha = rho / rv;
      for (std::size_t i = 0; i < n; ++i) s[i] = r[i] - alpha * v[i];
      ++it;
      const double snorm = norm2(s);
      if (snorm <= target) {
        axpy(alpha, p_hat, x);
        r = s;
        rnorm = snorm;
        if (rnorm < best.residual_norm) best = finish(x, it, rnorm, bnorm);
        break;
      }
      for (std::size_t i = 0; i < n; ++i) s_hat[i] = inv_diag[i] * s[i];
      a.multiply(s_hat, t);
      const double tt = dot(t, t);
      omega = tt > 0.0 ? dot(t, s) / tt : 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        x[i] += alpha * p_hat[i] + omega * s_hat[i];
        r[i] = s[i] - omega * t[i];
      }
      rnorm = norm2(r);
      if (rnorm < best.residual_norm) best = finish(x, it, rnorm, bnorm);
      if (rnorm <= target) break;
    }
    if (rnorm > target) {
      // Breakdown: restart from the true residual unless nothing is left to do.
      const Vector true_r = residual(a, b, x);
      if (norm2(true_r) > target && it < opts.max_iterations) {
        r = true_r;
        rnorm = norm2(r);
        continue;
      }
    }
  }
  r = residual(a, b, x);
  rnorm = norm2(r);
  if (rnorm <= target) return finish(std::move(x), it, rnorm, bnorm);
  throw ConvergenceError("bicgstab_solve: no convergence after " + std::to_string(it) +
                             " iterations (relative residual " + std::to_string(best.relative_residual) + ")",
                         std::move(best));
}

DenseMatrix::DenseMatrix(const SparseMatrix& s) : DenseMatrix(s.rows(), s.cols()) {
  for (const auto& t : s.triplets()) (*this)(t.row, t.col) += t.value;
}

Vector DenseMatrix::multiply(std::span<const double> x) const {
  if (x.size() != cols_) throw DimensionError("dense multiply: length mismatch");
  Vector y(rows_, 0.0);
  for (std::size_t i = 0; i < rows_; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < cols_; ++j) s += data_[i * cols_ + j] * x[j];
    y[i] = s;
  }
  return y;
}

Vector lu_solve(DenseMatrix a, std::span<const double> b) {
  const std::size_t n = a.rows();
  if (a.cols() != n || b.size() != n) throw DimensionError("lu_solve: dimension mismatch");
  Vector x(b.begin(), b.end());
  double scale = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) scale = std::max(scale, std::abs(a(i, j)));
  }
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i) {
      if (std::abs(a(i, k)) > std::abs(a(piv, k))) piv = i;
    }
    if (!(std::abs(a(piv, k)) > scale * 1e-18)) {
      throw SolverError("lu_solve: matrix is singular to working precision (column " + std::to_string(k) + ")");
    }
    if (piv != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a(k, j), a(piv, j));
      std::swap(x[k], x[piv]);
    }
    const double inv = 1.0 / a(k, k);
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = a(i, k) * inv;
      if (f == 0.0) continue;
      a(i, k) = 0.0;
      for (std::size_t j = k + 1; j < n; ++j) a(i, j) -= f * a(k, j);
      x[i] -= f * x[k];
    }
  }
  for (std::size_t k = n; k-- > 0;) {
    double s = x[k];
    for (std::size_t j = k + 1; j < n; ++j) s -= a(k, j) * x[j];
    x[k] = s / a(k, k);
  }
  return x;
}

BlockSystem::BlockSystem(std::array<std::size_t, kFields> sizes) : sizes_(sizes) {
  for (std::size_t f = 0; f < kFields; ++f) rhs_[f].assign(sizes_[f], 0.0);
}

std::size_t BlockSystem::offset(std::size_t f) const {
  std::size_t o = 0;
  for (std::size_t k = 0; k < f; ++k) o += sizes_[k];
  return o;
}

std::size_t BlockSystem::size() const { return offset(kFields); }

void BlockSystem::set_block(std::size_t row, std::size_t col, SparseMatrix block) {
  if (row >= kFields || col >= kFields) throw DimensionError("block index out of range");
  if (block.rows() != sizes_[row] || block.cols() != sizes_[col]) {
    throw DimensionError("block (" + std::to_string(row) + ", " + std::to_string(col) + ") has shape " +
                         std::to_string(block.rows()) + "x" + std::to_string(block.cols()) + ", expected " +
                         std::to_string(sizes_[row]) + "x" + std::to_string(sizes_[col]));
  }
  blocks_[row][col] = std::move(block);
}

SparseMatrix BlockSystem::monolithic() const {
  std::vector<Triplet> t;
  std::size_t total = 0;
  for (const auto& row : blocks_) {
    for (const auto& b : row) {
      if (b) total += b->nnz();
    }
  }
  t.reserve(total);
  for (std::size_t r = 0; r < kFields; ++r) {
    for (std::size_t c = 0; c < kFields; ++c) {
      const auto& b = blocks_[r][c];
      if (!b) continue;
      const std::size_t ro = offset(r);
      const std::size_t co = offset(c);
      for (auto e : b->triplets()) t.push_back({e.row + ro, e.col + co, e.value});
    }
  }
  return SparseMatrix::from_triplets(size(), size(), std::move(t));
}

Vector BlockSystem::monolithic_rhs() const {
  Vector b;
  b.reserve(size());
  for (std::size_t f = 0; f < kFields; ++f) {
    if (rhs_[f].size() != sizes_[f]) throw DimensionError("rhs segment length mismatch");
    b.insert(b.end(), rhs_[f].begin(), rhs_[f].end());
  }
  return b;
}

}  // namespace bidomain
