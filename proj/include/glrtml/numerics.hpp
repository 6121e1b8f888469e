#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace glrtml {

using Vec = std::vector<double>;

// Dense row-major matrix. Used for embedder weights, eigenvector bases and
// score matrices; no ownership tricks, just a sized vector.
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), a(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }
};

namespace numerics {

// Symmetric matrix, full dense storage. Construction helpers keep the
// symmetry invariant; set() writes both triangles.
struct SymMatrix {
  std::size_t dim = 0;
  std::vector<double> a;

  SymMatrix() = default;
  explicit SymMatrix(std::size_t n, double fill = 0.0) : dim(n), a(n * n, fill) {}

  double operator()(std::size_t i, std::size_t j) const { return a[i * dim + j]; }
  void set(std::size_t i, std::size_t j, double v) {
    a[i * dim + j] = v;
    a[j * dim + i] = v;
  }
  void add(std::size_t i, std::size_t j, double v) {
    a[i * dim + j] += v;
    if (i != j) a[j * dim + i] += v;
  }

  static SymMatrix identity(std::size_t n);
  static SymMatrix diagonal(const Vec& d);
  Vec diag() const;
  double trace() const;
};

struct EigenDecomposition {
  Vec eigenvalues;   // sorted descending
  Mat eigenvectors;  // orthonormal columns, column k pairs with eigenvalues[k]
};

enum class ClipMode { ForcePositiveDefinite, ForceNegativeDefinite, NoClip };

struct CholeskyInverse {
  SymMatrix inverse;
  double log_det = 0.0;
};

// Cholesky factorization with inversion. Pivots at or below
// 1e-12 * max(1, max diagonal) raise NotPositiveDefinite; regularization is
// the caller's job.
CholeskyInverse cholesky_inverse(const SymMatrix& m);

// Cyclic Jacobi rotations; converges when the off-diagonal Frobenius norm
// drops below 1e-12 * ||m||_F. Throws NonConvergence after the sweep cap.
EigenDecomposition sym_eigen(const SymMatrix& m);

// Eigen-decompose, clamp the spectrum per mode, reconstruct. NoClip returns
// the input untouched (bitwise).
SymMatrix clip_spectrum(const SymMatrix& m, ClipMode mode, double eps);

double log_sum_exp(std::span<const double> v);

// x^T m x
double quadratic_form(const SymMatrix& m, std::span<const double> x);

// y = m x
Vec mat_vec(const SymMatrix& m, std::span<const double> x);

double dot(std::span<const double> x, std::span<const double> y);
double norm2(std::span<const double> x);

}  // namespace numerics
}  // namespace glrtml
