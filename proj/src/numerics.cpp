#include "glrtml/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "glrtml/errors.hpp"

namespace glrtml::numerics {

namespace {
constexpr double kPivotFloor = 1e-12;
constexpr double kJacobiTol = 1e-12;
constexpr int kJacobiMaxSweeps = 100;
}  // namespace

SymMatrix SymMatrix::identity(std::size_t n) {
  SymMatrix m(n);
  for (std::size_t i = 0; i < n; ++i) m.set(i, i, 1.0);
  return m;
}

SymMatrix SymMatrix::diagonal(const Vec& d) {
  SymMatrix m(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) m.set(i, i, d[i]);
  return m;
}

Vec SymMatrix::diag() const {
  Vec d(dim);
  for (std::size_t i = 0; i < dim; ++i) d[i] = (*this)(i, i);
  return d;
}

double SymMatrix::trace() const {
  double t = 0.0;
  for (std::size_t i = 0; i < dim; ++i) t += (*this)(i, i);
  return t;
}

CholeskyInverse cholesky_inverse(const SymMatrix& m) {
  const std::size_t n = m.dim;
  if (n == 0) throw EmptyInput("cholesky_inverse: empty matrix");

  double max_diag = 0.0;
  for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, std::abs(m(i, i)));
  const double floor = kPivotFloor * std::max(1.0, max_diag);

  // Lower-triangular factor, m = L L^T.
  Mat L(n, n);
  double log_det = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    double pivot = m(j, j);
    for (std::size_t k = 0; k < j; ++k) pivot -= L(j, k) * L(j, k);
    if (!(pivot > floor)) {
      throw NotPositiveDefinite("cholesky_inverse: pivot " + std::to_string(pivot) +
                                " at column " + std::to_string(j) +
                                " under floor; add ridge and retry");
    }
    const double ljj = std::sqrt(pivot);
    L(j, j) = ljj;
    log_det += 2.0 * std::log(ljj);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = m(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= L(i, k) * L(j, k);
      L(i, j) = s / ljj;
    }
  }

  // Invert L in place (forward substitution on the identity), then
  // m^{-1} = L^{-T} L^{-1}.
  Mat Linv(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    Linv(j, j) = 1.0 / L(j, j);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = 0.0;
      for (std::size_t k = j; k < i; ++k) s += L(i, k) * Linv(k, j);
      Linv(i, j) = -s / L(i, i);
    }
  }

  CholeskyInverse out;
  out.inverse = SymMatrix(n);
  out.log_det = log_det;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = j; k < n; ++k) s += Linv(k, i) * Linv(k, j);
      out.inverse.set(i, j, s);
    }
  }
  return out;
}

EigenDecomposition sym_eigen(const SymMatrix& m) {
  const std::size_t n = m.dim;
  if (n == 0) throw EmptyInput("sym_eigen: empty matrix");

  SymMatrix a = m;
  Mat v(n, n);
  for (std::size_t i = 0; i < n; ++i) v(i, i) = 1.0;

  double frob = 0.0;
  for (double x : a.a) frob += x * x;
  frob = std::sqrt(frob);

  auto off_norm = [&]() {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) s += 2.0 * a(i, j) * a(i, j);
    return std::sqrt(s);
  };

  int sweep = 0;
  while (frob > 0.0 && off_norm() > kJacobiTol * frob) {
    if (++sweep > kJacobiMaxSweeps)
      throw NonConvergence("sym_eigen: Jacobi sweeps exceeded " + std::to_string(kJacobiMaxSweeps));
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double app = a(p, p);
        const double aqq = a(q, q);
        // Rotation angle zeroing a(p,q).
        const double theta = 0.5 * std::atan2(2.0 * apq, aqq - app);
        const double c = std::cos(theta);
        const double s = std::sin(theta);

        const double new_pp = c * c * app - 2.0 * s * c * apq + s * s * aqq;
        const double new_qq = s * s * app + 2.0 * s * c * apq + c * c * aqq;
        a.set(p, p, new_pp);
        a.set(q, q, new_qq);
        a.set(p, q, 0.0);
        for (std::size_t r = 0; r < n; ++r) {
          if (r != p && r != q) {
            const double arp = a(r, p);
            const double arq = a(r, q);
            a.set(r, p, c * arp - s * arq);
            a.set(r, q, s * arp + c * arq);
          }
          const double vrp = v(r, p);
          const double vrq = v(r, q);
          v(r, p) = c * vrp - s * vrq;
          v(r, q) = s * vrp + c * vrq;
        }
      }
    }
  }

  // Sort descending by eigenvalue, reordering columns.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

  EigenDecomposition out;
  out.eigenvalues.resize(n);
  out.eigenvectors = Mat(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    out.eigenvalues[k] = a(order[k], order[k]);
    for (std::size_t r = 0; r < n; ++r) out.eigenvectors(r, k) = v(r, order[k]);
  }
  return out;
}

SymMatrix clip_spectrum(const SymMatrix& m, ClipMode mode, double eps) {
  if (mode == ClipMode::NoClip) return m;

  EigenDecomposition ed = sym_eigen(m);
  for (double& lambda : ed.eigenvalues) {
    if (mode == ClipMode::ForcePositiveDefinite) {
      lambda = std::max(lambda, eps);
    } else {
      lambda = std::min(lambda, -eps);
    }
  }

  const std::size_t n = m.dim;
  SymMatrix out(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k)
        s += ed.eigenvectors(i, k) * ed.eigenvalues[k] * ed.eigenvectors(j, k);
      out.set(i, j, s);
    }
  }
  return out;
}

double log_sum_exp(std::span<const double> v) {
  if (v.empty()) throw EmptyInput("log_sum_exp: empty vector");
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

double quadratic_form(const SymMatrix& m, std::span<const double> x) {
  if (x.size() != m.dim)
    throw DimensionMismatch("quadratic_form: vector size " + std::to_string(x.size()) +
                            " vs matrix dim " + std::to_string(m.dim));
  double acc = 0.0;
  for (std::size_t i = 0; i < m.dim; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < m.dim; ++j) row += m(i, j) * x[j];
    acc += x[i] * row;
  }
  return acc;
}

Vec mat_vec(const SymMatrix& m, std::span<const double> x) {
  if (x.size() != m.dim)
    throw DimensionMismatch("mat_vec: vector size " + std::to_string(x.size()) +
                            " vs matrix dim " + std::to_string(m.dim));
  Vec y(m.dim, 0.0);
  for (std::size_t i = 0; i < m.dim; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < m.dim; ++j) s += m(i, j) * x[j];
    y[i] = s;
  }
  return y;
}

double dot(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

double norm2(std::span<const double> x) { return std::sqrt(dot(x, x)); }

}  // namespace glrtml::numerics
