#include <doctest.h>

#include <cmath>
#include <random>

#include "glrtml/errors.hpp"
#include "glrtml/numerics.hpp"

using namespace glrtml;
using namespace glrtml::numerics;

namespace {

SymMatrix random_spd(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Mat a(n, n);
  for (auto& x : a.a) x = gauss(rng);
  // A^T A + I is comfortably positive definite.
  SymMatrix m(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      double s = i == j ? 1.0 : 0.0;
      for (std::size_t k = 0; k < n; ++k) s += a(k, i) * a(k, j);
      m.set(i, j, s);
    }
  return m;
}

SymMatrix random_symmetric(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  SymMatrix m(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) m.set(i, j, gauss(rng));
  return m;
}

double frobenius(const SymMatrix& m) {
  double s = 0.0;
  for (double x : m.a) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("cholesky_inverse identity") {
  const auto r = cholesky_inverse(SymMatrix::identity(3));
  CHECK(r.log_det == doctest::Approx(0.0));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      CHECK(r.inverse(i, j) == doctest::Approx(i == j ? 1.0 : 0.0));
}

TEST_CASE("cholesky_inverse diagonal closed form") {
  const auto r = cholesky_inverse(SymMatrix::diagonal({2.0, 8.0}));
  CHECK(r.inverse(0, 0) == doctest::Approx(0.5));
  CHECK(r.inverse(1, 1) == doctest::Approx(0.125));
  CHECK(r.inverse(0, 1) == doctest::Approx(0.0));
  CHECK(r.log_det == doctest::Approx(std::log(16.0)));
}

TEST_CASE("cholesky_inverse rejects near-singular input") {
  SymMatrix m(2);
  m.set(0, 0, 1.0);
  m.set(1, 1, 1.0);
  m.set(0, 1, 1.0 - 1e-13);
  CHECK_THROWS_AS(cholesky_inverse(m), NotPositiveDefinite);
}

TEST_CASE("cholesky_inverse round trip on random spd matrices") {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 25; ++rep) {
    const std::size_t n = 1 + rng() % 12;
    const SymMatrix m = random_spd(n, rng);
    const auto r = cholesky_inverse(m);
    // inverse * m should be the identity within 1e-8.
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < n; ++k) s += r.inverse(i, k) * m(k, j);
        CHECK(s == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-8));
      }
  }
}

TEST_CASE("sym_eigen diagonal input") {
  const auto ed = sym_eigen(SymMatrix::diagonal({3.0, 1.0}));
  CHECK(ed.eigenvalues[0] == doctest::Approx(3.0));
  CHECK(ed.eigenvalues[1] == doctest::Approx(1.0));
  CHECK(std::abs(ed.eigenvectors(0, 0)) == doctest::Approx(1.0));
  CHECK(std::abs(ed.eigenvectors(1, 1)) == doctest::Approx(1.0));
}

TEST_CASE("sym_eigen 2x2 closed form") {
  SymMatrix m(2);
  m.set(0, 1, 1.0);
  const auto ed = sym_eigen(m);
  CHECK(ed.eigenvalues[0] == doctest::Approx(1.0));
  CHECK(ed.eigenvalues[1] == doctest::Approx(-1.0));
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  // Column 0 pairs with +1: (1,1)/sqrt(2) up to sign.
  CHECK(std::abs(ed.eigenvectors(0, 0)) == doctest::Approx(inv_sqrt2));
  CHECK(ed.eigenvectors(0, 0) * ed.eigenvectors(1, 0) > 0.0);
  CHECK(ed.eigenvectors(0, 1) * ed.eigenvectors(1, 1) < 0.0);
}

TEST_CASE("sym_eigen zero matrix") {
  const auto ed = sym_eigen(SymMatrix(4));
  for (double l : ed.eigenvalues) CHECK(l == 0.0);
}

TEST_CASE("sym_eigen reconstruction and orthonormality") {
  std::mt19937_64 rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t n = 2 + rng() % 10;
    const SymMatrix m = random_symmetric(n, rng);
    const auto ed = sym_eigen(m);

    SymMatrix rec(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i; j < n; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < n; ++k)
          s += ed.eigenvectors(i, k) * ed.eigenvalues[k] * ed.eigenvectors(j, k);
        rec.set(i, j, s);
      }
    double err = 0.0;
    for (std::size_t i = 0; i < rec.a.size(); ++i) err += (rec.a[i] - m.a[i]) * (rec.a[i] - m.a[i]);
    CHECK(std::sqrt(err) <= 1e-9 * std::max(1.0, frobenius(m)));

    for (std::size_t c1 = 0; c1 < n; ++c1)
      for (std::size_t c2 = c1; c2 < n; ++c2) {
        double s = 0.0;
        for (std::size_t r = 0; r < n; ++r) s += ed.eigenvectors(r, c1) * ed.eigenvectors(r, c2);
        CHECK(s == doctest::Approx(c1 == c2 ? 1.0 : 0.0).epsilon(1e-9));
      }

    // Sorted descending.
    for (std::size_t k = 1; k < n; ++k) CHECK(ed.eigenvalues[k - 1] >= ed.eigenvalues[k]);
  }
}

TEST_CASE("clip_spectrum clamps eigenvalues per mode") {
  const SymMatrix m = SymMatrix::diagonal({2.0, -1.0});
  const SymMatrix pd = clip_spectrum(m, ClipMode::ForcePositiveDefinite, 1e-6);
  CHECK(pd(0, 0) == doctest::Approx(2.0));
  CHECK(pd(1, 1) == doctest::Approx(1e-6));

  const SymMatrix same = clip_spectrum(m, ClipMode::NoClip, 1e-6);
  CHECK(same.a == m.a);

  const SymMatrix nd = SymMatrix::diagonal({-3.0, -1.0});
  const SymMatrix kept = clip_spectrum(nd, ClipMode::ForceNegativeDefinite, 1e-6);
  CHECK(kept(0, 0) == doctest::Approx(-3.0));
  CHECK(kept(1, 1) == doctest::Approx(-1.0));
}

TEST_CASE("clip_spectrum is idempotent") {
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 10; ++rep) {
    const SymMatrix m = random_symmetric(5, rng);
    for (ClipMode mode : {ClipMode::ForcePositiveDefinite, ClipMode::ForceNegativeDefinite}) {
      const SymMatrix once = clip_spectrum(m, mode, 1e-6);
      const SymMatrix twice = clip_spectrum(once, mode, 1e-6);
      for (std::size_t i = 0; i < once.a.size(); ++i)
        CHECK(std::abs(once.a[i] - twice.a[i]) <= 1e-10);
    }
  }
}

TEST_CASE("clip_spectrum keeps eigenvalues already above the floor") {
  std::mt19937_64 rng(5);
  const SymMatrix m = random_symmetric(4, rng);
  const auto before = sym_eigen(m);
  const auto after = sym_eigen(clip_spectrum(m, ClipMode::ForcePositiveDefinite, 1e-6));
  for (std::size_t k = 0; k < 4; ++k)
    if (before.eigenvalues[k] > 1e-6)
      CHECK(after.eigenvalues[k] == doctest::Approx(before.eigenvalues[k]));
}

TEST_CASE("log_sum_exp basics") {
  CHECK(log_sum_exp(Vec{0.0, 0.0}) == doctest::Approx(std::log(2.0)));
  CHECK(log_sum_exp(Vec{1000.0, 1000.0}) == doctest::Approx(1000.0 + std::log(2.0)));
  CHECK(log_sum_exp(Vec{5.0}) == 5.0);
  CHECK_THROWS_AS(log_sum_exp(Vec{}), EmptyInput);
}

TEST_CASE("log_sum_exp shift invariance") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> gauss(0.0, 3.0);
  for (int rep = 0; rep < 50; ++rep) {
    Vec v(1 + rng() % 8);
    for (auto& x : v) x = gauss(rng);
    const double c = gauss(rng);
    Vec shifted = v;
    for (auto& x : shifted) x += c;
    CHECK(log_sum_exp(shifted) == doctest::Approx(log_sum_exp(v) + c).epsilon(1e-10));
  }
}

TEST_CASE("quadratic_form hand values") {
  CHECK(quadratic_form(SymMatrix::identity(2), Vec{3.0, 4.0}) == doctest::Approx(25.0));
  CHECK(quadratic_form(SymMatrix::diagonal({1.0, -1.0}), Vec{1.0, 1.0}) == doctest::Approx(0.0));
  std::mt19937_64 rng(23);
  const SymMatrix m = random_symmetric(6, rng);
  CHECK(quadratic_form(m, Vec(6, 0.0)) == 0.0);
  CHECK_THROWS_AS(quadratic_form(m, Vec{1.0, 2.0}), DimensionMismatch);
}

TEST_CASE("quadratic_form is exactly even") {
  std::mt19937_64 rng(29);
  std::normal_distribution<double> gauss(0.0, 2.0);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 1 + rng() % 9;
    const SymMatrix m = random_symmetric(n, rng);
    Vec x(n);
    for (auto& v : x) v = gauss(rng);
    Vec nx(n);
    for (std::size_t i = 0; i < n; ++i) nx[i] = -x[i];
    CHECK(quadratic_form(m, x) == quadratic_form(m, nx));
  }
}
