#include "glrtml/glrt_mg.hpp"

#include <string>

#include "glrtml/errors.hpp"

namespace glrtml::glrt_mg {

using numerics::cholesky_inverse;
using numerics::clip_spectrum;
using numerics::quadratic_form;

SymMatrix estimate_cov(std::span<const Vec> diffs, double ridge) {
  if (diffs.empty()) throw EmptyInput("estimate_cov: no differential embeddings");
  const std::size_t d = diffs.front().size();

  SymMatrix cov(d);
  for (const Vec& x : diffs) {
    if (x.size() != d) throw DimensionMismatch("estimate_cov: inconsistent diff dimension");
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = i; j < d; ++j) cov.a[i * d + j] += x[i] * x[j];
  }
  const double inv_n = 1.0 / static_cast<double>(diffs.size());
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i; j < d; ++j) cov.set(i, j, cov.a[i * d + j] * inv_n);
  for (std::size_t i = 0; i < d; ++i) cov.set(i, i, cov(i, i) + ridge);
  return cov;
}

SymMatrix estimate_cov_scaled_ridge(std::span<const Vec> diffs, double ridge_rel) {
  SymMatrix raw = estimate_cov(diffs, 0.0);
  const double mean_eig = raw.trace() / static_cast<double>(raw.dim);
  const double ridge = mean_eig > 0.0 ? ridge_rel * mean_eig : ridge_rel;
  for (std::size_t i = 0; i < raw.dim; ++i) raw.set(i, i, raw(i, i) + ridge);
  return raw;
}

MgModel build_mg_model(const SymMatrix& sigma1, const SymMatrix& sigma0, ClipMode clip_mode,
                       double clip_eps) {
  if (sigma1.dim != sigma0.dim)
    throw DimensionMismatch("build_mg_model: covariance dimensions differ");

  const SymMatrix inv1 = cholesky_inverse(sigma1).inverse;
  const SymMatrix inv0 = cholesky_inverse(sigma0).inverse;

  SymMatrix raw(sigma1.dim);
  for (std::size_t i = 0; i < raw.dim; ++i)
    for (std::size_t j = i; j < raw.dim; ++j) raw.set(i, j, inv0(i, j) - inv1(i, j));

  MgModel model;
  model.sigma1 = sigma1;
  model.sigma0 = sigma0;
  model.clip_mode = clip_mode;
  model.clip_eps = clip_eps;
  model.form = clip_spectrum(raw, clip_mode, clip_eps);
  return model;
}

double mg_score(const MgModel& model, std::span<const double> diff) {
  return quadratic_form(model.form, diff);
}

double mg_full_llr(const SymMatrix& sigma1, const SymMatrix& sigma0,
                   std::span<const double> diff) {
  const auto c1 = cholesky_inverse(sigma1);
  const auto c0 = cholesky_inverse(sigma0);
  return 0.5 * quadratic_form(c0.inverse, diff) - 0.5 * quadratic_form(c1.inverse, diff) +
         0.5 * (c0.log_det - c1.log_det);
}

MgLlrScorer::MgLlrScorer(const SymMatrix& sigma1, const SymMatrix& sigma0) {
  const auto c1 = cholesky_inverse(sigma1);
  const auto c0 = cholesky_inverse(sigma0);
  inv1_ = c1.inverse;
  inv0_ = c0.inverse;
  half_log_det_ratio_ = 0.5 * (c0.log_det - c1.log_det);
}

double MgLlrScorer::score(std::span<const double> diff) const {
  return 0.5 * quadratic_form(inv0_, diff) - 0.5 * quadratic_form(inv1_, diff) +
         half_log_det_ratio_;
}

}  // namespace glrtml::glrt_mg
