#include "glrtml/glrt_gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "glrtml/errors.hpp"
#include "glrtml/sampling.hpp"

namespace glrtml::glrt_gmm {

using numerics::cholesky_inverse;
using numerics::log_sum_exp;
using numerics::quadratic_form;
using numerics::sym_eigen;

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kEmptyMass = 1e-12;
constexpr int kMaxReseeds = 8;

void check_dim(std::span<const Vec> samples) {
  if (samples.empty()) throw EmptyInput("em_fit: no samples");
  const std::size_t d = samples.front().size();
  for (const Vec& s : samples)
    if (s.size() != d) throw DimensionMismatch("em_fit: inconsistent sample dimension");
}

SymMatrix pooled_covariance(std::span<const Vec> samples) {
  const std::size_t d = samples.front().size();
  Vec mean(d, 0.0);
  for (const Vec& s : samples)
    for (std::size_t i = 0; i < d; ++i) mean[i] += s[i];
  for (double& v : mean) v /= static_cast<double>(samples.size());

  SymMatrix cov(d);
  for (const Vec& s : samples) {
    for (std::size_t i = 0; i < d; ++i) {
      const double di = s[i] - mean[i];
      for (std::size_t j = i; j < d; ++j) cov.a[i * d + j] += di * (s[j] - mean[j]);
    }
  }
  const double inv_n = 1.0 / static_cast<double>(samples.size());
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i; j < d; ++j) cov.set(i, j, cov.a[i * d + j] * inv_n);
  return cov;
}

// Clamp eigenvalues to >= floor; leaves the matrix untouched when the floor
// is slack so converged covariances stay bit-stable.
void floor_covariance(SymMatrix& cov, double floor, bool diagonal) {
  if (diagonal) {
    SymMatrix out(cov.dim);
    for (std::size_t i = 0; i < cov.dim; ++i) out.set(i, i, std::max(cov(i, i), floor));
    cov = std::move(out);
    return;
  }
  const auto ed = sym_eigen(cov);
  if (ed.eigenvalues.back() >= floor) return;
  Vec lambda = ed.eigenvalues;
  for (double& l : lambda) l = std::max(l, floor);
  SymMatrix out(cov.dim);
  for (std::size_t i = 0; i < cov.dim; ++i)
    for (std::size_t j = i; j < cov.dim; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < cov.dim; ++k)
        s += ed.eigenvectors(i, k) * lambda[k] * ed.eigenvectors(j, k);
      out.set(i, j, s);
    }
  cov = std::move(out);
}

struct ComponentCache {
  SymMatrix inv;
  double log_norm = 0.0;  // log w - (d/2)log(2pi) - (1/2)log|cov|
};

std::vector<ComponentCache> build_caches(const GmmParams& params) {
  std::vector<ComponentCache> caches;
  caches.reserve(params.components.size());
  const double d = static_cast<double>(params.dim());
  for (const auto& c : params.components) {
    const auto chol = cholesky_inverse(c.cov);
    ComponentCache cc;
    cc.inv = chol.inverse;
    cc.log_norm = std::log(std::max(c.weight, 1e-300)) + (-0.5 * d * kLog2Pi - 0.5 * chol.log_det);
    caches.push_back(std::move(cc));
  }
  return caches;
}

double component_log_density(const ComponentCache& cc, const GaussComponent& comp,
                             std::span<const double> x) {
  Vec centered(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) centered[i] = x[i] - comp.mean[i];
  return cc.log_norm - 0.5 * quadratic_form(cc.inv, centered);
}

struct MirrorLayout {
  bool enabled = false;
  // Components are laid out as pairs (2p, 2p+1); odd k adds a trailing
  // zero-mean component.
  int pairs = 0;
  bool has_center = false;
};

GmmParams init_params(std::span<const Vec> samples, int k, const EmOptions& opts,
                      const MirrorLayout& mirror, std::mt19937_64& rng) {
  const std::size_t d = samples.front().size();
  SymMatrix pooled = pooled_covariance(samples);
  if (opts.diagonal) {
    SymMatrix diag_only(d);
    for (std::size_t i = 0; i < d; ++i) diag_only.set(i, i, pooled(i, i));
    pooled = std::move(diag_only);
  }
  floor_covariance(pooled, opts.cov_floor, opts.diagonal);

  GmmParams params;
  params.components.resize(static_cast<std::size_t>(k));
  for (auto& c : params.components) {
    c.weight = 1.0 / static_cast<double>(k);
    c.cov = pooled;
  }

  if (!mirror.enabled) {
    const auto seeds = sampling::kmeanspp_seeds(samples, k, rng);
    for (int i = 0; i < k; ++i) params.components[static_cast<std::size_t>(i)].mean = samples[seeds[static_cast<std::size_t>(i)]];
    return params;
  }

  if (mirror.pairs > 0) {
    const auto seeds = sampling::kmeanspp_seeds(samples, mirror.pairs, rng);
    for (int p = 0; p < mirror.pairs; ++p) {
      const Vec& m = samples[seeds[static_cast<std::size_t>(p)]];
      Vec neg(m.size());
      for (std::size_t i = 0; i < m.size(); ++i) neg[i] = -m[i];
      params.components[static_cast<std::size_t>(2 * p)].mean = m;
      params.components[static_cast<std::size_t>(2 * p + 1)].mean = std::move(neg);
    }
  }
  if (mirror.has_center) params.components.back().mean.assign(d, 0.0);
  return params;
}

// Replace a starved component at the lowest-likelihood sample and even out
// the weights. Mirror runs reseed the partner at the negated sample.
void reseed_component(GmmParams& params, std::size_t comp, std::span<const Vec> samples,
                      const Vec& sample_lse, const SymMatrix& pooled,
                      const MirrorLayout& mirror) {
  std::size_t worst = 0;
  for (std::size_t n = 1; n < sample_lse.size(); ++n)
    if (sample_lse[n] < sample_lse[worst]) worst = n;

  const double k = static_cast<double>(params.components.size());
  auto reset = [&](std::size_t idx, bool negate) {
    auto& c = params.components[idx];
    c.mean = samples[worst];
    if (negate)
      for (double& v : c.mean) v = -v;
    c.cov = pooled;
    c.weight = 1.0 / k;
  };

  if (mirror.enabled && comp < static_cast<std::size_t>(2 * mirror.pairs)) {
    const std::size_t base = comp - (comp % 2);
    reset(base, false);
    reset(base + 1, true);
  } else if (mirror.enabled) {
    // Center component restarts at zero mean.
    auto& c = params.components[comp];
    c.mean.assign(c.mean.size(), 0.0);
    c.cov = pooled;
    c.weight = 1.0 / k;
  } else {
    reset(comp, false);
  }
  double total = 0.0;
  for (const auto& c : params.components) total += c.weight;
  for (auto& c : params.components) c.weight /= total;
}

void mirror_projection(GmmParams& params, const MirrorLayout& mirror) {
  for (int p = 0; p < mirror.pairs; ++p) {
    auto& a = params.components[static_cast<std::size_t>(2 * p)];
    auto& b = params.components[static_cast<std::size_t>(2 * p + 1)];
    const double w = 0.5 * (a.weight + b.weight);
    a.weight = w;
    b.weight = w;
    for (std::size_t i = 0; i < a.mean.size(); ++i) {
      const double m = 0.5 * (a.mean[i] - b.mean[i]);
      a.mean[i] = m;
      b.mean[i] = -m;
    }
    for (std::size_t i = 0; i < a.cov.a.size(); ++i) {
      const double c = 0.5 * (a.cov.a[i] + b.cov.a[i]);
      a.cov.a[i] = c;
      b.cov.a[i] = c;
    }
  }
  if (mirror.has_center) {
    auto& c = params.components.back();
    c.mean.assign(c.mean.size(), 0.0);
  }
}

EmResult run_em(std::span<const Vec> samples, int k, const EmOptions& opts,
                const MirrorLayout& mirror) {
  check_dim(samples);
  if (k < 1) throw InvalidConfig("em_fit: k must be >= 1");
  if (!(opts.cov_floor > 0.0)) throw InvalidConfig("em_fit: cov_floor must be > 0");
  if (samples.size() < static_cast<std::size_t>(k))
    throw TooFewPoints("em_fit: fewer samples than components");

  const std::size_t n = samples.size();
  const std::size_t d = samples.front().size();
  const std::size_t kk = static_cast<std::size_t>(k);

  std::mt19937_64 rng(opts.seed);
  GmmParams params = init_params(samples, k, opts, mirror, rng);
  SymMatrix pooled = params.components.front().cov;  // floored pooled covariance

  EmResult result;
  double prev_ll = -std::numeric_limits<double>::infinity();
  Mat log_comp(n, kk);
  Vec lse(n);
  int reseeds = 0;

  for (int it = 0;; ++it) {
    const auto caches = build_caches(params);
    double ll = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t c = 0; c < kk; ++c)
        log_comp(s, c) = component_log_density(caches[c], params.components[c], samples[s]);
      lse[s] = log_sum_exp(std::span<const double>(&log_comp.a[s * kk], kk));
      ll += lse[s];
    }
    result.log_likelihood_history.push_back(ll);

    const bool converged =
        it > 0 && (ll - prev_ll) <= opts.tol * (std::abs(prev_ll) + 1e-12);
    if (converged || it >= opts.max_iters) break;
    prev_ll = ll;

    // E-step rows, renormalized exactly.
    Vec mass(kk, 0.0);
    for (std::size_t s = 0; s < n; ++s) {
      double row = 0.0;
      for (std::size_t c = 0; c < kk; ++c) {
        log_comp(s, c) = std::exp(log_comp(s, c) - lse[s]);
        row += log_comp(s, c);
      }
      for (std::size_t c = 0; c < kk; ++c) {
        log_comp(s, c) /= row;
        mass[c] += log_comp(s, c);
      }
    }

    bool starved = false;
    for (std::size_t c = 0; c < kk; ++c) {
      if (mass[c] < kEmptyMass) {
        if (++reseeds > kMaxReseeds)
          throw EmptyComponent("em_fit: component " + std::to_string(c) +
                               " repeatedly starved; reduce k");
        reseed_component(params, c, samples, lse, pooled, mirror);
        starved = true;
        break;
      }
    }
    if (starved) continue;

    // M-step.
    for (std::size_t c = 0; c < kk; ++c) {
      auto& comp = params.components[c];
      comp.weight = mass[c] / static_cast<double>(n);
      Vec mean(d, 0.0);
      for (std::size_t s = 0; s < n; ++s)
        for (std::size_t i = 0; i < d; ++i) mean[i] += log_comp(s, c) * samples[s][i];
      for (double& v : mean) v /= mass[c];

      SymMatrix cov(d);
      for (std::size_t s = 0; s < n; ++s) {
        const double g = log_comp(s, c);
        for (std::size_t i = 0; i < d; ++i) {
          const double di = samples[s][i] - mean[i];
          if (opts.diagonal) {
            cov.a[i * d + i] += g * di * di;
          } else {
            for (std::size_t j = i; j < d; ++j) cov.a[i * d + j] += g * di * (samples[s][j] - mean[j]);
          }
        }
      }
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i; j < d; ++j) cov.set(i, j, cov.a[i * d + j] / mass[c]);
      floor_covariance(cov, opts.cov_floor, opts.diagonal);
      comp.mean = std::move(mean);
      comp.cov = std::move(cov);
    }
    double total_w = 0.0;
    for (const auto& c : params.components) total_w += c.weight;
    for (auto& c : params.components) c.weight /= total_w;
  }

  if (mirror.enabled) mirror_projection(params, mirror);
  result.params = std::move(params);
  return result;
}

}  // namespace

double gauss_logpdf(const Vec& mean, const SymMatrix& cov, std::span<const double> x) {
  if (mean.size() != cov.dim || x.size() != cov.dim)
    throw DimensionMismatch("gauss_logpdf: dimension mismatch");
  const auto chol = cholesky_inverse(cov);
  Vec centered(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) centered[i] = x[i] - mean[i];
  const double log_norm = -0.5 * static_cast<double>(cov.dim) * kLog2Pi - 0.5 * chol.log_det;
  return log_norm - 0.5 * quadratic_form(chol.inverse, centered);
}

double gmm_logpdf(const GmmParams& params, std::span<const double> x) {
  return GmmDensity(params).logpdf(x);
}

GmmDensity::GmmDensity(const GmmParams& params) : params_(params) {
  if (params_.components.empty()) throw EmptyInput("GmmDensity: no components");
  const double d = static_cast<double>(params_.dim());
  for (const auto& c : params_.components) {
    if (c.mean.size() != params_.dim() || c.cov.dim != params_.dim())
      throw DimensionMismatch("GmmDensity: component dimension mismatch");
    const auto chol = cholesky_inverse(c.cov);
    inv_.push_back(chol.inverse);
    log_norm_.push_back(std::log(std::max(c.weight, 1e-300)) +
                        (-0.5 * d * kLog2Pi - 0.5 * chol.log_det));
  }
}

double GmmDensity::logpdf(std::span<const double> x) const {
  if (x.size() != params_.dim()) throw DimensionMismatch("GmmDensity::logpdf: dimension");
  Vec terms(params_.components.size());
  Vec centered(x.size());
  for (std::size_t k = 0; k < params_.components.size(); ++k) {
    const auto& c = params_.components[k];
    for (std::size_t i = 0; i < x.size(); ++i) centered[i] = x[i] - c.mean[i];
    terms[k] = log_norm_[k] - 0.5 * quadratic_form(inv_[k], centered);
  }
  return log_sum_exp(terms);
}

Vec GmmDensity::responsibilities(std::span<const double> x) const {
  Vec terms(params_.components.size());
  Vec centered(x.size());
  for (std::size_t k = 0; k < params_.components.size(); ++k) {
    const auto& c = params_.components[k];
    for (std::size_t i = 0; i < x.size(); ++i) centered[i] = x[i] - c.mean[i];
    terms[k] = log_norm_[k] - 0.5 * quadratic_form(inv_[k], centered);
  }
  const double lse = log_sum_exp(terms);
  double total = 0.0;
  for (double& t : terms) {
    t = std::exp(t - lse);
    total += t;
  }
  for (double& t : terms) t /= total;
  return terms;
}

Vec GmmDensity::grad_logpdf(std::span<const double> x) const {
  const Vec gamma = responsibilities(x);
  Vec grad(x.size(), 0.0);
  Vec centered(x.size());
  for (std::size_t k = 0; k < params_.components.size(); ++k) {
    const auto& c = params_.components[k];
    for (std::size_t i = 0; i < x.size(); ++i) centered[i] = c.mean[i] - x[i];
    const Vec pull = numerics::mat_vec(inv_[k], centered);
    for (std::size_t i = 0; i < x.size(); ++i) grad[i] += gamma[k] * pull[i];
  }
  return grad;
}

EmResult em_fit(std::span<const Vec> samples, int k, const EmOptions& opts) {
  return run_em(samples, k, opts, MirrorLayout{});
}

EmResult em_fit_symmetric(std::span<const Vec> samples, int k, const EmOptions& opts) {
  MirrorLayout mirror;
  mirror.enabled = true;
  mirror.pairs = k / 2;
  mirror.has_center = (k % 2) == 1;
  return run_em(samples, k, opts, mirror);
}

double default_cov_floor(std::span<const Vec> samples) {
  check_dim(samples);
  const SymMatrix pooled = pooled_covariance(samples);
  const double mean_eig = pooled.trace() / static_cast<double>(pooled.dim);
  return mean_eig > 0.0 ? 1e-6 * mean_eig : 1e-6;
}

std::vector<Vec> symmetrize(std::span<const Vec> diffs) {
  std::vector<Vec> out;
  out.reserve(diffs.size() * 2);
  for (const Vec& x : diffs) {
    out.push_back(x);
    Vec neg(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) neg[i] = -x[i];
    out.push_back(std::move(neg));
  }
  return out;
}

Responsibilities em_responsibilities(const GmmParams& params, std::span<const Vec> samples) {
  GmmDensity density(params);
  Responsibilities gamma(samples.size(), params.components.size());
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const Vec row = density.responsibilities(samples[s]);
    for (std::size_t k = 0; k < row.size(); ++k) gamma(s, k) = row[k];
  }
  return gamma;
}

double gmm_score(const GmmParams& model1, const GmmParams& model0, std::span<const double> diff) {
  return gmm_logpdf(model1, diff) - gmm_logpdf(model0, diff);
}

Vec GmmScorer::grad(std::span<const double> diff) const {
  const Vec g1 = p1_.grad_logpdf(diff);
  const Vec g0 = p0_.grad_logpdf(diff);
  Vec g(diff.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = g1[i] - g0[i];
  return g;
}

double weighted_mahalanobis_approx(const SymMatrix& sigma1_simplified, const GmmParams& model0,
                                   std::span<const double> diff) {
  const auto chol1 = cholesky_inverse(sigma1_simplified);
  const GmmDensity density0(model0);
  const Vec gamma = density0.responsibilities(diff);

  double score = -0.5 * quadratic_form(chol1.inverse, diff);
  Vec centered(diff.size());
  for (std::size_t k = 0; k < model0.components.size(); ++k) {
    const auto& c = model0.components[k];
    for (std::size_t i = 0; i < diff.size(); ++i) centered[i] = diff[i] - c.mean[i];
    const auto chol0 = cholesky_inverse(c.cov);
    score += 0.5 * gamma[k] * quadratic_form(chol0.inverse, centered);
  }
  return score;
}

}  // namespace glrtml::glrt_gmm
