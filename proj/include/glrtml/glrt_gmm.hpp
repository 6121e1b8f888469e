#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "glrtml/numerics.hpp"

namespace glrtml::glrt_gmm {

using numerics::SymMatrix;

struct GaussComponent {
  double weight = 1.0;
  Vec mean;
  SymMatrix cov;
};

// Mixture parameters for one hypothesis; weights sum to 1 and every
// covariance stays positive definite through the covariance floor.
struct GmmParams {
  std::vector<GaussComponent> components;
  std::size_t dim() const { return components.empty() ? 0 : components.front().mean.size(); }
};

// Row-stochastic posterior matrix gamma[sample][component].
using Responsibilities = Mat;

double gauss_logpdf(const Vec& mean, const SymMatrix& cov, std::span<const double> x);

double gmm_logpdf(const GmmParams& params, std::span<const double> x);

// Precomputed component inverses for bulk density work.
class GmmDensity {
 public:
  explicit GmmDensity(const GmmParams& params);
  double logpdf(std::span<const double> x) const;
  Vec responsibilities(std::span<const double> x) const;  // E-step row for x
  Vec grad_logpdf(std::span<const double> x) const;
  const GmmParams& params() const { return params_; }

 private:
  GmmParams params_;
  std::vector<SymMatrix> inv_;
  std::vector<double> log_norm_;  // log pi_k - (d/2)log(2pi) - (1/2)log|cov_k|
};

struct EmOptions {
  std::uint64_t seed = 0;
  int max_iters = 200;
  double tol = 1e-8;       // relative log-likelihood improvement
  double cov_floor = 1e-9; // absolute eigenvalue floor per component
  bool diagonal = false;   // constrain covariances to diagonals in the M-step
};

struct EmResult {
  GmmParams params;
  std::vector<double> log_likelihood_history;  // nondecreasing within fp noise
};

// Standard EM: k-means++ seeded means, pooled-covariance init, uniform
// weights. Empty components are re-seeded at the lowest-likelihood sample.
EmResult em_fit(std::span<const Vec> samples, int k, const EmOptions& opts);

// EM with mirror-paired components for symmetrized sample sets (x and -x
// both present). The returned density is even: components come in
// (mean, -mean) pairs sharing weight and covariance, with a zero-mean
// component when k is odd.
EmResult em_fit_symmetric(std::span<const Vec> samples, int k, const EmOptions& opts);

// Default absolute covariance floor: 1e-6 * trace(pooled)/d.
double default_cov_floor(std::span<const Vec> samples);

// {x} -> {x, -x}, interleaved so paired entries cancel exactly.
std::vector<Vec> symmetrize(std::span<const Vec> diffs);

// Responsibility matrix of samples under params (one E-step, rows normalized
// exactly).
Responsibilities em_responsibilities(const GmmParams& params, std::span<const Vec> samples);

// Eq.-15-style similarity: log p(x | H1 mixture) - log p(x | H0 mixture).
double gmm_score(const GmmParams& model1, const GmmParams& model0, std::span<const double> diff);

class GmmScorer {
 public:
  GmmScorer(const GmmParams& model1, const GmmParams& model0) : p1_(model1), p0_(model0) {}
  double score(std::span<const double> diff) const { return p1_.logpdf(diff) - p0_.logpdf(diff); }
  // d score / d diff, used when chaining into embeddings.
  Vec grad(std::span<const double> diff) const;

 private:
  GmmDensity p1_;
  GmmDensity p0_;
};

// Weighted-Mahalanobis approximation of the mixture score against a
// simplified zero-mean H1 covariance: -D^2(x,0,sigma1)/2 plus the
// responsibility-weighted H0 component distances, constant dropped.
double weighted_mahalanobis_approx(const SymMatrix& sigma1_simplified, const GmmParams& model0,
                                   std::span<const double> diff);

}  // namespace glrtml::glrt_gmm
