#pragma once

#include <span>
#include <vector>

#include "glrtml/numerics.hpp"

namespace glrtml::glrt_mg {

using numerics::ClipMode;
using numerics::SymMatrix;

enum class Hypothesis { Paired, Unpaired };

// Differential embedding x_i - x_j with its pair polarity. Negating the
// vector yields an equally valid member of the same hypothesis set.
struct DiffEmbedding {
  Vec vector;
  Hypothesis hypothesis = Hypothesis::Paired;
};

// Estimated covariances for both hypotheses plus the clipped quadratic-form
// matrix the similarity score evaluates.
struct MgModel {
  SymMatrix sigma1;
  SymMatrix sigma0;
  SymMatrix form;  // clip(sigma0^-1 - sigma1^-1)
  ClipMode clip_mode = ClipMode::ForcePositiveDefinite;
  double clip_eps = 1e-6;
  double ridge = 0.0;
};

// Zero-mean MLE covariance (1/N) sum x x^T plus ridge*I.
SymMatrix estimate_cov(std::span<const Vec> diffs, double ridge);

// Same estimate with the ridge scaled to the data: ridge_rel * trace/dim,
// falling back to ridge_rel itself when the raw estimate is all zero.
SymMatrix estimate_cov_scaled_ridge(std::span<const Vec> diffs, double ridge_rel);

MgModel build_mg_model(const SymMatrix& sigma1, const SymMatrix& sigma0, ClipMode clip_mode,
                       double clip_eps);

// Similarity score: diff^T form diff. Even in the diff, so pair order never
// matters.
double mg_score(const MgModel& model, std::span<const double> diff);

// Exact zero-mean log-likelihood ratio including the log-determinant
// constant; the ranking oracle for the clipped score.
double mg_full_llr(const SymMatrix& sigma1, const SymMatrix& sigma0, std::span<const double> diff);

// Caches the inverses and log-determinant difference for bulk full-LLR
// scoring.
class MgLlrScorer {
 public:
  MgLlrScorer(const SymMatrix& sigma1, const SymMatrix& sigma0);
  double score(std::span<const double> diff) const;

 private:
  SymMatrix inv1_;
  SymMatrix inv0_;
  double half_log_det_ratio_ = 0.0;  // (log|sigma0| - log|sigma1|)/2
};

}  // namespace glrtml::glrt_mg
