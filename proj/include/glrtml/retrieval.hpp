#pragma once

#include <functional>
#include <map>
#include <span>
#include <vector>

#include "glrtml/numerics.hpp"

namespace glrtml::retrieval {

// Pairwise scorer over (query, gallery) embeddings.
using PairScoreFn = std::function<double(const Vec&, const Vec&)>;

Mat score_matrix(std::span<const Vec> queries, std::span<const Vec> gallery,
                 const PairScoreFn& score);

// dot(q,g)/(|q||g|); zero vectors score 0 by convention.
Mat cosine_score_matrix(std::span<const Vec> queries, std::span<const Vec> gallery);

// Query-gallery score matrix with relevance flags. Distractors (label -1)
// are never relevant.
struct RetrievalRun {
  Mat scores;
  std::vector<std::vector<char>> relevance;
  std::vector<int> k_list{50};
};

RetrievalRun make_run(Mat scores, std::span<const int> query_labels,
                      std::span<const int> gallery_labels, std::vector<int> k_list = {50});

// Precision averaged at relevant ranks over the total relevant count; ties
// broken by gallery index for determinism.
double average_precision(std::span<const double> scores, std::span<const char> relevance);

struct Metrics {
  double map = 0.0;
  std::map<int, double> recall_at;
  std::map<int, double> precision_at;
  std::vector<double> per_query_ap;  // NaN for unanswerable queries
  int evaluated = 0;                 // queries with at least one relevant item
  int unanswerable = 0;              // queries with none, excluded from the means
};

Metrics metrics(const RetrievalRun& run);

// Empirical score-thresholding diagnostic: P_FA / P_D over a descending
// threshold grid spanning the score range, with a final below-minimum anchor
// so the curve reaches (1,1).
struct RocCurve {
  Vec thresholds;
  Vec p_fa;
  Vec p_d;
};

RocCurve roc_curve(std::span<const double> pos_scores, std::span<const double> neg_scores,
                   int grid_size);

// P_D at a target P_FA by linear interpolation along the curve (extended
// through (0,0)).
double roc_pd_at_pfa(const RocCurve& curve, double pfa);

}  // namespace glrtml::retrieval
