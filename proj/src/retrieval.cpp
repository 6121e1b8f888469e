#include "glrtml/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "glrtml/errors.hpp"

namespace glrtml::retrieval {

Mat score_matrix(std::span<const Vec> queries, std::span<const Vec> gallery,
                 const PairScoreFn& score) {
  Mat m(queries.size(), gallery.size());
  for (std::size_t i = 0; i < queries.size(); ++i)
    for (std::size_t j = 0; j < gallery.size(); ++j) m(i, j) = score(queries[i], gallery[j]);
  return m;
}

Mat cosine_score_matrix(std::span<const Vec> queries, std::span<const Vec> gallery) {
  auto cosine = [](const Vec& q, const Vec& g) {
    if (q.size() != g.size()) throw DimensionMismatch("cosine_score_matrix: dimension mismatch");
    const double nq = numerics::norm2(q);
    const double ng = numerics::norm2(g);
    if (nq == 0.0 || ng == 0.0) return 0.0;
    return numerics::dot(q, g) / (nq * ng);
  };
  return score_matrix(queries, gallery, cosine);
}

RetrievalRun make_run(Mat scores, std::span<const int> query_labels,
                      std::span<const int> gallery_labels, std::vector<int> k_list) {
  if (scores.rows != query_labels.size() || scores.cols != gallery_labels.size())
    throw DimensionMismatch("make_run: score matrix shape vs label counts");
  RetrievalRun run;
  run.scores = std::move(scores);
  run.k_list = std::move(k_list);
  run.relevance.assign(query_labels.size(), std::vector<char>(gallery_labels.size(), 0));
  for (std::size_t i = 0; i < query_labels.size(); ++i) {
    for (std::size_t j = 0; j < gallery_labels.size(); ++j) {
      const bool rel = query_labels[i] >= 0 && gallery_labels[j] == query_labels[i];
      run.relevance[i][j] = rel ? 1 : 0;
    }
  }
  return run;
}

double average_precision(std::span<const double> scores, std::span<const char> relevance) {
  if (scores.size() != relevance.size())
    throw DimensionMismatch("average_precision: score/relevance length mismatch");

  std::size_t total_relevant = 0;
  for (char r : relevance) total_relevant += r ? 1 : 0;
  if (total_relevant == 0) return std::numeric_limits<double>::quiet_NaN();

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  double ap = 0.0;
  std::size_t hits = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (relevance[order[rank]]) {
      ++hits;
      ap += static_cast<double>(hits) / static_cast<double>(rank + 1);
    }
  }
  return ap / static_cast<double>(total_relevant);
}

Metrics metrics(const RetrievalRun& run) {
  Metrics out;
  const std::size_t nq = run.scores.rows;
  const std::size_t ng = run.scores.cols;
  out.per_query_ap.assign(nq, std::numeric_limits<double>::quiet_NaN());

  std::map<int, double> recall_sum, precision_sum;
  for (int k : run.k_list) {
    recall_sum[k] = 0.0;
    precision_sum[k] = 0.0;
  }

  double ap_sum = 0.0;
  for (std::size_t i = 0; i < nq; ++i) {
    std::span<const double> row(&run.scores.a[i * ng], ng);
    std::span<const char> rel(run.relevance[i].data(), ng);

    std::size_t total_relevant = 0;
    for (char r : rel) total_relevant += r ? 1 : 0;
    if (total_relevant == 0) {
      ++out.unanswerable;
      continue;
    }
    ++out.evaluated;

    out.per_query_ap[i] = average_precision(row, rel);
    ap_sum += out.per_query_ap[i];

    std::vector<std::size_t> order(ng);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
    for (int k : run.k_list) {
      const std::size_t cut = std::min<std::size_t>(static_cast<std::size_t>(k), ng);
      std::size_t hits = 0;
      for (std::size_t r = 0; r < cut; ++r) hits += rel[order[r]] ? 1 : 0;
      recall_sum[k] += static_cast<double>(hits) / static_cast<double>(total_relevant);
      precision_sum[k] += static_cast<double>(hits) / static_cast<double>(k);
    }
  }

  if (out.evaluated > 0) {
    out.map = ap_sum / out.evaluated;
    for (int k : run.k_list) {
      out.recall_at[k] = recall_sum[k] / out.evaluated;
      out.precision_at[k] = precision_sum[k] / out.evaluated;
    }
  }
  return out;
}

RocCurve roc_curve(std::span<const double> pos_scores, std::span<const double> neg_scores,
                   int grid_size) {
  if (pos_scores.empty() || neg_scores.empty())
    throw EmptyInput("roc_curve: both score sets must be non-empty");
  if (grid_size < 2) throw InvalidConfig("roc_curve: grid_size must be >= 2");

  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (double s : pos_scores) {
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  for (double s : neg_scores) {
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  const double step = hi > lo ? (hi - lo) / (grid_size - 1) : 1.0;

  RocCurve curve;
  curve.thresholds.reserve(static_cast<std::size_t>(grid_size) + 1);
  for (int t = 0; t < grid_size; ++t) curve.thresholds.push_back(hi - step * t);
  curve.thresholds.push_back(lo - step);  // anchor so (1,1) is always reached

  auto rate_above = [](std::span<const double> scores, double beta) {
    std::size_t n = 0;
    for (double s : scores) n += s > beta ? 1 : 0;
    return static_cast<double>(n) / static_cast<double>(scores.size());
  };
  for (double beta : curve.thresholds) {
    curve.p_fa.push_back(rate_above(neg_scores, beta));
    curve.p_d.push_back(rate_above(pos_scores, beta));
  }
  return curve;
}

double roc_pd_at_pfa(const RocCurve& curve, double pfa) {
  // Walk the curve from (0,0); p_fa is nondecreasing along it.
  double prev_fa = 0.0;
  double prev_d = 0.0;
  for (std::size_t i = 0; i < curve.p_fa.size(); ++i) {
    const double fa = curve.p_fa[i];
    const double d = curve.p_d[i];
    if (fa >= pfa) {
      if (fa == prev_fa) return std::max(prev_d, d);
      const double t = (pfa - prev_fa) / (fa - prev_fa);
      return prev_d + t * (d - prev_d);
    }
    prev_fa = fa;
    prev_d = d;
  }
  return prev_d;
}

}  // namespace glrtml::retrieval
