#include "glrtml/cplfpa.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>

#include "glrtml/errors.hpp"
#include "glrtml/sampling.hpp"

namespace glrtml::cplfpa {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

double sq_dist(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

void check_adapt_config(const AdaptConfig& cfg) {
  if (cfg.k < 2) throw InvalidConfig("cplfpa: k must be >= 2");
  if (cfg.pos_budget < 1 || cfg.neg_budget < 1)
    throw InvalidConfig("cplfpa: pair budgets must be >= 1");
  if (cfg.gmm_k1 < 1 || cfg.gmm_k0 < 1) throw InvalidConfig("cplfpa: gmm component counts");
}

glrt_mg::MgModel mg_from_diffs(const std::vector<Vec>& pos, const std::vector<Vec>& neg,
                               const AdaptConfig& cfg) {
  const auto sigma1 = glrt_mg::estimate_cov_scaled_ridge(pos, cfg.ridge_rel);
  const auto sigma0 = glrt_mg::estimate_cov_scaled_ridge(neg, cfg.ridge_rel);
  glrt_mg::MgModel model = glrt_mg::build_mg_model(sigma1, sigma0, cfg.clip_mode, cfg.clip_eps);
  model.ridge = cfg.ridge_rel;
  return model;
}

trainer::GmmPair gmm_from_diffs(const std::vector<Vec>& pos, const std::vector<Vec>& neg,
                                const AdaptConfig& cfg) {
  const auto sym_pos = glrt_gmm::symmetrize(pos);
  const auto sym_neg = glrt_gmm::symmetrize(neg);
  glrt_gmm::EmOptions opts;
  opts.seed = cfg.seed;
  opts.max_iters = cfg.em_max_iters;
  opts.tol = cfg.em_tol;
  opts.diagonal = cfg.gmm_diagonal;
  trainer::GmmPair pair;
  opts.cov_floor = glrt_gmm::default_cov_floor(sym_pos);
  pair.h1 = glrt_gmm::em_fit_symmetric(sym_pos, cfg.gmm_k1, opts).params;
  opts.cov_floor = glrt_gmm::default_cov_floor(sym_neg);
  pair.h0 = glrt_gmm::em_fit_symmetric(sym_neg, cfg.gmm_k0, opts).params;
  return pair;
}

std::size_t gmm_free_parameters(const glrt_gmm::GmmParams& params) {
  // Mirror pairs share weight and covariance; the center component is
  // zero-mean by construction.
  const std::size_t k = params.components.size();
  const std::size_t d = params.dim();
  const std::size_t pairs = k / 2;
  const std::size_t centers = k % 2;
  const std::size_t cov_free = d * (d + 1) / 2;
  std::size_t total = pairs * (d + cov_free) + centers * cov_free;
  total += (pairs + centers > 0 ? pairs + centers - 1 : 0);  // weights, sum-to-1 constraint
  return total;
}

}  // namespace

PseudoLabeling kmeans(std::span<const Vec> points, int k, std::uint64_t seed, int max_iters) {
  if (k < 1) throw InvalidConfig("kmeans: k must be >= 1");
  if (points.size() < static_cast<std::size_t>(k))
    throw TooFewPoints("kmeans: " + std::to_string(points.size()) + " points for k=" +
                       std::to_string(k));

  std::mt19937_64 rng(seed);
  const auto seed_idx = sampling::kmeanspp_seeds(points, k, rng);

  PseudoLabeling out;
  out.centers.reserve(static_cast<std::size_t>(k));
  for (std::size_t s : seed_idx) out.centers.push_back(points[s]);
  out.assignments.assign(points.size(), -1);

  const std::size_t d = points.front().size();
  for (int iter = 0; iter < max_iters; ++iter) {
    bool changed = false;
    double inertia = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      int best = 0;
      double best_sq = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double sq = sq_dist(points[i], out.centers[static_cast<std::size_t>(c)]);
        if (sq < best_sq) {
          best_sq = sq;
          best = c;
        }
      }
      if (out.assignments[i] != best) {
        out.assignments[i] = best;
        changed = true;
      }
      inertia += best_sq;
    }
    out.inertia = inertia;
    out.inertia_history.push_back(inertia);
    if (!changed) break;

    // Recompute centers; empty clusters keep their previous center.
    std::vector<Vec> sums(static_cast<std::size_t>(k), Vec(d, 0.0));
    std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      const auto c = static_cast<std::size_t>(out.assignments[i]);
      ++counts[c];
      for (std::size_t j = 0; j < d; ++j) sums[c][j] += points[i][j];
    }
    for (std::size_t c = 0; c < static_cast<std::size_t>(k); ++c) {
      if (counts[c] == 0) continue;
      for (std::size_t j = 0; j < d; ++j)
        out.centers[c][j] = sums[c][j] / static_cast<double>(counts[c]);
    }
  }
  return out;
}

std::pair<std::vector<Vec>, std::vector<Vec>> build_pseudo_pairs(std::span<const Vec> embeddings,
                                                                 const PseudoLabeling& labeling,
                                                                 const AdaptConfig& cfg) {
  if (labeling.assignments.size() != embeddings.size())
    throw DimensionMismatch("build_pseudo_pairs: labeling does not cover embeddings");

  const auto& y = labeling.assignments;
  std::mt19937_64 pos_rng(cfg.seed ^ 0x9057aULL);
  std::mt19937_64 neg_rng(cfg.seed ^ 0xe6a71ULL);
  const auto pos_pairs = sampling::reservoir_sample_pairs(
      embeddings.size(), [&](std::size_t i, std::size_t j) { return y[i] == y[j]; },
      static_cast<std::size_t>(cfg.pos_budget), pos_rng);
  const auto neg_pairs = sampling::reservoir_sample_pairs(
      embeddings.size(), [&](std::size_t i, std::size_t j) { return y[i] != y[j]; },
      static_cast<std::size_t>(cfg.neg_budget), neg_rng);

  if (pos_pairs.empty())
    throw NoPositivePairs("build_pseudo_pairs: every cluster is a singleton; reduce k");
  if (neg_pairs.empty())
    throw NoNegativePairs("build_pseudo_pairs: all instances in one cluster; increase k");

  auto to_diffs = [&](const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
    std::vector<Vec> diffs;
    diffs.reserve(pairs.size());
    for (const auto& [i, j] : pairs) {
      Vec d(embeddings[i].size());
      for (std::size_t c = 0; c < d.size(); ++c) d[c] = embeddings[i][c] - embeddings[j][c];
      diffs.push_back(std::move(d));
    }
    return diffs;
  };
  return {to_diffs(pos_pairs), to_diffs(neg_pairs)};
}

glrt_mg::MgModel adapt_mg(std::span<const Vec> embeddings, const PseudoLabeling& labeling,
                          const AdaptConfig& cfg) {
  check_adapt_config(cfg);
  const auto [pos, neg] = build_pseudo_pairs(embeddings, labeling, cfg);
  return mg_from_diffs(pos, neg, cfg);
}

trainer::GmmPair adapt_gmm(std::span<const Vec> embeddings, const PseudoLabeling& labeling,
                           const AdaptConfig& cfg) {
  check_adapt_config(cfg);
  const auto [pos, neg] = build_pseudo_pairs(embeddings, labeling, cfg);
  return gmm_from_diffs(pos, neg, cfg);
}

AdaptResult adapt(const embedder::EmbedderParams& params,
                  std::span<const dataset::LabeledInstance> target, const AdaptConfig& cfg) {
  check_adapt_config(cfg);
  if (target.empty()) throw EmptyInput("adapt: empty target set");

  const auto t_start = Clock::now();
  std::vector<Vec> embeddings;
  embeddings.reserve(target.size());
  for (const auto& inst : target)
    embeddings.push_back(embedder::forward(params, inst.features).embedding);

  const auto t_cluster = Clock::now();
  const PseudoLabeling labeling = kmeans(embeddings, cfg.k, cfg.seed);

  const auto t_diff = Clock::now();
  const auto [pos, neg] = build_pseudo_pairs(embeddings, labeling, cfg);

  const auto t_update = Clock::now();
  AdaptResult result;
  result.n_pos_pairs = pos.size();
  result.n_neg_pairs = neg.size();
  const std::size_t d = static_cast<std::size_t>(params.d);
  if (cfg.variant == trainer::GlrtVariant::Mg) {
    result.model = mg_from_diffs(pos, neg, cfg);
    result.free_parameters = d * (d + 1);  // two symmetric covariances
    result.nominal_parameters = d * d;     // the form-matrix count quoted for the method
  } else {
    trainer::GmmPair pair = gmm_from_diffs(pos, neg, cfg);
    result.free_parameters = gmm_free_parameters(pair.h1) + gmm_free_parameters(pair.h0);
    const std::size_t ktot = static_cast<std::size_t>(cfg.gmm_k1 + cfg.gmm_k0);
    result.nominal_parameters = ktot * d * (d + 2) / 2 + ktot;
    result.model = std::move(pair);
  }

  const auto t_end = Clock::now();
  result.timing.clustering_ms =
      std::chrono::duration<double, std::milli>(t_diff - t_cluster).count();
  result.timing.diff_ms = std::chrono::duration<double, std::milli>(t_update - t_diff).count();
  result.timing.update_ms = std::chrono::duration<double, std::milli>(t_end - t_update).count();
  result.timing.total_ms = ms_since(t_start);
  return result;
}

}  // namespace glrtml::cplfpa
