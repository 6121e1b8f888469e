#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "glrtml/dataset.hpp"
#include "glrtml/embedder.hpp"
#include "glrtml/trainer.hpp"

namespace glrtml::cplfpa {

struct PseudoLabeling {
  std::vector<int> assignments;  // cluster id in [0, k) per instance
  std::vector<Vec> centers;
  double inertia = 0.0;
  std::vector<double> inertia_history;  // nonincreasing across Lloyd iterations
};

// k-means++ init, Lloyd iterations to an assignment fixpoint (or the cap).
PseudoLabeling kmeans(std::span<const Vec> points, int k, std::uint64_t seed,
                      int max_iters = 300);

struct AdaptConfig {
  int k = 8;
  int pos_budget = 20000;
  int neg_budget = 20000;
  std::uint64_t seed = 0;
  trainer::GlrtVariant variant = trainer::GlrtVariant::Mg;
  int gmm_k1 = 1;
  int gmm_k0 = 1;
  bool gmm_diagonal = false;
  numerics::ClipMode clip_mode = numerics::ClipMode::NoClip;
  double clip_eps = 1e-6;
  double ridge_rel = 1e-4;
  int em_max_iters = 200;
  double em_tol = 1e-8;
};

// Seeded uniform pair sampling without replacement from the pseudo-label
// pair space; diffs are x_i - x_j with i < j.
std::pair<std::vector<Vec>, std::vector<Vec>> build_pseudo_pairs(std::span<const Vec> embeddings,
                                                                 const PseudoLabeling& labeling,
                                                                 const AdaptConfig& cfg);

// Hypothesis parameters re-estimated from pseudo-pair diffs; the embedder is
// never touched.
glrt_mg::MgModel adapt_mg(std::span<const Vec> embeddings, const PseudoLabeling& labeling,
                          const AdaptConfig& cfg);
trainer::GmmPair adapt_gmm(std::span<const Vec> embeddings, const PseudoLabeling& labeling,
                           const AdaptConfig& cfg);

struct AdaptTiming {
  double clustering_ms = 0.0;
  double diff_ms = 0.0;
  double update_ms = 0.0;
  double total_ms = 0.0;
};

struct AdaptResult {
  trainer::HypothesisModel model;
  AdaptTiming timing;
  std::size_t n_pos_pairs = 0;
  std::size_t n_neg_pairs = 0;
  // Free entries actually re-estimated vs the nominal count quoted for the
  // method (d^2 for the MG form; the mixture bound otherwise).
  std::size_t free_parameters = 0;
  std::size_t nominal_parameters = 0;
};

AdaptResult adapt(const embedder::EmbedderParams& params,
                  std::span<const dataset::LabeledInstance> target, const AdaptConfig& cfg);

}  // namespace glrtml::cplfpa
