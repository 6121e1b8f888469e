#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "glrtml/dataset.hpp"
#include "glrtml/embedder.hpp"
#include "glrtml/glrt_gmm.hpp"
#include "glrtml/glrt_mg.hpp"
#include "glrtml/loss.hpp"
#include "glrtml/numerics.hpp"

namespace glrtml::trainer {

enum class GlrtVariant { Mg, Gmm };

struct GmmPair {
  glrt_gmm::GmmParams h1;
  glrt_gmm::GmmParams h0;
};

using HypothesisModel = std::variant<glrt_mg::MgModel, GmmPair>;

struct TrainConfig {
  int t0 = 100;           // identity-pretraining epochs
  int t1_minus_t0 = 50;   // alternating-stage epochs
  int batch_size = 64;
  double lr_stage1 = 0.05;
  double lr_stage2 = 0.005;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  int d = 64;             // embedding length
  int hidden = 32;
  std::uint64_t seed = 0;
  GlrtVariant variant = GlrtVariant::Mg;
  int gmm_k1 = 1;
  int gmm_k0 = 1;
  bool gmm_diagonal = false;
  // NoClip keeps the natural sign of sigma0^-1 - sigma1^-1 during training;
  // see README on clip modes.
  numerics::ClipMode clip_mode = numerics::ClipMode::NoClip;
  double clip_eps = 1e-6;
  double ridge_rel = 1e-4;    // ridge as a fraction of trace/d
  loss::LossConfig loss;
  int pair_budget = 50000;    // estimation diffs per polarity
  int em_max_iters = 200;
  double em_tol = 1e-8;
};

struct EpochRecord {
  int epoch = 0;
  int stage = 1;
  double mean_pair_loss = 0.0;
  double mean_identity_loss = 0.0;
  double wall_ms = 0.0;
  int pair_term_skipped = 0;  // batches that had no positive or no negative pair
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  embedder::EmbedderParams params;
  embedder::SgdState opt_state;
  std::vector<int> class_labels;  // sorted vocabulary backing the classifier head
  HypothesisModel model;
};

struct Callbacks {
  std::function<void(const EpochRecord&)> on_epoch;
  // Fires before each stage-2 batch step with the model in force; the same
  // model instance applies to every batch of an epoch.
  std::function<void(int epoch, int batch, const HypothesisModel&)> on_batch;
};

// Sorted distinct labels >= 0; distractors never enter the vocabulary.
std::vector<int> class_vocabulary(std::span<const dataset::LabeledInstance> instances);
int label_index(const std::vector<int>& vocab, int label);

// All unordered same-label pairs as positives and different-label pairs as
// negatives; diffs left empty.
loss::PairBatch build_batch_pairs(std::span<const int> labels);
void fill_pair_diffs(loss::PairBatch& batch, std::span<const Vec> embeddings);

// Unified scoring/gradient view over either hypothesis model.
class ModelScorer {
 public:
  explicit ModelScorer(const HypothesisModel& model);
  double score(std::span<const double> diff) const;
  Vec grad(std::span<const double> diff) const;  // d score / d diff

 private:
  const glrt_mg::MgModel* mg_ = nullptr;
  std::optional<glrt_gmm::GmmScorer> gmm_;
};

struct Stage1Result {
  embedder::EmbedderParams params;
  embedder::SgdState opt_state;
  std::vector<int> class_labels;
  std::vector<EpochRecord> epochs;
};

Stage1Result train_stage1(std::span<const dataset::LabeledInstance> train, const TrainConfig& cfg,
                          const Callbacks& callbacks = {});

// Fits the hypothesis model on the full train set: forward pass, seeded pair
// subsampling per polarity budget, then MLE covariances or symmetrized EM.
HypothesisModel estimate_epoch_model(const embedder::EmbedderParams& params,
                                     std::span<const dataset::LabeledInstance> train,
                                     const TrainConfig& cfg);

TrainReport train_stage2(Stage1Result stage1, std::span<const dataset::LabeledInstance> train,
                         const TrainConfig& cfg, const Callbacks& callbacks = {});

TrainReport train_full(std::span<const dataset::LabeledInstance> train, const TrainConfig& cfg,
                       const Callbacks& callbacks = {});

// Identity-loss-only baseline over the same epoch/learning-rate schedule.
TrainReport train_identity_only(std::span<const dataset::LabeledInstance> train,
                                const TrainConfig& cfg, const Callbacks& callbacks = {});

// One full-batch loss/gradient evaluation against a frozen hypothesis model.
struct BatchEval {
  double pair_loss = 0.0;
  double identity_loss = 0.0;
  double total = 0.0;
  embedder::EmbedderParams grads;
  bool pair_term_used = false;
};

BatchEval evaluate_batch(const embedder::EmbedderParams& params,
                         std::span<const dataset::LabeledInstance> batch,
                         const std::vector<int>& vocab, const HypothesisModel& model,
                         const loss::LossConfig& loss_cfg);

}  // namespace glrtml::trainer
