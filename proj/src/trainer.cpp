#include "glrtml/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <set>

#include "glrtml/errors.hpp"
#include "glrtml/sampling.hpp"

namespace glrtml::trainer {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::vector<std::size_t> trainable_indices(std::span<const dataset::LabeledInstance> instances) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < instances.size(); ++i)
    if (instances[i].label != dataset::kDistractorLabel) idx.push_back(i);
  return idx;
}

void check_config(const TrainConfig& cfg) {
  if (cfg.t0 < 0 || cfg.t1_minus_t0 < 0) throw InvalidConfig("trainer: epoch counts must be >= 0");
  if (cfg.batch_size < 2) throw InvalidConfig("trainer: batch_size must be >= 2");
  if (cfg.d < 1 || cfg.hidden < 1) throw InvalidConfig("trainer: architecture dims must be >= 1");
  if (!(cfg.lr_stage1 >= 0.0) || !(cfg.lr_stage2 >= 0.0))
    throw InvalidConfig("trainer: learning rates must be >= 0");
  if (cfg.gmm_k1 < 1 || cfg.gmm_k0 < 1) throw InvalidConfig("trainer: gmm component counts");
  if (!(cfg.loss.nu > 0.0)) throw InvalidConfig("trainer: nu must be > 0");
  if (cfg.pair_budget < 1) throw InvalidConfig("trainer: pair_budget must be >= 1");
}

// Mini-batch index stream: shuffled each epoch, trailing batch dropped when
// it has fewer than 2 instances.
std::vector<std::vector<std::size_t>> make_batches(std::vector<std::size_t>& idx, int batch_size,
                                                   std::mt19937_64& rng) {
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < idx.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(idx.size(), start + static_cast<std::size_t>(batch_size));
    if (end - start < 2) break;
    batches.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(start),
                         idx.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

struct EmbeddedSet {
  std::vector<Vec> embeddings;
  std::vector<int> labels;
};

EmbeddedSet embed_trainable(const embedder::EmbedderParams& params,
                            std::span<const dataset::LabeledInstance> instances) {
  EmbeddedSet set;
  for (const auto& inst : instances) {
    if (inst.label == dataset::kDistractorLabel) continue;
    set.embeddings.push_back(embedder::forward(params, inst.features).embedding);
    set.labels.push_back(inst.label);
  }
  return set;
}

std::vector<Vec> sampled_diffs(const EmbeddedSet& set, bool positive, std::size_t budget,
                               std::mt19937_64& rng) {
  const auto& labels = set.labels;
  auto keep = [&](std::size_t i, std::size_t j) {
    return positive ? labels[i] == labels[j] : labels[i] != labels[j];
  };
  const auto pairs = sampling::reservoir_sample_pairs(set.embeddings.size(), keep, budget, rng);
  std::vector<Vec> diffs;
  diffs.reserve(pairs.size());
  for (const auto& [i, j] : pairs) {
    Vec d(set.embeddings[i].size());
    for (std::size_t c = 0; c < d.size(); ++c) d[c] = set.embeddings[i][c] - set.embeddings[j][c];
    diffs.push_back(std::move(d));
  }
  return diffs;
}

}  // namespace

std::vector<int> class_vocabulary(std::span<const dataset::LabeledInstance> instances) {
  std::set<int> labels;
  for (const auto& inst : instances)
    if (inst.label >= 0) labels.insert(inst.label);
  return {labels.begin(), labels.end()};
}

int label_index(const std::vector<int>& vocab, int label) {
  const auto it = std::lower_bound(vocab.begin(), vocab.end(), label);
  if (it == vocab.end() || *it != label)
    throw InvalidLabel("label " + std::to_string(label) + " not in training vocabulary");
  return static_cast<int>(it - vocab.begin());
}

loss::PairBatch build_batch_pairs(std::span<const int> labels) {
  loss::PairBatch batch;
  for (std::size_t i = 0; i + 1 < labels.size(); ++i) {
    for (std::size_t j = i + 1; j < labels.size(); ++j) {
      if (labels[i] == labels[j])
        batch.pos_pairs.emplace_back(i, j);
      else
        batch.neg_pairs.emplace_back(i, j);
    }
  }
  return batch;
}

void fill_pair_diffs(loss::PairBatch& batch, std::span<const Vec> embeddings) {
  auto fill = [&](const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                  std::vector<Vec>& diffs) {
    diffs.clear();
    diffs.reserve(pairs.size());
    for (const auto& [i, j] : pairs) {
      Vec d(embeddings[i].size());
      for (std::size_t c = 0; c < d.size(); ++c) d[c] = embeddings[i][c] - embeddings[j][c];
      diffs.push_back(std::move(d));
    }
  };
  fill(batch.pos_pairs, batch.pos_diffs);
  fill(batch.neg_pairs, batch.neg_diffs);
}

ModelScorer::ModelScorer(const HypothesisModel& model) {
  if (const auto* mg = std::get_if<glrt_mg::MgModel>(&model)) {
    mg_ = mg;
  } else {
    const auto& pair = std::get<GmmPair>(model);
    gmm_.emplace(pair.h1, pair.h0);
  }
}

double ModelScorer::score(std::span<const double> diff) const {
  if (mg_) return glrt_mg::mg_score(*mg_, diff);
  return gmm_->score(diff);
}

Vec ModelScorer::grad(std::span<const double> diff) const {
  if (mg_) {
    Vec g = numerics::mat_vec(mg_->form, diff);
    for (double& v : g) v *= 2.0;
    return g;
  }
  return gmm_->grad(diff);
}

BatchEval evaluate_batch(const embedder::EmbedderParams& params,
                         std::span<const dataset::LabeledInstance> batch,
                         const std::vector<int>& vocab, const HypothesisModel& model,
                         const loss::LossConfig& loss_cfg) {
  if (batch.size() < 2) throw InvalidConfig("evaluate_batch: batch needs >= 2 instances");

  std::vector<embedder::ForwardTrace> traces;
  std::vector<Vec> embeddings;
  std::vector<Vec> log_probs;
  std::vector<int> label_idx;
  std::vector<int> labels;
  traces.reserve(batch.size());
  for (const auto& inst : batch) {
    traces.push_back(embedder::forward(params, inst.features));
    embeddings.push_back(traces.back().embedding);
    log_probs.push_back(traces.back().log_probs);
    label_idx.push_back(label_index(vocab, inst.label));
    labels.push_back(inst.label);
  }

  loss::PairBatch pairs = build_batch_pairs(labels);
  fill_pair_diffs(pairs, embeddings);

  const ModelScorer scorer(model);
  Vec scores_p(pairs.pos_diffs.size());
  for (std::size_t m = 0; m < pairs.pos_diffs.size(); ++m)
    scores_p[m] = scorer.score(pairs.pos_diffs[m]);
  Vec scores_n(pairs.neg_diffs.size());
  for (std::size_t l = 0; l < pairs.neg_diffs.size(); ++l)
    scores_n[l] = scorer.score(pairs.neg_diffs[l]);

  BatchEval eval;
  eval.pair_term_used = !scores_p.empty() && !scores_n.empty();
  eval.pair_loss = loss::glrtml_pair_loss(scores_p, scores_n, loss_cfg.nu);
  eval.identity_loss = loss::identity_loss(log_probs, label_idx);
  eval.total = loss::total_loss(eval.pair_loss, eval.identity_loss, loss_cfg.alpha);

  // Chain pair-loss gradients into per-instance embedding gradients; the
  // hypothesis model is a constant here.
  std::vector<Vec> d_emb(batch.size(), Vec(static_cast<std::size_t>(params.d), 0.0));
  if (eval.pair_term_used) {
    const auto grads = loss::pair_loss_grad_scores(scores_p, scores_n, loss_cfg.nu);
    auto accumulate = [&](const std::vector<std::pair<std::size_t, std::size_t>>& idx_pairs,
                          const std::vector<Vec>& diffs, const Vec& dscores) {
      for (std::size_t p = 0; p < idx_pairs.size(); ++p) {
        if (dscores[p] == 0.0) continue;
        const Vec g = scorer.grad(diffs[p]);
        const auto [i, j] = idx_pairs[p];
        for (std::size_t c = 0; c < g.size(); ++c) {
          d_emb[i][c] += dscores[p] * g[c];
          d_emb[j][c] -= dscores[p] * g[c];
        }
      }
    };
    accumulate(pairs.pos_pairs, pairs.pos_diffs, grads.d_pos);
    accumulate(pairs.neg_pairs, pairs.neg_diffs, grads.d_neg);
  }

  std::vector<Vec> d_logp = loss::identity_loss_grad(log_probs, label_idx);
  for (auto& g : d_logp)
    for (double& v : g) v *= loss_cfg.alpha;

  eval.grads = embedder::backward(params, traces, d_emb, d_logp);
  return eval;
}

Stage1Result train_stage1(std::span<const dataset::LabeledInstance> train, const TrainConfig& cfg,
                          const Callbacks& callbacks) {
  check_config(cfg);
  Stage1Result out;
  out.class_labels = class_vocabulary(train);
  if (out.class_labels.size() < 2)
    throw InvalidConfig("train_stage1: need at least 2 labeled classes");

  const std::size_t d_in = train.empty() ? 0 : train.front().features.size();
  out.params = embedder::EmbedderParams::init(static_cast<int>(d_in), cfg.hidden, cfg.d,
                                              static_cast<int>(out.class_labels.size()), cfg.seed);
  out.opt_state = embedder::SgdState::zeros_like(out.params);

  std::vector<std::size_t> idx = trainable_indices(train);
  std::mt19937_64 rng(cfg.seed ^ 0x51a9e1ULL);

  for (int epoch = 0; epoch < cfg.t0; ++epoch) {
    const auto start = Clock::now();
    const auto batches = make_batches(idx, cfg.batch_size, rng);
    double id_sum = 0.0;
    for (const auto& b : batches) {
      std::vector<embedder::ForwardTrace> traces;
      std::vector<Vec> log_probs;
      std::vector<int> label_idx;
      for (std::size_t i : b) {
        traces.push_back(embedder::forward(out.params, train[i].features));
        log_probs.push_back(traces.back().log_probs);
        label_idx.push_back(label_index(out.class_labels, train[i].label));
      }
      id_sum += loss::identity_loss(log_probs, label_idx);
      const auto d_logp = loss::identity_loss_grad(log_probs, label_idx);
      const auto grads = embedder::backward(out.params, traces, {}, d_logp);
      embedder::sgd_step(out.params, grads, cfg.lr_stage1, cfg.momentum, cfg.weight_decay,
                         out.opt_state);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.stage = 1;
    rec.mean_identity_loss = batches.empty() ? 0.0 : id_sum / static_cast<double>(batches.size());
    rec.wall_ms = ms_since(start);
    out.epochs.push_back(rec);
    if (callbacks.on_epoch) callbacks.on_epoch(rec);
  }
  return out;
}

HypothesisModel estimate_epoch_model(const embedder::EmbedderParams& params,
                                     std::span<const dataset::LabeledInstance> train,
                                     const TrainConfig& cfg) {
  const EmbeddedSet set = embed_trainable(params, train);
  if (set.embeddings.size() < 2)
    throw InvalidConfig("estimate_epoch_model: need >= 2 labeled instances");

  std::mt19937_64 pos_rng(cfg.seed ^ 0x90517ULL);
  std::mt19937_64 neg_rng(cfg.seed ^ 0xa1705ULL);
  const auto pos_diffs =
      sampled_diffs(set, true, static_cast<std::size_t>(cfg.pair_budget), pos_rng);
  const auto neg_diffs =
      sampled_diffs(set, false, static_cast<std::size_t>(cfg.pair_budget), neg_rng);
  if (pos_diffs.empty()) throw NoPositivePairs("estimate_epoch_model: no same-label pairs");
  if (neg_diffs.empty()) throw NoNegativePairs("estimate_epoch_model: no cross-label pairs");

  if (cfg.variant == GlrtVariant::Mg) {
    const auto sigma1 = glrt_mg::estimate_cov_scaled_ridge(pos_diffs, cfg.ridge_rel);
    const auto sigma0 = glrt_mg::estimate_cov_scaled_ridge(neg_diffs, cfg.ridge_rel);
    glrt_mg::MgModel model = glrt_mg::build_mg_model(sigma1, sigma0, cfg.clip_mode, cfg.clip_eps);
    model.ridge = cfg.ridge_rel;
    return model;
  }

  const auto sym_pos = glrt_gmm::symmetrize(pos_diffs);
  const auto sym_neg = glrt_gmm::symmetrize(neg_diffs);
  glrt_gmm::EmOptions opts;
  opts.seed = cfg.seed;
  opts.max_iters = cfg.em_max_iters;
  opts.tol = cfg.em_tol;
  opts.diagonal = cfg.gmm_diagonal;
  GmmPair pair;
  opts.cov_floor = glrt_gmm::default_cov_floor(sym_pos);
  pair.h1 = glrt_gmm::em_fit_symmetric(sym_pos, cfg.gmm_k1, opts).params;
  opts.cov_floor = glrt_gmm::default_cov_floor(sym_neg);
  pair.h0 = glrt_gmm::em_fit_symmetric(sym_neg, cfg.gmm_k0, opts).params;
  return pair;
}

TrainReport train_stage2(Stage1Result stage1, std::span<const dataset::LabeledInstance> train,
                         const TrainConfig& cfg, const Callbacks& callbacks) {
  check_config(cfg);
  TrainReport report;
  report.epochs = std::move(stage1.epochs);
  report.params = std::move(stage1.params);
  report.opt_state = std::move(stage1.opt_state);
  report.class_labels = std::move(stage1.class_labels);

  std::vector<std::size_t> idx = trainable_indices(train);
  std::mt19937_64 rng(cfg.seed ^ 0x57a6e2ULL);

  for (int epoch = 0; epoch < cfg.t1_minus_t0; ++epoch) {
    const auto start = Clock::now();
    // The model estimated here stays frozen for the whole epoch.
    const HypothesisModel model = estimate_epoch_model(report.params, train, cfg);

    const auto batches = make_batches(idx, cfg.batch_size, rng);
    double pair_sum = 0.0;
    double id_sum = 0.0;
    int skipped = 0;
    int batch_no = 0;
    std::vector<dataset::LabeledInstance> batch_insts;
    for (const auto& b : batches) {
      if (callbacks.on_batch) callbacks.on_batch(cfg.t0 + epoch, batch_no, model);
      batch_insts.clear();
      for (std::size_t i : b) batch_insts.push_back(train[i]);
      BatchEval eval = evaluate_batch(report.params, batch_insts, report.class_labels, model,
                                      cfg.loss);
      embedder::sgd_step(report.params, eval.grads, cfg.lr_stage2, cfg.momentum,
                         cfg.weight_decay, report.opt_state);
      pair_sum += eval.pair_loss;
      id_sum += eval.identity_loss;
      if (!eval.pair_term_used) ++skipped;
      ++batch_no;
    }

    EpochRecord rec;
    rec.epoch = cfg.t0 + epoch;
    rec.stage = 2;
    rec.mean_pair_loss = batches.empty() ? 0.0 : pair_sum / static_cast<double>(batches.size());
    rec.mean_identity_loss = batches.empty() ? 0.0 : id_sum / static_cast<double>(batches.size());
    rec.wall_ms = ms_since(start);
    rec.pair_term_skipped = skipped;
    report.epochs.push_back(rec);
    if (callbacks.on_epoch) callbacks.on_epoch(rec);
  }

  report.model = estimate_epoch_model(report.params, train, cfg);
  return report;
}

TrainReport train_full(std::span<const dataset::LabeledInstance> train, const TrainConfig& cfg,
                       const Callbacks& callbacks) {
  return train_stage2(train_stage1(train, cfg, callbacks), train, cfg, callbacks);
}

TrainReport train_identity_only(std::span<const dataset::LabeledInstance> train,
                                const TrainConfig& cfg, const Callbacks& callbacks) {
  // Same schedule, pair term disabled throughout; the hypothesis model is
  // still estimated at the end so GLRT scoring stays available.
  TrainConfig stage1_cfg = cfg;
  stage1_cfg.t0 = cfg.t0;
  Stage1Result s1 = train_stage1(train, stage1_cfg, callbacks);

  TrainReport report;
  report.class_labels = std::move(s1.class_labels);
  report.epochs = std::move(s1.epochs);
  report.params = std::move(s1.params);
  report.opt_state = std::move(s1.opt_state);

  std::vector<std::size_t> idx = trainable_indices(train);
  std::mt19937_64 rng(cfg.seed ^ 0x57a6e2ULL);
  for (int epoch = 0; epoch < cfg.t1_minus_t0; ++epoch) {
    const auto start = Clock::now();
    const auto batches = make_batches(idx, cfg.batch_size, rng);
    double id_sum = 0.0;
    for (const auto& b : batches) {
      std::vector<embedder::ForwardTrace> traces;
      std::vector<Vec> log_probs;
      std::vector<int> label_idx;
      for (std::size_t i : b) {
        traces.push_back(embedder::forward(report.params, train[i].features));
        log_probs.push_back(traces.back().log_probs);
        label_idx.push_back(label_index(report.class_labels, train[i].label));
      }
      id_sum += loss::identity_loss(log_probs, label_idx);
      const auto d_logp = loss::identity_loss_grad(log_probs, label_idx);
      const auto grads = embedder::backward(report.params, traces, {}, d_logp);
      embedder::sgd_step(report.params, grads, cfg.lr_stage2, cfg.momentum, cfg.weight_decay,
                         report.opt_state);
    }
    EpochRecord rec;
    rec.epoch = cfg.t0 + epoch;
    rec.stage = 1;
    rec.mean_identity_loss = batches.empty() ? 0.0 : id_sum / static_cast<double>(batches.size());
    rec.wall_ms = ms_since(start);
    report.epochs.push_back(rec);
    if (callbacks.on_epoch) callbacks.on_epoch(rec);
  }

  report.model = estimate_epoch_model(report.params, train, cfg);
  return report;
}

}  // namespace glrtml::trainer
