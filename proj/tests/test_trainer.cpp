#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "glrtml/dataset.hpp"
#include "glrtml/errors.hpp"
#include "glrtml/trainer.hpp"

using namespace glrtml;
using namespace glrtml::trainer;

namespace {

// Small well-separated Gaussian classes, raw features.
std::vector<dataset::LabeledInstance> toy_classes(int num_classes, int per_class, int d_in,
                                                  double sep, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<Vec> means(static_cast<std::size_t>(num_classes), Vec(static_cast<std::size_t>(d_in)));
  for (auto& mu : means)
    for (auto& v : mu) v = sep * gauss(rng);

  std::vector<dataset::LabeledInstance> out;
  for (int c = 0; c < num_classes; ++c) {
    for (int i = 0; i < per_class; ++i) {
      dataset::LabeledInstance inst;
      inst.id = "c" + std::to_string(c) + "-" + std::to_string(i);
      inst.label = c;
      inst.features.resize(static_cast<std::size_t>(d_in));
      for (std::size_t k = 0; k < inst.features.size(); ++k)
        inst.features[k] = means[static_cast<std::size_t>(c)][k] + 0.4 * gauss(rng);
      out.push_back(std::move(inst));
    }
  }
  return out;
}

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.t0 = 10;
  cfg.t1_minus_t0 = 4;
  cfg.batch_size = 16;
  cfg.d = 4;
  cfg.hidden = 8;
  cfg.lr_stage1 = 0.05;
  cfg.lr_stage2 = 0.01;
  cfg.seed = 3;
  cfg.loss.nu = 0.05;
  return cfg;
}

bool params_equal(const embedder::EmbedderParams& a, const embedder::EmbedderParams& b) {
  std::vector<double> fa, fb;
  a.for_each_const([&](double v) { fa.push_back(v); });
  b.for_each_const([&](double v) { fb.push_back(v); });
  return fa == fb;
}

}  // namespace

TEST_CASE("build_batch_pairs enumerates by polarity") {
  const auto abb = build_batch_pairs(std::vector<int>{0, 0, 1});
  CHECK(abb.pos_pairs.size() == 1);
  CHECK(abb.neg_pairs.size() == 2);

  const auto distinct = build_batch_pairs(std::vector<int>{0, 1, 2, 3});
  CHECK(distinct.pos_pairs.empty());
  CHECK(distinct.neg_pairs.size() == 6);

  const auto same = build_batch_pairs(std::vector<int>{5, 5, 5, 5});
  CHECK(same.pos_pairs.size() == 6);
  CHECK(same.neg_pairs.empty());
}

TEST_CASE("pair counts match combinatorics for random label batches") {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t m = 2 + rng() % 30;
    std::vector<int> labels(m);
    for (auto& l : labels) l = static_cast<int>(rng() % 5);
    const auto pairs = build_batch_pairs(labels);
    CHECK(pairs.pos_pairs.size() + pairs.neg_pairs.size() == m * (m - 1) / 2);
    for (const auto& [i, j] : pairs.pos_pairs) {
      CHECK(i < j);
      CHECK(labels[i] == labels[j]);
    }
    for (const auto& [i, j] : pairs.neg_pairs) {
      CHECK(i < j);
      CHECK(labels[i] != labels[j]);
    }
  }
}

TEST_CASE("class vocabulary maps labels and rejects strangers") {
  std::vector<dataset::LabeledInstance> instances{
      {"a", 4, {0.0}}, {"b", 2, {0.0}}, {"c", 4, {0.0}}, {"d", -1, {0.0}}};
  const auto vocab = class_vocabulary(instances);
  CHECK(vocab == std::vector<int>{2, 4});
  CHECK(label_index(vocab, 2) == 0);
  CHECK(label_index(vocab, 4) == 1);
  CHECK_THROWS_AS(label_index(vocab, 3), InvalidLabel);
  CHECK_THROWS_AS(label_index(vocab, -1), InvalidLabel);
}

TEST_CASE("train_stage1 with zero epochs returns the seeded init") {
  const auto data = toy_classes(3, 6, 5, 3.0, 1);
  TrainConfig cfg = small_config();
  cfg.t0 = 0;
  const Stage1Result res = train_stage1(data, cfg);
  const auto init = embedder::EmbedderParams::init(5, cfg.hidden, cfg.d, 3, cfg.seed);
  CHECK(params_equal(res.params, init));
}

TEST_CASE("train_stage1 reaches high train accuracy on separated classes") {
  const auto data = toy_classes(4, 20, 6, 4.0, 7);
  TrainConfig cfg = small_config();
  cfg.t0 = 50;
  const Stage1Result res = train_stage1(data, cfg);

  int correct = 0;
  for (const auto& inst : data) {
    const auto t = embedder::forward(res.params, inst.features);
    const std::size_t pred = static_cast<std::size_t>(
        std::max_element(t.log_probs.begin(), t.log_probs.end()) - t.log_probs.begin());
    if (res.class_labels[pred] == inst.label) ++correct;
  }
  CHECK(static_cast<double>(correct) / static_cast<double>(data.size()) > 0.9);
}

TEST_CASE("train_stage1 is bit-deterministic") {
  const auto data = toy_classes(3, 8, 4, 3.0, 11);
  const TrainConfig cfg = small_config();
  const Stage1Result a = train_stage1(data, cfg);
  const Stage1Result b = train_stage1(data, cfg);
  CHECK(params_equal(a.params, b.params));
}

TEST_CASE("estimate_epoch_model counts and determinism") {
  // 2 classes x 2 instances: 2 positive diffs, 4 negative diffs available.
  const auto data = toy_classes(2, 2, 4, 3.0, 13);
  TrainConfig cfg = small_config();
  const auto params = embedder::EmbedderParams::init(4, cfg.hidden, cfg.d, 2, 0);

  const HypothesisModel m1 = estimate_epoch_model(params, data, cfg);
  const HypothesisModel m2 = estimate_epoch_model(params, data, cfg);
  const auto& mg1 = std::get<glrt_mg::MgModel>(m1);
  const auto& mg2 = std::get<glrt_mg::MgModel>(m2);
  CHECK(mg1.sigma1.a == mg2.sigma1.a);
  CHECK(mg1.sigma0.a == mg2.sigma0.a);
  CHECK(mg1.form.a == mg2.form.a);
}

TEST_CASE("estimate_epoch_model survives collapsed embeddings") {
  const auto data = toy_classes(2, 4, 4, 3.0, 17);
  TrainConfig cfg = small_config();
  auto params = embedder::EmbedderParams::init(4, cfg.hidden, cfg.d, 2, 0);
  params.for_each([](double& v) { v = 0.0; });  // every embedding collapses to zero

  const HypothesisModel model = estimate_epoch_model(params, data, cfg);
  const auto& mg = std::get<glrt_mg::MgModel>(model);
  // Pure fallback ridge on both sides; the form cancels to zero.
  CHECK(mg.sigma1(0, 0) == doctest::Approx(cfg.ridge_rel));
  for (double v : mg.form.a) CHECK(std::abs(v) < 1e-9);
}

TEST_CASE("stage-2 model is frozen across every batch of an epoch") {
  const auto data = toy_classes(3, 12, 5, 3.0, 19);
  TrainConfig cfg = small_config();
  cfg.t0 = 4;
  cfg.t1_minus_t0 = 3;
  cfg.batch_size = 8;

  std::map<int, std::vector<std::vector<double>>> forms_by_epoch;
  Callbacks callbacks;
  callbacks.on_batch = [&](int epoch, int, const HypothesisModel& model) {
    forms_by_epoch[epoch].push_back(std::get<glrt_mg::MgModel>(model).form.a);
  };
  train_full(data, cfg, callbacks);

  CHECK(forms_by_epoch.size() == 3);
  std::vector<std::vector<double>> epoch_forms;
  for (const auto& [epoch, forms] : forms_by_epoch) {
    REQUIRE(forms.size() >= 2);  // several batches per epoch
    for (const auto& f : forms) CHECK(f == forms.front());
    epoch_forms.push_back(forms.front());
  }
  // And the model does change between epochs while training moves.
  CHECK(epoch_forms[0] != epoch_forms[1]);
}

TEST_CASE("train_stage2 with zero stage-2 epochs keeps stage-1 params") {
  const auto data = toy_classes(3, 8, 4, 3.0, 23);
  TrainConfig cfg = small_config();
  cfg.t1_minus_t0 = 0;
  const Stage1Result s1 = train_stage1(data, cfg);
  const auto s1_params = s1.params;
  const TrainReport report = train_stage2(std::move(s1), data, cfg);
  CHECK(params_equal(report.params, s1_params));
  CHECK(std::holds_alternative<glrt_mg::MgModel>(report.model));
}

TEST_CASE("stage-2 training reduces the total loss on synthetic data") {
  std::vector<dataset::LabeledInstance> data;
  {
    dataset::SynthConfig scfg;
    scfg.num_classes = 4;
    scfg.per_class = 24;
    scfg.d_in = 8;
    scfg.class_sep = 2.0;
    scfg.anisotropy = 6.0;
    scfg.seed = 5;
    const auto [source, target] = dataset::generate_synthetic(scfg);
    (void)target;
    data = source.train;
    data.insert(data.end(), source.query.begin(), source.query.end());
    data.insert(data.end(), source.gallery.begin(), source.gallery.end());
  }
  TrainConfig cfg = small_config();
  cfg.t0 = 30;
  cfg.t1_minus_t0 = 15;
  cfg.d = 8;
  cfg.hidden = 12;
  cfg.batch_size = 24;
  cfg.seed = 1;

  const TrainReport report = train_full(data, cfg);
  Vec stage2_totals;
  for (const auto& rec : report.epochs)
    if (rec.stage == 2) stage2_totals.push_back(rec.mean_pair_loss + rec.mean_identity_loss);
  REQUIRE(stage2_totals.size() == 15);
  CHECK(stage2_totals.back() < stage2_totals.front());
}

TEST_CASE("train_full is bit-deterministic under a fixed seed") {
  const auto data = toy_classes(3, 10, 4, 3.0, 29);
  TrainConfig cfg = small_config();
  cfg.t0 = 5;
  cfg.t1_minus_t0 = 3;
  const TrainReport a = train_full(data, cfg);
  const TrainReport b = train_full(data, cfg);
  CHECK(params_equal(a.params, b.params));
  const auto& mga = std::get<glrt_mg::MgModel>(a.model);
  const auto& mgb = std::get<glrt_mg::MgModel>(b.model);
  CHECK(mga.form.a == mgb.form.a);
  REQUIRE(a.epochs.size() == b.epochs.size());
  for (std::size_t i = 0; i < a.epochs.size(); ++i) {
    CHECK(a.epochs[i].mean_pair_loss == b.epochs[i].mean_pair_loss);
    CHECK(a.epochs[i].mean_identity_loss == b.epochs[i].mean_identity_loss);
  }
}

TEST_CASE("one tiny step moves the loss by lr * grad norm squared") {
  const auto data = toy_classes(3, 6, 5, 3.0, 31);
  TrainConfig cfg = small_config();
  cfg.t0 = 6;
  const Stage1Result s1 = train_stage1(data, cfg);
  const HypothesisModel model = estimate_epoch_model(s1.params, data, cfg);

  std::vector<dataset::LabeledInstance> batch(data.begin(), data.begin() + 12);
  const BatchEval eval = evaluate_batch(s1.params, batch, s1.class_labels, model, cfg.loss);

  double grad_sq = 0.0;
  eval.grads.for_each_const([&](double v) { grad_sq += v * v; });

  const double lr = 1e-6;
  embedder::EmbedderParams stepped = s1.params;
  embedder::SgdState state = embedder::SgdState::zeros_like(stepped);
  embedder::sgd_step(stepped, eval.grads, lr, 0.0, 0.0, state);
  const BatchEval after = evaluate_batch(stepped, batch, s1.class_labels, model, cfg.loss);

  const double drop = eval.total - after.total;
  CHECK(drop == doctest::Approx(lr * grad_sq).epsilon(0.1));
}

TEST_CASE("gmm variant trains end to end") {
  const auto data = toy_classes(3, 10, 4, 3.0, 37);
  TrainConfig cfg = small_config();
  cfg.t0 = 5;
  cfg.t1_minus_t0 = 2;
  cfg.variant = GlrtVariant::Gmm;
  cfg.gmm_k1 = 1;
  cfg.gmm_k0 = 2;
  const TrainReport report = train_full(data, cfg);
  const auto& pair = std::get<GmmPair>(report.model);
  CHECK(pair.h1.components.size() == 1);
  CHECK(pair.h0.components.size() == 2);
}

TEST_CASE("distractors are excluded from training") {
  auto data = toy_classes(2, 6, 4, 3.0, 41);
  dataset::LabeledInstance bg;
  bg.id = "bg";
  bg.label = dataset::kDistractorLabel;
  bg.features = Vec(4, 100.0);  // would wreck the covariance if included
  data.push_back(bg);

  TrainConfig cfg = small_config();
  cfg.t0 = 2;
  cfg.t1_minus_t0 = 1;
  const TrainReport with_bg = train_full(data, cfg);
  data.pop_back();
  const TrainReport without = train_full(data, cfg);
  CHECK(params_equal(with_bg.params, without.params));
}
