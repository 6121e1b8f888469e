#include "glrtml/cli.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "glrtml/cplfpa.hpp"
#include "glrtml/dataset.hpp"
#include "glrtml/errors.hpp"
#include "glrtml/model_io.hpp"
#include "glrtml/retrieval.hpp"
#include "glrtml/trainer.hpp"

namespace glrtml::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// All tunables live on the parent app so any config section is recognized no
// matter which subcommand runs; unknown keys are rejected.
struct Options {
  std::uint64_t seed = 0;
  std::string out_dir = ".";
  std::string variant = "mg";
  std::string metric = "glrt";

  dataset::SynthConfig synth;

  trainer::TrainConfig train;
  bool identity_only = false;
  std::string clip = "none";

  cplfpa::AdaptConfig adapt;

  std::vector<int> k_list{50};
  int roc_grid = 201;

  std::string train_csv;
  std::string query_csv;
  std::string gallery_csv;
  std::vector<std::string> target_csvs;
  std::string model_path;
};

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

trainer::GlrtVariant parse_variant(const std::string& v) {
  if (v == "mg") return trainer::GlrtVariant::Mg;
  if (v == "gmm") return trainer::GlrtVariant::Gmm;
  throw InvalidConfig("variant must be mg or gmm (got '" + v + "')");
}

void finalize(Options& opt) {
  opt.synth.seed = opt.seed;
  opt.train.seed = opt.seed;
  opt.adapt.seed = opt.seed;
  opt.train.variant = parse_variant(opt.variant);
  opt.adapt.variant = opt.train.variant;
  opt.train.clip_mode = model_io::clip_mode_from_string(opt.clip);
  opt.adapt.clip_mode = opt.train.clip_mode;
  opt.adapt.clip_eps = opt.train.clip_eps;
  opt.adapt.ridge_rel = opt.train.ridge_rel;
  opt.adapt.gmm_k1 = opt.train.gmm_k1;
  opt.adapt.gmm_k0 = opt.train.gmm_k0;
  opt.adapt.gmm_diagonal = opt.train.gmm_diagonal;
  opt.adapt.em_max_iters = opt.train.em_max_iters;
  opt.adapt.em_tol = opt.train.em_tol;
  if (opt.metric != "glrt" && opt.metric != "cosine")
    throw InvalidConfig("metric must be glrt or cosine (got '" + opt.metric + "')");
}

std::string quoted(const std::string& s) { return "\"" + s + "\""; }

// CLI11's stock config writer flattens unseen sections into dotted keys its
// own reader rejects, so the effective config is emitted by hand. Every key
// here re-parses into the same run.
std::string emit_effective_config(const Options& opt) {
  std::ostringstream out;
  out << "seed=" << opt.seed << "\n";
  out << "out=" << quoted(opt.out_dir) << "\n";
  out << "variant=" << quoted(opt.variant) << "\n";
  out << "metric=" << quoted(opt.metric) << "\n";
  out << "\n[dataset]\n";
  out << "num_classes=" << opt.synth.num_classes << "\n";
  out << "per_class=" << opt.synth.per_class << "\n";
  out << "d_in=" << opt.synth.d_in << "\n";
  out << "class_sep=" << format_double(opt.synth.class_sep) << "\n";
  out << "anisotropy=" << format_double(opt.synth.anisotropy) << "\n";
  out << "distractors=" << opt.synth.distractors << "\n";
  out << "shift_rotation_deg=" << format_double(opt.synth.shift_rotation_deg) << "\n";
  out << "shift_scale=" << format_double(opt.synth.shift_scale) << "\n";
  out << "\n[trainer]\n";
  out << "t0=" << opt.train.t0 << "\n";
  out << "t1_minus_t0=" << opt.train.t1_minus_t0 << "\n";
  out << "batch_size=" << opt.train.batch_size << "\n";
  out << "lr_stage1=" << format_double(opt.train.lr_stage1) << "\n";
  out << "lr_stage2=" << format_double(opt.train.lr_stage2) << "\n";
  out << "momentum=" << format_double(opt.train.momentum) << "\n";
  out << "weight_decay=" << format_double(opt.train.weight_decay) << "\n";
  out << "d=" << opt.train.d << "\n";
  out << "hidden=" << opt.train.hidden << "\n";
  out << "pair_budget=" << opt.train.pair_budget << "\n";
  out << "identity_only=" << (opt.identity_only ? "true" : "false") << "\n";
  out << "\n[loss]\n";
  out << "nu=" << format_double(opt.train.loss.nu) << "\n";
  out << "alpha=" << format_double(opt.train.loss.alpha) << "\n";
  out << "\n[glrt]\n";
  out << "k1=" << opt.train.gmm_k1 << "\n";
  out << "k0=" << opt.train.gmm_k0 << "\n";
  out << "diagonal=" << (opt.train.gmm_diagonal ? "true" : "false") << "\n";
  out << "clip=" << quoted(opt.clip) << "\n";
  out << "clip_eps=" << format_double(opt.train.clip_eps) << "\n";
  out << "ridge=" << format_double(opt.train.ridge_rel) << "\n";
  out << "em_max_iters=" << opt.train.em_max_iters << "\n";
  out << "em_tol=" << format_double(opt.train.em_tol) << "\n";
  out << "\n[cplfpa]\n";
  out << "k=" << opt.adapt.k << "\n";
  out << "pos_budget=" << opt.adapt.pos_budget << "\n";
  out << "neg_budget=" << opt.adapt.neg_budget << "\n";
  out << "\n[retrieval]\n";
  out << "k_list=";
  for (std::size_t i = 0; i < opt.k_list.size(); ++i)
    out << (i ? " " : "") << opt.k_list[i];
  out << "\n";
  out << "roc_grid=" << opt.roc_grid << "\n";
  out << "\n[io]\n";
  out << "train_csv=" << quoted(opt.train_csv) << "\n";
  out << "query_csv=" << quoted(opt.query_csv) << "\n";
  out << "gallery_csv=" << quoted(opt.gallery_csv) << "\n";
  if (!opt.target_csvs.empty()) {
    out << "target_csvs=";
    for (std::size_t i = 0; i < opt.target_csvs.size(); ++i)
      out << (i ? " " : "") << quoted(opt.target_csvs[i]);
    out << "\n";
  }
  out << "model=" << quoted(opt.model_path) << "\n";
  return out.str();
}

fs::path ensure_out_dir(const Options& opt) {
  fs::path dir(opt.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoFailure("cannot create output directory " + dir.string());
  return dir;
}

std::vector<Vec> embed_all(const embedder::EmbedderParams& params,
                           const std::vector<dataset::LabeledInstance>& instances) {
  std::vector<Vec> out;
  out.reserve(instances.size());
  for (const auto& inst : instances)
    out.push_back(embedder::forward(params, inst.features).embedding);
  return out;
}

std::vector<int> labels_of(const std::vector<dataset::LabeledInstance>& instances) {
  std::vector<int> labels;
  labels.reserve(instances.size());
  for (const auto& inst : instances) labels.push_back(inst.label);
  return labels;
}

const trainer::HypothesisModel& require_hypothesis(const model_io::ModelFile& model) {
  if (!model.hypothesis)
    throw InvalidConfig("model file has no hypothesis parameters; train or adapt first");
  return *model.hypothesis;
}

Mat metric_score_matrix(const Options& opt, const model_io::ModelFile& model,
                        const std::vector<Vec>& queries, const std::vector<Vec>& gallery) {
  if (opt.metric == "cosine") return retrieval::cosine_score_matrix(queries, gallery);
  const trainer::ModelScorer scorer(require_hypothesis(model));
  return retrieval::score_matrix(queries, gallery, [&](const Vec& q, const Vec& g) {
    Vec diff(q.size());
    for (std::size_t i = 0; i < q.size(); ++i) diff[i] = q[i] - g[i];
    return scorer.score(diff);
  });
}

int cmd_gen(const Options& opt) {
  const auto dir = ensure_out_dir(opt);
  const auto [source, target] = dataset::generate_synthetic(opt.synth);
  dataset::save_csv(source.train, dir / "source_train.csv");
  dataset::save_csv(source.query, dir / "source_query.csv");
  dataset::save_csv(source.gallery, dir / "source_gallery.csv");
  dataset::save_csv(target.train, dir / "target_train.csv");
  dataset::save_csv(target.query, dir / "target_query.csv");
  dataset::save_csv(target.gallery, dir / "target_gallery.csv");
  std::cout << "wrote 6 csv files under " << dir.string() << "\n";
  return 0;
}

int cmd_train(const Options& opt) {
  if (opt.train_csv.empty()) throw InvalidConfig("train: io.train_csv is required");
  const auto dir = ensure_out_dir(opt);
  const auto train_set = dataset::load_csv(opt.train_csv);

  std::ofstream log(dir / "train_log.jsonl", std::ios::binary);
  if (!log) throw IoFailure("train: cannot open train log for writing");
  trainer::Callbacks callbacks;
  callbacks.on_epoch = [&](const trainer::EpochRecord& rec) {
    json fixed{{"epoch", rec.epoch},
               {"stage", rec.stage},
               {"mean_pair_loss", rec.mean_pair_loss},
               {"mean_identity_loss", rec.mean_identity_loss},
               {"pair_term_skipped", rec.pair_term_skipped}};
    log << fixed.dump() << '\n';
    json live = fixed;
    live["wall_ms"] = rec.wall_ms;
    std::cout << live.dump() << std::endl;
  };

  const trainer::TrainReport report = opt.identity_only
                                          ? trainer::train_identity_only(train_set, opt.train, callbacks)
                                          : trainer::train_full(train_set, opt.train, callbacks);

  model_io::ModelFile model;
  model.params = report.params;
  model.optimizer = report.opt_state;
  model.class_labels = report.class_labels;
  model.hypothesis = report.model;
  model_io::save_model(dir / "model.json", model);
  std::cout << "wrote " << (dir / "model.json").string() << "\n";
  return 0;
}

int cmd_adapt(const Options& opt) {
  if (opt.model_path.empty()) throw InvalidConfig("adapt: io.model is required");
  if (opt.target_csvs.empty()) throw InvalidConfig("adapt: io.target_csvs is required");
  const auto dir = ensure_out_dir(opt);
  model_io::ModelFile model = model_io::load_model(opt.model_path);

  std::vector<dataset::LabeledInstance> target;
  for (const auto& path : opt.target_csvs) {
    auto part = dataset::load_csv(path);
    target.insert(target.end(), std::make_move_iterator(part.begin()),
                  std::make_move_iterator(part.end()));
  }

  const cplfpa::AdaptResult result = cplfpa::adapt(model.params, target, opt.adapt);
  model.hypothesis = result.model;
  model_io::save_model(dir / "adapted_model.json", model);

  json timing{{"clustering_ms", result.timing.clustering_ms},
              {"diff_ms", result.timing.diff_ms},
              {"update_ms", result.timing.update_ms},
              {"total_ms", result.timing.total_ms},
              {"n_pos_pairs", result.n_pos_pairs},
              {"n_neg_pairs", result.n_neg_pairs},
              {"free_parameters", result.free_parameters},
              {"nominal_parameters", result.nominal_parameters}};
  std::cout << timing.dump() << "\n";
  std::cout << "wrote " << (dir / "adapted_model.json").string() << "\n";
  return 0;
}

struct EvalInputs {
  model_io::ModelFile model;
  std::vector<dataset::LabeledInstance> query;
  std::vector<dataset::LabeledInstance> gallery;
  std::vector<Vec> query_emb;
  std::vector<Vec> gallery_emb;
};

EvalInputs load_eval_inputs(const Options& opt) {
  if (opt.model_path.empty()) throw InvalidConfig("io.model is required");
  if (opt.query_csv.empty() || opt.gallery_csv.empty())
    throw InvalidConfig("io.query_csv and io.gallery_csv are required");
  EvalInputs in;
  in.model = model_io::load_model(opt.model_path);
  in.query = dataset::load_csv(opt.query_csv);
  in.gallery = dataset::load_csv(opt.gallery_csv);
  in.query_emb = embed_all(in.model.params, in.query);
  in.gallery_emb = embed_all(in.model.params, in.gallery);
  return in;
}

int cmd_eval(const Options& opt) {
  const auto dir = ensure_out_dir(opt);
  EvalInputs in = load_eval_inputs(opt);

  Mat scores = metric_score_matrix(opt, in.model, in.query_emb, in.gallery_emb);
  const auto run =
      retrieval::make_run(std::move(scores), labels_of(in.query), labels_of(in.gallery), opt.k_list);
  const retrieval::Metrics m = retrieval::metrics(run);

  json report;
  report["metric"] = opt.metric;
  report["map"] = m.map;
  for (const auto& [k, v] : m.recall_at) report["recall_at"][std::to_string(k)] = v;
  for (const auto& [k, v] : m.precision_at) report["precision_at"][std::to_string(k)] = v;
  report["evaluated"] = m.evaluated;
  report["unanswerable"] = m.unanswerable;
  json per_query = json::array();
  for (std::size_t i = 0; i < in.query.size(); ++i)
    per_query.push_back(json{{"id", in.query[i].id}, {"ap", m.per_query_ap[i]}});
  report["per_query"] = std::move(per_query);

  std::ofstream out(dir / "metrics.json", std::ios::binary);
  if (!out) throw IoFailure("eval: cannot write metrics.json");
  out << report.dump(2) << '\n';
  std::cout << json{{"metric", opt.metric}, {"map", m.map}}.dump() << "\n";
  return 0;
}

int cmd_score(const Options& opt) {
  const auto dir = ensure_out_dir(opt);
  EvalInputs in = load_eval_inputs(opt);
  const Mat scores = metric_score_matrix(opt, in.model, in.query_emb, in.gallery_emb);

  std::ofstream out(dir / "scores.csv", std::ios::binary);
  if (!out) throw IoFailure("score: cannot write scores.csv");
  out << "query_id";
  for (const auto& g : in.gallery) out << ',' << g.id;
  out << '\n';
  for (std::size_t i = 0; i < in.query.size(); ++i) {
    out << in.query[i].id;
    for (std::size_t j = 0; j < in.gallery.size(); ++j) out << ',' << format_double(scores(i, j));
    out << '\n';
  }
  std::cout << "wrote " << (dir / "scores.csv").string() << "\n";
  return 0;
}

int cmd_roc(const Options& opt) {
  const auto dir = ensure_out_dir(opt);
  EvalInputs in = load_eval_inputs(opt);
  const Mat scores = metric_score_matrix(opt, in.model, in.query_emb, in.gallery_emb);

  Vec pos, neg;
  for (std::size_t i = 0; i < in.query.size(); ++i) {
    for (std::size_t j = 0; j < in.gallery.size(); ++j) {
      const bool rel = in.query[i].label >= 0 && in.query[i].label == in.gallery[j].label;
      (rel ? pos : neg).push_back(scores(i, j));
    }
  }
  const retrieval::RocCurve curve = retrieval::roc_curve(pos, neg, opt.roc_grid);

  std::ofstream out(dir / "roc.csv", std::ios::binary);
  if (!out) throw IoFailure("roc: cannot write roc.csv");
  out << "beta,p_fa,p_d\n";
  for (std::size_t i = 0; i < curve.thresholds.size(); ++i)
    out << format_double(curve.thresholds[i]) << ',' << format_double(curve.p_fa[i]) << ','
        << format_double(curve.p_d[i]) << '\n';
  std::cout << "wrote " << (dir / "roc.csv").string() << "\n";
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv) {
  Options opt;
  CLI::App app{"GLRT metric-learning toolkit: synthetic data, training, fast"
               " target-domain adaptation and retrieval evaluation"};
  app.option_defaults()->always_capture_default();
  app.fallthrough(true);  // global options may follow the subcommand name
  app.set_config("--config", "", "run configuration file (key=value with sections)");
  app.allow_config_extras(CLI::config_extras_mode::error);

  bool emit_config = false;
  app.add_option("--seed", opt.seed, "global seed; overrides the config value");
  app.add_option("--out", opt.out_dir, "output directory");
  app.add_option("--variant", opt.variant, "hypothesis model family")
      ->check(CLI::IsMember({"mg", "gmm"}));
  app.add_option("--metric", opt.metric, "scoring metric for eval/score/roc")
      ->check(CLI::IsMember({"glrt", "cosine"}));
  app.add_flag("--emit-effective-config", emit_config,
               "print the fully resolved configuration and exit");

  // Command-line overrides for the [io] section.
  std::string cli_train_csv, cli_query_csv, cli_gallery_csv, cli_model;
  std::vector<std::string> cli_targets;
  auto* o_train = app.add_option("--train-csv", cli_train_csv, "training csv (overrides io)");
  auto* o_query = app.add_option("--query-csv", cli_query_csv, "query csv (overrides io)");
  auto* o_gallery = app.add_option("--gallery-csv", cli_gallery_csv, "gallery csv (overrides io)");
  auto* o_model = app.add_option("--model", cli_model, "model file (overrides io)");
  auto* o_targets =
      app.add_option("--target-csv", cli_targets, "target-domain csv, repeatable (overrides io)");

  // Config sections; hidden from the subcommand listing.
  auto section = [&](const char* name) {
    return app.add_subcommand(name)->configurable(true)->group("");
  };
  auto* s_dataset = section("dataset");
  s_dataset->add_option("--num_classes", opt.synth.num_classes);
  s_dataset->add_option("--per_class", opt.synth.per_class);
  s_dataset->add_option("--d_in", opt.synth.d_in);
  s_dataset->add_option("--class_sep", opt.synth.class_sep);
  s_dataset->add_option("--anisotropy", opt.synth.anisotropy);
  s_dataset->add_option("--distractors", opt.synth.distractors);
  s_dataset->add_option("--shift_rotation_deg", opt.synth.shift_rotation_deg);
  s_dataset->add_option("--shift_scale", opt.synth.shift_scale);

  auto* s_trainer = section("trainer");
  s_trainer->add_option("--t0", opt.train.t0);
  s_trainer->add_option("--t1_minus_t0", opt.train.t1_minus_t0);
  s_trainer->add_option("--batch_size", opt.train.batch_size);
  s_trainer->add_option("--lr_stage1", opt.train.lr_stage1);
  s_trainer->add_option("--lr_stage2", opt.train.lr_stage2);
  s_trainer->add_option("--momentum", opt.train.momentum);
  s_trainer->add_option("--weight_decay", opt.train.weight_decay);
  s_trainer->add_option("--d", opt.train.d);
  s_trainer->add_option("--hidden", opt.train.hidden);
  s_trainer->add_option("--pair_budget", opt.train.pair_budget);
  s_trainer->add_flag("--identity_only", opt.identity_only);

  auto* s_loss = section("loss");
  s_loss->add_option("--nu", opt.train.loss.nu);
  s_loss->add_option("--alpha", opt.train.loss.alpha);

  auto* s_glrt = section("glrt");
  s_glrt->add_option("--k1", opt.train.gmm_k1);
  s_glrt->add_option("--k0", opt.train.gmm_k0);
  s_glrt->add_flag("--diagonal", opt.train.gmm_diagonal);
  s_glrt->add_option("--clip", opt.clip, "none, force_positive or force_negative")
      ->check(CLI::IsMember({"none", "force_positive", "force_negative"}));
  s_glrt->add_option("--clip_eps", opt.train.clip_eps);
  s_glrt->add_option("--ridge", opt.train.ridge_rel);
  s_glrt->add_option("--em_max_iters", opt.train.em_max_iters);
  s_glrt->add_option("--em_tol", opt.train.em_tol);

  auto* s_cplfpa = section("cplfpa");
  s_cplfpa->add_option("--k", opt.adapt.k);
  s_cplfpa->add_option("--pos_budget", opt.adapt.pos_budget);
  s_cplfpa->add_option("--neg_budget", opt.adapt.neg_budget);

  auto* s_retrieval = section("retrieval");
  s_retrieval->add_option("--k_list", opt.k_list);
  s_retrieval->add_option("--roc_grid", opt.roc_grid);

  auto* s_io = section("io");
  s_io->add_option("--train_csv", opt.train_csv);
  s_io->add_option("--query_csv", opt.query_csv);
  s_io->add_option("--gallery_csv", opt.gallery_csv);
  s_io->add_option("--target_csvs", opt.target_csvs);
  s_io->add_option("--model", opt.model_path);

  auto* gen = app.add_subcommand("gen", "generate synthetic source/target csv splits");
  auto* train = app.add_subcommand("train", "two-stage training to a model file");
  auto* adapt = app.add_subcommand("adapt", "re-estimate hypothesis parameters on target data");
  auto* eval = app.add_subcommand("eval", "retrieval metrics for a trained model");
  auto* score = app.add_subcommand("score", "dump the query-gallery score matrix");
  auto* roc = app.add_subcommand("roc", "score-threshold ROC table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (o_train->count() > 0) opt.train_csv = cli_train_csv;
    if (o_query->count() > 0) opt.query_csv = cli_query_csv;
    if (o_gallery->count() > 0) opt.gallery_csv = cli_gallery_csv;
    if (o_model->count() > 0) opt.model_path = cli_model;
    if (o_targets->count() > 0) opt.target_csvs = cli_targets;
    finalize(opt);
    if (emit_config) {
      std::cout << emit_effective_config(opt);
      return 0;
    }
    if (gen->parsed()) return cmd_gen(opt);
    if (train->parsed()) return cmd_train(opt);
    if (adapt->parsed()) return cmd_adapt(opt);
    if (eval->parsed()) return cmd_eval(opt);
    if (score->parsed()) return cmd_score(opt);
    if (roc->parsed()) return cmd_roc(opt);
    std::cerr << app.help();
    return 2;
  } catch (const InvalidConfig& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const InvalidLabel& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const IoFailure& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const ParseFailure& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace glrtml::cli
