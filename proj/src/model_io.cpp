#include "glrtml/model_io.hpp"

#include <fstream>

#include <json.hpp>

#include "glrtml/errors.hpp"

namespace glrtml::model_io {

using nlohmann::json;

namespace {

json mat_to_json(const Mat& m) {
  json rows = json::array();
  for (std::size_t i = 0; i < m.rows; ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < m.cols; ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Mat mat_from_json(const json& j) {
  Mat m(j.size(), j.empty() ? 0 : j.front().size());
  for (std::size_t i = 0; i < m.rows; ++i) {
    const auto& row = j.at(i);
    if (row.size() != m.cols) throw ParseFailure("model file: ragged matrix");
    for (std::size_t c = 0; c < m.cols; ++c) m(i, c) = row.at(c).get<double>();
  }
  return m;
}

json sym_to_json(const numerics::SymMatrix& m) {
  json rows = json::array();
  for (std::size_t i = 0; i < m.dim; ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < m.dim; ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

numerics::SymMatrix sym_from_json(const json& j) {
  numerics::SymMatrix m(j.size());
  for (std::size_t i = 0; i < m.dim; ++i) {
    const auto& row = j.at(i);
    if (row.size() != m.dim) throw ParseFailure("model file: covariance not square");
    for (std::size_t c = 0; c < m.dim; ++c) m.a[i * m.dim + c] = row.at(c).get<double>();
  }
  return m;
}

json params_to_json(const embedder::EmbedderParams& p) {
  return json{{"d_in", p.d_in},          {"hidden", p.hidden},
              {"d", p.d},                {"num_classes", p.num_classes},
              {"w1", mat_to_json(p.w1)}, {"b1", p.b1},
              {"w2", mat_to_json(p.w2)}, {"b2", p.b2},
              {"w3", mat_to_json(p.w3)}, {"b3", p.b3},
              {"wc", mat_to_json(p.wc)}};
}

embedder::EmbedderParams params_from_json(const json& j) {
  embedder::EmbedderParams p;
  p.d_in = j.at("d_in").get<int>();
  p.hidden = j.at("hidden").get<int>();
  p.d = j.at("d").get<int>();
  p.num_classes = j.at("num_classes").get<int>();
  p.w1 = mat_from_json(j.at("w1"));
  p.b1 = j.at("b1").get<Vec>();
  p.w2 = mat_from_json(j.at("w2"));
  p.b2 = j.at("b2").get<Vec>();
  p.w3 = mat_from_json(j.at("w3"));
  p.b3 = j.at("b3").get<Vec>();
  p.wc = mat_from_json(j.at("wc"));
  return p;
}

json gmm_to_json(const glrt_gmm::GmmParams& params) {
  json comps = json::array();
  for (const auto& c : params.components) {
    comps.push_back(json{{"weight", c.weight}, {"mean", c.mean}, {"cov", sym_to_json(c.cov)}});
  }
  return comps;
}

glrt_gmm::GmmParams gmm_from_json(const json& j) {
  glrt_gmm::GmmParams params;
  for (const auto& cj : j) {
    glrt_gmm::GaussComponent c;
    c.weight = cj.at("weight").get<double>();
    c.mean = cj.at("mean").get<Vec>();
    c.cov = sym_from_json(cj.at("cov"));
    params.components.push_back(std::move(c));
  }
  return params;
}

}  // namespace

std::string clip_mode_to_string(numerics::ClipMode mode) {
  switch (mode) {
    case numerics::ClipMode::ForcePositiveDefinite: return "force_positive";
    case numerics::ClipMode::ForceNegativeDefinite: return "force_negative";
    case numerics::ClipMode::NoClip: return "none";
  }
  throw InvalidConfig("unknown clip mode");
}

numerics::ClipMode clip_mode_from_string(const std::string& name) {
  if (name == "force_positive") return numerics::ClipMode::ForcePositiveDefinite;
  if (name == "force_negative") return numerics::ClipMode::ForceNegativeDefinite;
  if (name == "none") return numerics::ClipMode::NoClip;
  throw InvalidConfig("clip mode must be force_positive, force_negative or none (got '" + name +
                      "')");
}

void save_model(const std::filesystem::path& path, const ModelFile& model) {
  json doc;
  doc["format_version"] = kFormatVersion;
  doc["embedder"] = params_to_json(model.params);
  if (model.optimizer) doc["optimizer"] = json{{"velocity", params_to_json(model.optimizer->velocity)}};
  doc["class_labels"] = model.class_labels;

  if (model.hypothesis) {
    json h;
    if (const auto* mg = std::get_if<glrt_mg::MgModel>(&*model.hypothesis)) {
      h["variant"] = "mg";
      h["mg"] = json{{"sigma1", sym_to_json(mg->sigma1)},
                     {"sigma0", sym_to_json(mg->sigma0)},
                     {"form", sym_to_json(mg->form)},
                     {"clip_mode", clip_mode_to_string(mg->clip_mode)},
                     {"clip_eps", mg->clip_eps},
                     {"ridge", mg->ridge}};
    } else {
      const auto& pair = std::get<trainer::GmmPair>(*model.hypothesis);
      h["variant"] = "gmm";
      h["gmm"] = json{{"h1", gmm_to_json(pair.h1)}, {"h0", gmm_to_json(pair.h0)}};
    }
    doc["hypothesis"] = std::move(h);
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoFailure("save_model: cannot open " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw IoFailure("save_model: write failed for " + path.string());
}

ModelFile load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoFailure("load_model: cannot open " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ParseFailure("load_model: " + path.string() + ": " + e.what());
  }

  try {
    if (doc.at("format_version").get<int>() != kFormatVersion)
      throw ParseFailure("load_model: unsupported format_version");

    ModelFile model;
    model.params = params_from_json(doc.at("embedder"));
    if (doc.contains("optimizer")) {
      embedder::SgdState state;
      state.velocity = params_from_json(doc.at("optimizer").at("velocity"));
      model.optimizer = std::move(state);
    }
    model.class_labels = doc.at("class_labels").get<std::vector<int>>();

    if (doc.contains("hypothesis")) {
      const auto& h = doc.at("hypothesis");
      const std::string variant = h.at("variant").get<std::string>();
      if (variant == "mg") {
        const auto& m = h.at("mg");
        glrt_mg::MgModel mg;
        mg.sigma1 = sym_from_json(m.at("sigma1"));
        mg.sigma0 = sym_from_json(m.at("sigma0"));
        mg.form = sym_from_json(m.at("form"));
        mg.clip_mode = clip_mode_from_string(m.at("clip_mode").get<std::string>());
        mg.clip_eps = m.at("clip_eps").get<double>();
        mg.ridge = m.at("ridge").get<double>();
        model.hypothesis = std::move(mg);
      } else if (variant == "gmm") {
        trainer::GmmPair pair;
        pair.h1 = gmm_from_json(h.at("gmm").at("h1"));
        pair.h0 = gmm_from_json(h.at("gmm").at("h0"));
        model.hypothesis = std::move(pair);
      } else {
        throw ParseFailure("load_model: unknown hypothesis variant '" + variant + "'");
      }
    }
    return model;
  } catch (const json::exception& e) {
    throw ParseFailure("load_model: " + path.string() + ": " + e.what());
  }
}

}  // namespace glrtml::model_io
