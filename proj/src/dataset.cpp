#include "glrtml/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <system_error>

#include "glrtml/errors.hpp"

namespace glrtml::dataset {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTrainFrac = 0.5;
constexpr double kQueryFrac = 0.25;

Mat random_orthogonal(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Mat q(n, n);
  for (auto& x : q.a) x = gauss(rng);
  // Modified Gram-Schmidt on columns.
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = 0; k < j; ++k) {
      double d = 0.0;
      for (std::size_t i = 0; i < n; ++i) d += q(i, k) * q(i, j);
      for (std::size_t i = 0; i < n; ++i) q(i, j) -= d * q(i, k);
    }
    double nrm = 0.0;
    for (std::size_t i = 0; i < n; ++i) nrm += q(i, j) * q(i, j);
    nrm = std::sqrt(nrm);
    for (std::size_t i = 0; i < n; ++i) q(i, j) /= nrm;
  }
  return q;
}

Vec apply_mat(const Mat& m, const Vec& x) {
  Vec y(m.rows, 0.0);
  for (std::size_t i = 0; i < m.rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < m.cols; ++j) s += m(i, j) * x[j];
    y[i] = s;
  }
  return y;
}

// Target-domain transform: Givens rotation on every consecutive coordinate
// pair, then a uniform scale.
Vec shift_transform(const Vec& z, double rot_deg, double scale) {
  Vec out = z;
  const double theta = rot_deg * kPi / 180.0;
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  for (std::size_t i = 0; i + 1 < out.size(); i += 2) {
    const double a = out[i];
    const double b = out[i + 1];
    out[i] = c * a - s * b;
    out[i + 1] = s * a + c * b;
  }
  for (double& v : out) v *= scale;
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// Stratified per-class split; class sizes of 2 fall back to 1 train + 1
// gallery so synthetic smoke configs stay usable.
DatasetSplit stratified_split(const std::vector<LabeledInstance>& instances, double train_frac,
                              double query_frac, std::mt19937_64& rng, bool require_three) {
  std::map<int, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < instances.size(); ++i)
    by_label[instances[i].label].push_back(i);

  DatasetSplit split;
  for (auto& [label, idx] : by_label) {
    const std::size_t n = idx.size();
    if (require_three && n < 3)
      throw InvalidConfig("make_split: class " + std::to_string(label) + " has only " +
                          std::to_string(n) + " instances (need 3)");
    std::shuffle(idx.begin(), idx.end(), rng);

    std::size_t n_train, n_query;
    if (n >= 3) {
      n_train = static_cast<std::size_t>(std::lround(train_frac * static_cast<double>(n)));
      n_train = std::clamp<std::size_t>(n_train, 1, n - 2);
      n_query = static_cast<std::size_t>(std::lround(query_frac * static_cast<double>(n)));
      n_query = std::clamp<std::size_t>(n_query, 1, n - n_train - 1);
    } else if (n == 2) {
      n_train = 1;
      n_query = 0;
    } else {
      n_train = 1;
      n_query = 0;
    }
    for (std::size_t k = 0; k < n; ++k) {
      const LabeledInstance& inst = instances[idx[k]];
      if (k < n_train)
        split.train.push_back(inst);
      else if (k < n_train + n_query)
        split.query.push_back(inst);
      else
        split.gallery.push_back(inst);
    }
  }
  return split;
}

}  // namespace

std::pair<DatasetSplit, DatasetSplit> generate_synthetic(const SynthConfig& cfg) {
  if (cfg.num_classes < 1) throw InvalidConfig("generate_synthetic: num_classes must be >= 1");
  if (cfg.per_class < 2) throw InvalidConfig("generate_synthetic: per_class must be >= 2");
  if (cfg.d_in < 1) throw InvalidConfig("generate_synthetic: d_in must be >= 1");
  if (cfg.anisotropy < 1.0) throw InvalidConfig("generate_synthetic: anisotropy must be >= 1");
  if (cfg.distractors < 0) throw InvalidConfig("generate_synthetic: distractors must be >= 0");
  if (cfg.class_sep < 0.0) throw InvalidConfig("generate_synthetic: class_sep must be >= 0");
  if (!(cfg.shift_scale > 0.0)) throw InvalidConfig("generate_synthetic: shift_scale must be > 0");

  const std::size_t d = static_cast<std::size_t>(cfg.d_in);
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const Mat lift = random_orthogonal(d, rng);
  const Mat cov_basis = random_orthogonal(d, rng);

  // Shared class covariance: eigenvalues geometric between sqrt(a) and
  // 1/sqrt(a) so the largest/smallest ratio equals the anisotropy knob.
  Vec sqrt_eigs(d);
  for (std::size_t i = 0; i < d; ++i) {
    const double t = d > 1 ? static_cast<double>(i) / static_cast<double>(d - 1) : 0.0;
    const double log_lambda = (0.5 - t) * std::log(cfg.anisotropy);
    sqrt_eigs[i] = std::exp(0.5 * log_lambda);
  }

  std::vector<Vec> class_means(cfg.num_classes);
  for (auto& mu : class_means) {
    mu.resize(d);
    for (auto& v : mu) v = cfg.class_sep * gauss(rng);
  }

  auto draw_class_latent = [&](int c) {
    Vec eps(d);
    for (auto& v : eps) v = gauss(rng);
    Vec z(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += cov_basis(i, j) * sqrt_eigs[j] * eps[j];
      z[i] = class_means[static_cast<std::size_t>(c)][i] + s;
    }
    return z;
  };

  const double bg_sigma = 2.0 * cfg.class_sep + 1.0;
  auto draw_background_latent = [&]() {
    Vec z(d);
    for (auto& v : z) v = bg_sigma * gauss(rng);
    return z;
  };

  auto make_instance = [&](const std::string& id, int label, const Vec& latent, bool shifted) {
    Vec z = shifted ? shift_transform(latent, cfg.shift_rotation_deg, cfg.shift_scale) : latent;
    LabeledInstance inst;
    inst.id = id;
    inst.label = label;
    inst.features = apply_mat(lift, z);
    return inst;
  };

  std::vector<LabeledInstance> source, target;
  for (int c = 0; c < cfg.num_classes; ++c) {
    for (int i = 0; i < cfg.per_class; ++i) {
      std::ostringstream sid;
      sid << "src-c" << c << "-i" << i;
      source.push_back(make_instance(sid.str(), c, draw_class_latent(c), false));
    }
  }
  for (int c = 0; c < cfg.num_classes; ++c) {
    for (int i = 0; i < cfg.per_class; ++i) {
      std::ostringstream tid;
      tid << "tgt-c" << c << "-i" << i;
      target.push_back(make_instance(tid.str(), c, draw_class_latent(c), true));
    }
  }

  std::vector<LabeledInstance> source_bg, target_bg;
  for (int i = 0; i < cfg.distractors; ++i) {
    std::ostringstream sid;
    sid << "src-bg-i" << i;
    source_bg.push_back(make_instance(sid.str(), kDistractorLabel, draw_background_latent(), false));
  }
  for (int i = 0; i < cfg.distractors; ++i) {
    std::ostringstream tid;
    tid << "tgt-bg-i" << i;
    target_bg.push_back(make_instance(tid.str(), kDistractorLabel, draw_background_latent(), true));
  }

  std::mt19937_64 split_rng_src(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::mt19937_64 split_rng_tgt(cfg.seed ^ 0xbf58476d1ce4e5b9ULL);
  DatasetSplit src_split = stratified_split(source, kTrainFrac, kQueryFrac, split_rng_src, false);
  DatasetSplit tgt_split = stratified_split(target, kTrainFrac, kQueryFrac, split_rng_tgt, false);
  for (auto& inst : source_bg) src_split.gallery.push_back(inst);
  for (auto& inst : target_bg) tgt_split.gallery.push_back(inst);
  return {std::move(src_split), std::move(tgt_split)};
}

void save_csv(const std::vector<LabeledInstance>& instances, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoFailure("save_csv: cannot open " + path.string() + " for writing");

  const std::size_t d = instances.empty() ? 0 : instances.front().features.size();
  out << "id,label";
  for (std::size_t j = 0; j < d; ++j) out << ",f" << j;
  out << '\n';
  for (const auto& inst : instances) {
    if (inst.features.size() != d)
      throw InvalidConfig("save_csv: inconsistent feature dimension for id " + inst.id);
    out << inst.id << ',' << inst.label;
    for (double v : inst.features) out << ',' << format_double(v);
    out << '\n';
  }
  if (!out) throw IoFailure("save_csv: write failed for " + path.string());
}

std::vector<LabeledInstance> load_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoFailure("load_csv: cannot open " + path.string());

  auto split_line = [](const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t pos = line.find(',', start);
      if (pos == std::string::npos) {
        fields.push_back(line.substr(start));
        break;
      }
      fields.push_back(line.substr(start, pos - start));
      start = pos + 1;
    }
    return fields;
  };

  std::string line;
  if (!std::getline(in, line)) throw ParseFailure("load_csv: " + path.string() + " missing header");
  while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
  const auto header = split_line(line);
  if (header.size() < 2 || header[0] != "id" || header[1] != "label")
    throw ParseFailure("load_csv: " + path.string() + " header must start with id,label");
  const std::size_t d = header.size() - 2;

  std::vector<LabeledInstance> instances;
  std::size_t line_no = 1;
  std::map<std::string, std::size_t> seen_ids;
  while (std::getline(in, line)) {
    ++line_no;
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_line(line);
    if (fields.size() != d + 2)
      throw ParseFailure("load_csv: " + path.string() + " line " + std::to_string(line_no) +
                         " has " + std::to_string(fields.size()) + " fields, expected " +
                         std::to_string(d + 2));
    LabeledInstance inst;
    inst.id = fields[0];
    if (auto [it, fresh] = seen_ids.emplace(inst.id, line_no); !fresh)
      throw ParseFailure("load_csv: " + path.string() + " line " + std::to_string(line_no) +
                         " duplicates id " + inst.id + " from line " + std::to_string(it->second));
    {
      const std::string& f = fields[1];
      auto res = std::from_chars(f.data(), f.data() + f.size(), inst.label);
      if (res.ec != std::errc{} || res.ptr != f.data() + f.size())
        throw ParseFailure("load_csv: " + path.string() + " line " + std::to_string(line_no) +
                           " has bad label '" + f + "'");
    }
    inst.features.resize(d);
    for (std::size_t j = 0; j < d; ++j) {
      const std::string& f = fields[j + 2];
      auto res = std::from_chars(f.data(), f.data() + f.size(), inst.features[j]);
      if (res.ec != std::errc{} || res.ptr != f.data() + f.size())
        throw ParseFailure("load_csv: " + path.string() + " line " + std::to_string(line_no) +
                           " has bad value '" + f + "' in column f" + std::to_string(j));
    }
    instances.push_back(std::move(inst));
  }
  return instances;
}

DatasetSplit make_split(const std::vector<LabeledInstance>& instances, double train_frac,
                        double query_frac, const std::vector<LabeledInstance>& distractors,
                        std::uint64_t seed) {
  if (!(train_frac > 0.0 && train_frac < 1.0) || !(query_frac > 0.0 && query_frac < 1.0) ||
      !(train_frac + query_frac < 1.0))
    throw InvalidConfig("make_split: fractions must lie in (0,1) and sum below 1");

  std::mt19937_64 rng(seed);
  DatasetSplit split = stratified_split(instances, train_frac, query_frac, rng, true);
  for (const auto& inst : distractors) {
    LabeledInstance bg = inst;
    bg.label = kDistractorLabel;
    split.gallery.push_back(std::move(bg));
  }
  return split;
}

}  // namespace glrtml::dataset
