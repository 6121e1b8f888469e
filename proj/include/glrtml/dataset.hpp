#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "glrtml/numerics.hpp"

namespace glrtml::dataset {

// Label -1 is reserved for background/distractor instances; they are never a
// valid retrieval target and never train.
constexpr int kDistractorLabel = -1;

struct LabeledInstance {
  std::string id;
  int label = 0;
  Vec features;
};

struct DatasetSplit {
  std::vector<LabeledInstance> train;
  std::vector<LabeledInstance> query;
  std::vector<LabeledInstance> gallery;
};

struct SynthConfig {
  int num_classes = 8;
  int per_class = 40;
  int d_in = 16;
  double class_sep = 3.0;       // std of class means in latent space
  double anisotropy = 8.0;      // largest/smallest class-covariance eigenvalue
  int distractors = 0;          // background instances appended to each gallery
  double shift_rotation_deg = 0.0;
  double shift_scale = 1.0;
  std::uint64_t seed = 0;
};

// Synthetic source/target domains sharing one class structure. Samples live
// in a latent space where the target transform (paired Givens rotations by
// shift_rotation_deg, then uniform shift_scale) is applied, and are lifted to
// d_in by a fixed seeded orthogonal map. Splits are stratified per class.
std::pair<DatasetSplit, DatasetSplit> generate_synthetic(const SynthConfig& cfg);

// CSV schema: header "id,label,f0,...,f{d-1}", UTF-8, LF endings; floats are
// written with shortest round-trip precision.
void save_csv(const std::vector<LabeledInstance>& instances, const std::filesystem::path& path);
std::vector<LabeledInstance> load_csv(const std::filesystem::path& path);

// Stratified split; distractor instances are appended to the gallery with
// label -1. Every class needs at least 3 instances.
DatasetSplit make_split(const std::vector<LabeledInstance>& instances, double train_frac,
                        double query_frac, const std::vector<LabeledInstance>& distractors,
                        std::uint64_t seed);

}  // namespace glrtml::dataset
