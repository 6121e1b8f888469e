#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "glrtml/embedder.hpp"
#include "glrtml/trainer.hpp"

namespace glrtml::model_io {

inline constexpr int kFormatVersion = 1;

// One structured document holding everything eval/adapt needs, so artifacts
// can never be mixed across runs.
struct ModelFile {
  embedder::EmbedderParams params;
  std::optional<embedder::SgdState> optimizer;
  std::vector<int> class_labels;
  std::optional<trainer::HypothesisModel> hypothesis;
};

void save_model(const std::filesystem::path& path, const ModelFile& model);
ModelFile load_model(const std::filesystem::path& path);

std::string clip_mode_to_string(numerics::ClipMode mode);
numerics::ClipMode clip_mode_from_string(const std::string& name);

}  // namespace glrtml::model_io
