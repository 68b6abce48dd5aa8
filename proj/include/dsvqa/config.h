#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dsvqa/model.h"

namespace dsvqa {

/// Invalid run configuration (a usage error at the CLI).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Unusable dataset content: missing inputs, empty splits, shape conflicts.
class DataError : public Error {
 public:
  using Error::Error;
};

struct PromptSet {
  std::string pos = "high quality";
  std::string neg = "low quality";
  std::string guide = "video quality";
};

struct RunConfig {
  std::size_t num_frames = 16;
  std::size_t fragment_grid = 7;
  std::size_t fragment_size = 32;
  double alpha = 0.4;
  std::size_t reduction = 4;
  std::size_t embed_dim = 512;  // replaced by the width found in the data
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.01;
  double adam_eps = 1e-8;
  std::size_t batch = 8;
  std::size_t epochs = 50;
  std::uint64_t seed = 0;
  std::string fusion_mode = "text_guided";
  std::string temporal_conv = "tadaconv";
  std::vector<std::string> branches = {"bvfe", "tcm", "vbtc"};
  double temperature = 1.0;
  PromptSet prompts;
  double text_beta = 0.4;
  bool softmax_weights = false;
  bool adapt_prompts = true;
  bool cbam_sequential = false;
  std::size_t temporal_window = 0;
  bool trainable = true;  // false freezes every parameter (negative control)
  bool shuffle = true;

  /// Throws ConfigError on any violated invariant.
  void validate() const;
};

nlohmann::json config_to_json(const RunConfig& c);
/// Missing keys keep their defaults; unknown keys are a ConfigError.
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);

/// Widths found in the data that size the model.
struct DataDims {
  std::size_t dim = 0;                // text / frame embedding width
  std::size_t fragment_channels = 0;  // channels of the fragment features
};

ModelConfig model_config(const RunConfig& run, const DataDims& dims);

/// 64-bit FNV-1a.
inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = kFnvOffset);
std::string hex64(std::uint64_t v);

}  // namespace dsvqa
