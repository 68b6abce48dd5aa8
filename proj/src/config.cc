#include "dsvqa/config.h"

#include <cstdio>
#include <fstream>
#include <set>

namespace dsvqa {

void RunConfig::validate() const {
  if (batch < 2) throw ConfigError("batch must be at least 2 (PLCC needs variance)");
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (num_frames == 0) throw ConfigError("num_frames must be positive");
  if (fragment_grid == 0 || fragment_size == 0) {
    throw ConfigError("fragment_grid and fragment_size must be positive");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
  if (!(text_beta >= 0.0 && text_beta <= 1.0)) throw ConfigError("text_beta must lie in [0, 1]");
  if (reduction == 0) throw ConfigError("reduction must be positive");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("AdamW betas must lie in [0, 1)");
  }
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  try {
    parse_fusion_mode(fusion_mode);
    parse_temporal_conv(temporal_conv);
    const auto set = BranchSet::parse(branches);
    if (set.tcm && num_frames < 2) throw ConfigError("the tcm branch needs num_frames >= 2");
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

nlohmann::json config_to_json(const RunConfig& c) {
  return {
      {"num_frames", c.num_frames},
      {"fragment_grid", c.fragment_grid},
      {"fragment_size", c.fragment_size},
      {"alpha", c.alpha},
      {"reduction", c.reduction},
      {"embed_dim", c.embed_dim},
      {"lr", c.lr},
      {"beta1", c.beta1},
      {"beta2", c.beta2},
      {"weight_decay", c.weight_decay},
      {"adam_eps", c.adam_eps},
      {"batch", c.batch},
      {"epochs", c.epochs},
      {"seed", c.seed},
      {"fusion_mode", c.fusion_mode},
      {"temporal_conv", c.temporal_conv},
      {"branches", c.branches},
      {"temperature", c.temperature},
      {"prompts", {{"pos", c.prompts.pos}, {"neg", c.prompts.neg}, {"guide", c.prompts.guide}}},
      {"text_beta", c.text_beta},
      {"softmax_weights", c.softmax_weights},
      {"adapt_prompts", c.adapt_prompts},
      {"cbam_sequential", c.cbam_sequential},
      {"temporal_window", c.temporal_window},
      {"trainable", c.trainable},
      {"shuffle", c.shuffle},
  };
}

namespace {

template <typename V>
void read_key(const nlohmann::json& j, const char* key, V& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config key \"") + key + "\": " + e.what());
  }
}

}  // namespace

RunConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig c;
  const auto known = config_to_json(c);
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown config key \"" + key + "\"");
  }
  read_key(j, "num_frames", c.num_frames);
  read_key(j, "fragment_grid", c.fragment_grid);
  read_key(j, "fragment_size", c.fragment_size);
  read_key(j, "alpha", c.alpha);
  read_key(j, "reduction", c.reduction);
  read_key(j, "embed_dim", c.embed_dim);
  read_key(j, "lr", c.lr);
  read_key(j, "beta1", c.beta1);
  read_key(j, "beta2", c.beta2);
  read_key(j, "weight_decay", c.weight_decay);
  read_key(j, "adam_eps", c.adam_eps);
  read_key(j, "batch", c.batch);
  read_key(j, "epochs", c.epochs);
  read_key(j, "seed", c.seed);
  read_key(j, "fusion_mode", c.fusion_mode);
  read_key(j, "temporal_conv", c.temporal_conv);
  read_key(j, "branches", c.branches);
  read_key(j, "temperature", c.temperature);
  if (j.contains("prompts")) {
    const auto& p = j.at("prompts");
    if (!p.is_object()) throw ConfigError("config key \"prompts\" must be an object");
    for (const auto& [key, value] : p.items()) {
      if (key != "pos" && key != "neg" && key != "guide") {
        throw ConfigError("unknown prompt key \"" + key + "\"");
      }
    }
    read_key(p, "pos", c.prompts.pos);
    read_key(p, "neg", c.prompts.neg);
    read_key(p, "guide", c.prompts.guide);
  }
  read_key(j, "text_beta", c.text_beta);
  read_key(j, "softmax_weights", c.softmax_weights);
  read_key(j, "adapt_prompts", c.adapt_prompts);
  read_key(j, "cbam_sequential", c.cbam_sequential);
  read_key(j, "temporal_window", c.temporal_window);
  read_key(j, "trainable", c.trainable);
  read_key(j, "shuffle", c.shuffle);
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

ModelConfig model_config(const RunConfig& run, const DataDims& dims) {
  run.validate();
  ModelConfig m;
  m.dim = dims.dim;
  m.reduction = run.reduction;
  m.alpha = run.alpha;
  m.fragment_channels = dims.fragment_channels;
  m.tcm.temporal = parse_temporal_conv(run.temporal_conv);
  m.tcm.cbam_sequential = run.cbam_sequential;
  m.tcm.temporal_window = run.temporal_window;
  m.fusion = parse_fusion_mode(run.fusion_mode);
  m.branches = BranchSet::parse(run.branches);
  m.temperature = run.temperature;
  m.text_beta = run.text_beta;
  m.softmax_weights = run.softmax_weights;
  m.adapt_prompts = run.adapt_prompts;
  if (m.dim % run.reduction != 0) {
    throw ConfigError("embedding width " + std::to_string(m.dim) + " is not divisible by r=" +
                      std::to_string(run.reduction));
  }
  return m;
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace dsvqa
