#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dsvqa/checkpoint.h"
#include "dsvqa/data.h"

namespace dsvqa {

struct VideoScore {
  std::string video_id;
  double q_pre = 0.0;
  double q_gt = 0.0;
  double s_pos = 0.0;
  double s_neg = 0.0;
};

struct LogisticSummary {
  std::array<double, 4> beta{};
  double sse = 0.0;
  int iterations = 0;
  bool converged = false;
};

struct EvalReport {
  std::string dataset;
  std::string split;
  std::size_t n = 0;
  double srocc = 0.0;
  double plcc = 0.0;
  std::optional<LogisticSummary> logistic;
  std::string logistic_error;  // set when the fit was impossible
  std::vector<VideoScore> videos;
  std::string fingerprint;  // hex FNV-1a of config, checkpoint, manifest and split
};

nlohmann::json report_to_json(const EvalReport& r);
EvalReport report_from_json(const nlohmann::json& j);
/// Canonical serialized form; byte-identical for identical inputs.
std::string report_dump(const EvalReport& r);

/// Scores every video of `data` in evaluation mode (running BN statistics,
/// centered frame windows), in dataset order.
std::vector<VideoScore> predict(QualityModel<float>& model, const Dataset& data,
                                const RunConfig& run);

/// Metrics and logistic fit over already computed scores.
EvalReport summarize(const std::string& dataset, const std::string& split,
                     std::vector<VideoScore> scores);

EvalReport evaluate(const std::filesystem::path& checkpoint, const std::filesystem::path& manifest,
                    const std::string& split);

/// Evaluates the "all" split of each test manifest with a model trained on
/// `train_manifest`, without retraining. Test embeddings must share the
/// training width.
std::vector<EvalReport> cross_dataset_eval(const std::filesystem::path& checkpoint,
                                           const std::filesystem::path& train_manifest,
                                           const std::vector<std::filesystem::path>& test_manifests);

/// CSV with header video_id,q_pre,q_gt.
void write_scores_csv(const EvalReport& r, const std::filesystem::path& path);
/// Scatter of q_pre against MOS with the fitted logistic curve overlaid.
void write_scatter_svg(const EvalReport& r, const std::filesystem::path& path);

}  // namespace dsvqa
