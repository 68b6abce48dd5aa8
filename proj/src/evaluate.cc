#include "dsvqa/evaluate.h"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numeric>

namespace dsvqa {

namespace fs = std::filesystem;

nlohmann::json report_to_json(const EvalReport& r) {
  nlohmann::json videos = nlohmann::json::array();
  for (const auto& v : r.videos) {
    videos.push_back({{"video_id", v.video_id},
                      {"q_pre", v.q_pre},
                      {"q_gt", v.q_gt},
                      {"s_pos", v.s_pos},
                      {"s_neg", v.s_neg}});
  }
  nlohmann::json logistic = nullptr;
  if (r.logistic) {
    logistic = {{"beta", r.logistic->beta},
                {"sse", r.logistic->sse},
                {"iterations", r.logistic->iterations},
                {"converged", r.logistic->converged}};
  }
  nlohmann::json j = {{"dataset", r.dataset}, {"split", r.split},       {"n", r.n},
                      {"srocc", r.srocc},     {"plcc", r.plcc},         {"logistic", logistic},
                      {"videos", videos},     {"fingerprint", r.fingerprint}};
  if (!r.logistic_error.empty()) j["logistic_error"] = r.logistic_error;
  return j;
}

EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport r;
  try {
    r.dataset = j.at("dataset").get<std::string>();
    r.split = j.at("split").get<std::string>();
    r.n = j.at("n").get<std::size_t>();
    r.srocc = j.at("srocc").get<double>();
    r.plcc = j.at("plcc").get<double>();
    r.fingerprint = j.at("fingerprint").get<std::string>();
    if (!j.at("logistic").is_null()) {
      const auto& l = j.at("logistic");
      LogisticSummary s;
      s.beta = l.at("beta").get<std::array<double, 4>>();
      s.sse = l.at("sse").get<double>();
      s.iterations = l.at("iterations").get<int>();
      s.converged = l.at("converged").get<bool>();
      r.logistic = s;
    }
    if (j.contains("logistic_error")) r.logistic_error = j.at("logistic_error").get<std::string>();
    for (const auto& v : j.at("videos")) {
      r.videos.push_back({v.at("video_id").get<std::string>(), v.at("q_pre").get<double>(),
                          v.at("q_gt").get<double>(), v.at("s_pos").get<double>(),
                          v.at("s_neg").get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed evaluation report: ") + e.what());
  }
  return r;
}

std::string report_dump(const EvalReport& r) { return report_to_json(r).dump(2) + "\n"; }

std::vector<VideoScore> predict(QualityModel<float>& model, const Dataset& data,
                                const RunConfig& run) {
  NoGradGuard no_grad;
  std::vector<std::size_t> order(data.videos.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<VideoScore> out;
  for (std::size_t i = 0; i < order.size(); i += run.batch) {
    const std::vector<std::size_t> idx(order.begin() + static_cast<long>(i),
                                       order.begin() + static_cast<long>(std::min(order.size(), i + run.batch)));
    const auto pred = model.forward(make_batch(data, idx, run, {}), data.text, RunMode::eval());
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const auto& v = data.videos[idx[k]];
      out.push_back({v.video_id, pred.q.value()[k], v.mos, pred.s_pos.value()[k],
                     pred.s_neg.value()[k]});
    }
  }
  return out;
}

EvalReport summarize(const std::string& dataset, const std::string& split,
                     std::vector<VideoScore> scores) {
  if (scores.size() < 2) throw DataError("evaluation needs at least 2 videos");
  EvalReport r;
  r.dataset = dataset;
  r.split = split;
  r.n = scores.size();
  std::vector<double> pred, gt;
  for (const auto& s : scores) {
    pred.push_back(s.q_pre);
    gt.push_back(s.q_gt);
  }
  try {
    r.srocc = srocc(pred, gt);
    r.plcc = plcc(pred, gt);
  } catch (const MetricError& e) {
    throw DataError(std::string("cannot compute correlation: ") + e.what());
  }
  try {
    const auto fit = logistic_fit(pred, gt);
    r.logistic = LogisticSummary{fit.beta, fit.sse, fit.iterations, fit.converged};
  } catch (const MetricError& e) {
    r.logistic_error = e.what();
  }
  r.videos = std::move(scores);
  return r;
}

namespace {

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

EvalReport evaluate(const fs::path& checkpoint, const fs::path& manifest_path,
                    const std::string& split) {
  auto loaded = load_checkpoint(checkpoint);
  const auto manifest = load_manifest(manifest_path);
  const auto data = load_dataset(manifest, split, loaded.run);
  if (data.dims.dim != loaded.dims.dim ||
      data.dims.fragment_channels != loaded.dims.fragment_channels) {
    throw DataError("manifest widths (D=" + std::to_string(data.dims.dim) + ", C=" +
                    std::to_string(data.dims.fragment_channels) +
                    ") do not match the checkpoint (D=" + std::to_string(loaded.dims.dim) +
                    ", C=" + std::to_string(loaded.dims.fragment_channels) + ")");
  }
  auto report = summarize(data.name, split, predict(*loaded.model, data, loaded.run));
  std::uint64_t h = fnv1a(config_to_json(loaded.run).dump());
  h = fnv1a(hex64(checkpoint_digest(checkpoint)), h);
  h = fnv1a(read_bytes(manifest_path), h);
  h = fnv1a(split, h);
  report.fingerprint = hex64(h);
  return report;
}

std::vector<EvalReport> cross_dataset_eval(const fs::path& checkpoint, const fs::path& train_manifest,
                                           const std::vector<fs::path>& test_manifests) {
  if (test_manifests.empty()) throw DataError("cross-dataset evaluation needs a test manifest");
  const auto trained = load_checkpoint(checkpoint);
  const auto text = load_text(load_manifest(train_manifest));
  if (text.guide.numel() != trained.dims.dim) {
    throw DataError("training manifest width does not match the checkpoint");
  }
  std::vector<EvalReport> out;
  for (const auto& m : test_manifests) out.push_back(evaluate(checkpoint, m, "all"));
  return out;
}

void write_scores_csv(const EvalReport& r, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "video_id,q_pre,q_gt\n";
  char buf[64];
  for (const auto& v : r.videos) {
    std::snprintf(buf, sizeof buf, ",%.9g,%.9g\n", v.q_pre, v.q_gt);
    out << v.video_id << buf;
  }
}

void write_scatter_svg(const EvalReport& r, const fs::path& path) {
  if (r.videos.empty()) throw DataError("no scores to plot");
  const double width = 480, height = 360, margin = 48;
  double x0 = r.videos[0].q_pre, x1 = x0, y0 = r.videos[0].q_gt, y1 = y0;
  for (const auto& v : r.videos) {
    x0 = std::min(x0, v.q_pre);
    x1 = std::max(x1, v.q_pre);
    y0 = std::min(y0, v.q_gt);
    y1 = std::max(y1, v.q_gt);
  }
  if (x1 - x0 < 1e-12) x1 = x0 + 1e-6;
  if (y1 - y0 < 1e-12) y1 = y0 + 1e-6;
  auto px = [&](double x) { return margin + (x - x0) / (x1 - x0) * (width - 2 * margin); };
  auto py = [&](double y) { return height - margin - (y - y0) / (y1 - y0) * (height - 2 * margin); };

  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\">\n",
                width, height);
  out << buf << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof buf,
                "<rect x=\"%.0f\" y=\"%.0f\" width=\"%.0f\" height=\"%.0f\" fill=\"none\" "
                "stroke=\"black\"/>\n",
                margin, margin, width - 2 * margin, height - 2 * margin);
  out << buf;
  for (const auto& v : r.videos) {
    std::snprintf(buf, sizeof buf,
                  "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"2.5\" fill=\"steelblue\" "
                  "fill-opacity=\"0.7\"/>\n",
                  px(v.q_pre), py(v.q_gt));
    out << buf;
  }
  if (r.logistic) {
    out << "<polyline fill=\"none\" stroke=\"crimson\" stroke-width=\"2\" points=\"";
    for (int i = 0; i <= 100; ++i) {
      const double x = x0 + (x1 - x0) * i / 100.0;
      const double y = std::clamp(logistic4(r.logistic->beta, x), y0, y1);
      std::snprintf(buf, sizeof buf, "%s%.2f,%.2f", i ? " " : "", px(x), py(y));
      out << buf;
    }
    out << "\"/>\n";
  }
  std::snprintf(buf, sizeof buf,
                "<text x=\"%.0f\" y=\"%.0f\" font-size=\"12\" text-anchor=\"middle\">"
                "predicted quality</text>\n",
                width / 2, height - 12);
  out << buf;
  std::snprintf(buf, sizeof buf,
                "<text x=\"14\" y=\"%.0f\" font-size=\"12\" text-anchor=\"middle\" "
                "transform=\"rotate(-90 14 %.0f)\">MOS</text>\n",
                height / 2, height / 2);
  out << buf;
  std::snprintf(buf, sizeof buf,
                "<text x=\"%.0f\" y=\"30\" font-size=\"13\" text-anchor=\"middle\">"
                "%s/%s  SROCC %.4f  PLCC %.4f</text>\n",
                width / 2, r.dataset.c_str(), r.split.c_str(), r.srocc, r.plcc);
  out << buf << "</svg>\n";
}

}  // namespace dsvqa
