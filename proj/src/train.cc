#include "dsvqa/train.h"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "dsvqa/evaluate.h"
#include "dsvqa/optim.h"

namespace dsvqa {

std::vector<std::vector<std::size_t>> make_minibatches(const std::vector<std::size_t>& order,
                                                       std::size_t batch) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < order.size(); i += batch) {
    const std::size_t end = std::min(order.size(), i + batch);
    if (end - i == 1 && !out.empty()) {
      out.back().push_back(order[i]);
    } else {
      out.emplace_back(order.begin() + static_cast<long>(i), order.begin() + static_cast<long>(end));
    }
  }
  return out;
}

namespace {

Tensor<float> targets(const Dataset& data, const std::vector<std::size_t>& idx) {
  Tensor<float> t({idx.size()});
  for (std::size_t k = 0; k < idx.size(); ++k) t[k] = static_cast<float>(data.videos[idx[k]].mos);
  return t;
}

double probe_loss(QualityModel<float>& model, const Dataset& data, const RunConfig& run) {
  NoGradGuard no_grad;
  std::vector<std::size_t> order(data.videos.size());
  std::iota(order.begin(), order.end(), 0);
  const RunMode mode{true, false};
  double total = 0;
  const auto batches = make_minibatches(order, run.batch);
  for (const auto& idx : batches) {
    auto pred = model.forward(make_batch(data, idx, run, {}), data.text, mode);
    total += plcc_loss(pred.q, targets(data, idx)).item();
  }
  return total / static_cast<double>(batches.size());
}

}  // namespace

TrainResult train(const RunConfig& run, const Manifest& manifest, const std::filesystem::path& out_dir,
                  std::ostream* log) {
  run.validate();
  const auto started = std::chrono::steady_clock::now();
  const Dataset data = load_dataset(manifest, "train", run);
  if (data.videos.size() < 2) throw DataError("train split needs at least 2 videos");

  Rng rng(run.seed);
  QualityModel<float> model(model_config(run, data.dims), rng);
  auto state = model.state();
  std::vector<Parameter<float>*> params;
  TrainResult result;
  for (auto& [name, p] : state.params) {
    if (!run.trainable) p->set_trainable(false);
    params.push_back(p);
    result.parameters += p->value().numel();
    if (p->trainable()) result.trainable_parameters += p->value().numel();
  }
  AdamWOptions opts;
  opts.lr = run.lr;
  opts.beta1 = run.beta1;
  opts.beta2 = run.beta2;
  opts.eps = run.adam_eps;
  opts.weight_decay = run.weight_decay;
  AdamW<float> optimizer(params, opts);

  result.train_videos = data.videos.size();
  result.initial_loss = probe_loss(model, data, run);
  if (log) {
    *log << "train: " << data.videos.size() << " videos, " << result.trainable_parameters
         << " trainable parameters, initial loss " << result.initial_loss << "\n";
  }

  std::vector<std::size_t> order(data.videos.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 1; epoch <= run.epochs; ++epoch) {
    if (run.shuffle) {
      for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[rng() % i]);
      }
    }
    double total = 0;
    const auto batches = make_minibatches(order, run.batch);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto& idx = batches[b];
      std::vector<std::uint64_t> seeds(idx.size());
      for (auto& s : seeds) s = rng();
      const auto batch = make_batch(data, idx, run, seeds);
      double value = 0;
      try {
        auto pred = model.forward(batch, data.text, RunMode::train());
        auto loss = plcc_loss(pred.q, targets(data, idx));
        value = loss.item();
        if (optimizer.size() > 0) {
          backward(loss);
          optimizer.step();
          optimizer.zero_grad();
        }
      } catch (const NumericError& e) {
        throw NumericError("non-finite value at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(b) + ": " + e.what());
      }
      total += value;
    }
    const double mean_loss = total / static_cast<double>(batches.size());
    result.epochs.push_back({epoch, mean_loss});
    if (log) *log << "epoch " << epoch << " loss " << mean_loss << "\n";
  }
  result.final_loss = probe_loss(model, data, run);
  const auto summary = summarize(data.name, "train", predict(model, data, run));
  result.train_srocc = summary.srocc;
  result.train_plcc = summary.plcc;

  save_checkpoint(out_dir, run, data.dims, model);
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : result.epochs) epochs.push_back({{"epoch", e.epoch}, {"loss", e.loss}});
  const nlohmann::json train_log = {
      {"train_videos", result.train_videos},
      {"parameters", result.parameters},
      {"trainable_parameters", result.trainable_parameters},
      {"initial_loss", result.initial_loss},
      {"final_loss", result.final_loss},
      {"train_srocc", result.train_srocc},
      {"train_plcc", result.train_plcc},
      {"epochs", epochs},
  };
  std::ofstream(out_dir / "train_log.json") << train_log.dump(2) << "\n";
  result.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  if (log) *log << "train: done in " << result.seconds << " s, final loss " << result.final_loss
                << ", train SROCC " << result.train_srocc << ", PLCC " << result.train_plcc << "\n";
  return result;
}

}  // namespace dsvqa
