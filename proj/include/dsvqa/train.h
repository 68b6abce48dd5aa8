#pragma once

#include <filesystem>
#include <ostream>
#include <vector>

#include "dsvqa/checkpoint.h"
#include "dsvqa/data.h"

namespace dsvqa {

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;  // mean minibatch loss seen while training
};

struct TrainResult {
  std::vector<EpochLog> epochs;
  /// Loss over the train split (fixed batches, centered windows, batch
  /// statistics without running-stat updates) before the first and after
  /// the last update.
  double initial_loss = 0.0;
  double final_loss = 0.0;
  /// Train-split metrics of the final in-memory model (evaluation mode),
  /// the same protocol evaluate() applies to the saved checkpoint.
  double train_srocc = 0.0;
  double train_plcc = 0.0;
  std::size_t train_videos = 0;
  std::size_t parameters = 0;            // scalar count
  std::size_t trainable_parameters = 0;  // scalar count handed to the optimizer
  double seconds = 0.0;
};

/// Minimizes 1 - PLCC on the train split with AdamW, then writes a
/// checkpoint and train_log.json into out_dir. Progress lines go to `log`
/// when given.
TrainResult train(const RunConfig& run, const Manifest& manifest,
                  const std::filesystem::path& out_dir, std::ostream* log = nullptr);

/// Minibatch partition of n items: chunks of `batch`, a trailing single item
/// joins the previous chunk.
std::vector<std::vector<std::size_t>> make_minibatches(const std::vector<std::size_t>& order,
                                                       std::size_t batch);

}  // namespace dsvqa
