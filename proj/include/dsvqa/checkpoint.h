#pragma once

#include <filesystem>
#include <memory>

#include "dsvqa/config.h"

namespace dsvqa {

/// On-disk layout: <dir>/index.json plus one TensorFile per parameter or
/// buffer under <dir>/tensors/. The index records the run config, the data
/// widths and, for every tensor, its name, kind, file and shape.
void save_checkpoint(const std::filesystem::path& dir, const RunConfig& run, const DataDims& dims,
                     QualityModel<float>& model);

struct LoadedModel {
  RunConfig run;
  DataDims dims;
  std::unique_ptr<QualityModel<float>> model;
};

/// Rebuilds the model from the stored config and overwrites every tensor.
/// Throws FormatError on a missing or mismatched tensor.
LoadedModel load_checkpoint(const std::filesystem::path& dir);

/// FNV-1a over index.json and every tensor file, in index order.
std::uint64_t checkpoint_digest(const std::filesystem::path& dir);

/// Builds a freshly initialized model: Rng(run.seed) drives initialization.
std::unique_ptr<QualityModel<float>> build_model(const RunConfig& run, const DataDims& dims);

}  // namespace dsvqa
