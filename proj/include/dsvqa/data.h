#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dsvqa/config.h"
#include "dsvqa/manifest.h"

namespace dsvqa {

/// T frame indices forming a contiguous window with a start drawn from
/// SplitMix64(seed) as `next() % (num_available - T + 1)`. Fewer than T
/// available frames yield 0..n-1 followed by repeats of the last frame.
std::vector<std::size_t> sample_frames(std::size_t num_available, std::size_t count,
                                       std::uint64_t seed);

/// Deterministic evaluation window: start (num_available - T) / 2, same
/// padding rule as sample_frames.
std::vector<std::size_t> centered_frames(std::size_t num_available, std::size_t count);

/// Seeded 70/10/20 train/val/test assignment of n items (Fisher-Yates driven
/// by SplitMix64, so the labels are reproducible outside this library).
std::vector<std::string> assign_splits(std::size_t n, std::uint64_t seed);

struct VideoRecord {
  std::string video_id;
  double mos = 0.0;
  Tensor<float> frames;  // T x D x H x W
  Tensor<float> clip;    // 3 x T x H x W, empty (rank 0) when absent
  Tensor<float> local;   // C x T' x H' x W'
};

struct Dataset {
  std::string name;  // dataset label of the first entry, or the manifest stem
  std::string split;
  std::vector<VideoRecord> videos;
  TextEmbeddingSet<float> text;
  DataDims dims;
};

/// Loads one split ("train", "val", "test" or "all"). Entries without split
/// labels get assign_splits(n, run.seed). Raw RGB fragment volumes (3
/// channels) are sampled with the run's fragment geometry and summarized by
/// fragment_descriptors. Throws DataError for an empty split, a missing clip
/// when the tcm branch is enabled, or inconsistent shapes.
Dataset load_dataset(const Manifest& manifest, const std::string& split, const RunConfig& run);

/// Stacks the selected videos. `window_seeds` empty means centered windows,
/// otherwise one seed per selected video.
Batch<float> make_batch(const Dataset& data, const std::vector<std::size_t>& indices,
                        const RunConfig& run, const std::vector<std::uint64_t>& window_seeds);

/// Reads the text embeddings of a manifest.
TextEmbeddingSet<float> load_text(const Manifest& manifest);

}  // namespace dsvqa
