#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "dsvqa/manifest.h"

namespace dsvqa {

/// Synthetic corpus with a planted quality direction u.
///
/// Per video, a latent a ~ U(-3, 3) sets the quality. Frame embeddings are
/// z_t = a u + c + g k + j_t, with c a content vector orthogonal to u, k the
/// common text direction, and j_t small per-frame jitter. The MOS is
/// sigmoid(<mean_t z_t, u>) + N(0, noise^2), clamped to [0, 1]. Clips and
/// fragment frames are smooth colour patterns degraded by noise and flicker
/// whose strength grows as quality falls. Text embeddings are
/// pos/neg = k +/- kappa u (+ small noise) and guide = k (+ small noise).
///
/// Everything tied to u, k and the text depends only on direction_seed, so
/// corpora with equal direction_seed and different seed share the planted
/// function but not the samples.
struct SynthConfig {
  std::size_t n_videos = 200;
  std::size_t dim = 32;
  double noise = 0.02;
  std::uint64_t seed = 1;
  std::uint64_t direction_seed = 7;
  std::size_t num_frames = 16;
  std::size_t clip_size = 8;       // clip H = W
  std::size_t fragment_grid = 4;
  std::size_t fragment_size = 4;
  std::size_t frame_size = 32;     // source frames for fragment sampling
  std::string dataset = "synthetic";
};

/// Writes text/, videos/ and manifest.json under out_dir and returns the
/// manifest (split labels assigned 70/10/20 from `seed`).
Manifest synth_dataset(const SynthConfig& config, const std::filesystem::path& out_dir);

}  // namespace dsvqa
