#include "dsvqa/data.h"

#include <algorithm>
#include <cmath>

#include "dsvqa/rng.h"
#include "dsvqa/tensor_file.h"

namespace dsvqa {

namespace {

std::vector<std::size_t> window(std::size_t num_available, std::size_t count, std::size_t start) {
  std::vector<std::size_t> idx(count);
  for (std::size_t i = 0; i < count; ++i) idx[i] = std::min(start + i, num_available - 1);
  return idx;
}

}  // namespace

std::vector<std::size_t> sample_frames(std::size_t num_available, std::size_t count,
                                       std::uint64_t seed) {
  if (num_available == 0) throw DataError("cannot sample frames from an empty video");
  if (count == 0) throw DataError("frame count must be positive");
  std::size_t start = 0;
  if (num_available > count) start = SplitMix64(seed).below(num_available - count + 1);
  return window(num_available, count, start);
}

std::vector<std::size_t> centered_frames(std::size_t num_available, std::size_t count) {
  if (num_available == 0) throw DataError("cannot sample frames from an empty video");
  if (count == 0) throw DataError("frame count must be positive");
  const std::size_t start = num_available > count ? (num_available - count) / 2 : 0;
  return window(num_available, count, start);
}

std::vector<std::string> assign_splits(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  SplitMix64 rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  const auto n_train = static_cast<std::size_t>(std::llround(0.7 * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(n)));
  std::vector<std::string> labels(n);
  for (std::size_t k = 0; k < n; ++k) {
    labels[order[k]] = k < n_train ? "train" : (k < n_train + n_val ? "val" : "test");
  }
  return labels;
}

TextEmbeddingSet<float> load_text(const Manifest& manifest) {
  auto read = [&](const std::string& p, const char* what) {
    if (p.empty()) throw DataError(std::string("manifest has no ") + what + " text embedding");
    auto t = read_tensor_as<float>(manifest.resolve(p));
    if (t.rank() != 1) {
      throw DataError(std::string(what) + " text embedding must be rank 1, got " +
                      shape_str(t.shape()));
    }
    return t;
  };
  TextEmbeddingSet<float> text;
  text.guide = read(manifest.text_embeddings.guide, "guide");
  text.pos = read(manifest.text_embeddings.pos, "pos");
  text.neg = read(manifest.text_embeddings.neg, "neg");
  if (text.pos.numel() != text.guide.numel() || text.neg.numel() != text.guide.numel()) {
    throw DataError("text embeddings differ in width");
  }
  return text;
}

Dataset load_dataset(const Manifest& manifest, const std::string& split, const RunConfig& run) {
  if (split != "train" && split != "val" && split != "test" && split != "all") {
    throw DataError("unknown split \"" + split + "\" (expected train, val, test or all)");
  }
  const auto report = validate_manifest(manifest);
  if (!report.ok()) throw DataError("manifest failed validation:\n" + report.summary());
  const bool need_clip = BranchSet::parse(run.branches).tcm;

  std::vector<std::string> labels;
  for (const auto& e : manifest.entries) labels.push_back(e.split);
  const bool unlabeled =
      std::any_of(labels.begin(), labels.end(), [](const auto& s) { return s.empty(); });
  if (unlabeled) labels = assign_splits(manifest.entries.size(), run.seed);

  Dataset data;
  data.split = split;
  data.text = load_text(manifest);
  data.dims.dim = data.text.guide.numel();
  data.name = manifest.entries.front().dataset;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    if (split != "all" && labels[i] != split) continue;
    const auto& e = manifest.entries[i];
    VideoRecord v;
    v.video_id = e.video_id;
    v.mos = e.mos;
    v.frames = read_tensor_as<float>(manifest.resolve(e.frames_path));
    if (v.frames.rank() == 2) v.frames = v.frames.reshaped({v.frames.dim(0), v.frames.dim(1), 1, 1});
    if (need_clip) {
      if (e.clip_path.empty()) {
        throw DataError("video " + e.video_id + " has no clip_path but the tcm branch is enabled");
      }
      v.clip = read_tensor_as<float>(manifest.resolve(e.clip_path));
      if (v.clip.dim(0) != 3) {
        throw DataError("video " + e.video_id + ": clip must have 3 colour channels, got " +
                        shape_str(v.clip.shape()));
      }
    }
    v.local = read_tensor_as<float>(manifest.resolve(e.fragments_path));
    if (v.local.dim(0) == 3) {
      const auto grid =
          sample_fragments(v.local, run.fragment_grid, run.fragment_size, run.seed);
      v.local = fragment_descriptors(grid);
    }
    if (!data.videos.empty()) {
      const auto& first = data.videos.front();
      if (first.frames.shape() != v.frames.shape() || first.local.shape() != v.local.shape() ||
          first.clip.shape() != v.clip.shape()) {
        throw DataError("video " + e.video_id + " differs in tensor shape from " +
                        first.video_id + "; every video in a split must share shapes");
      }
    }
    data.videos.push_back(std::move(v));
  }
  if (data.videos.empty()) throw DataError("split \"" + split + "\" is empty");
  data.dims.fragment_channels = data.videos.front().local.dim(0);
  if (data.videos.front().frames.dim(1) != data.dims.dim) {
    throw DataError("frame embedding width does not match the text embedding width");
  }
  return data;
}

namespace {

/// Copies frames idx along `axis` (0 or 1) of a rank-4 tensor into dst.
void gather(const Tensor<float>& src, std::size_t axis, const std::vector<std::size_t>& idx,
            float* dst) {
  const auto& s = src.shape();
  const std::size_t outer = axis == 0 ? 1 : s[0];
  const std::size_t length = s[axis];
  std::size_t inner = 1;
  for (std::size_t a = axis + 1; a < s.size(); ++a) inner *= s[a];
  const float* base = src.data().data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t k = 0; k < idx.size(); ++k) {
      std::copy_n(base + (o * length + idx[k]) * inner, inner, dst);
      dst += inner;
    }
  }
}

}  // namespace

Batch<float> make_batch(const Dataset& data, const std::vector<std::size_t>& indices,
                        const RunConfig& run, const std::vector<std::uint64_t>& window_seeds) {
  if (indices.empty()) throw DataError("empty batch");
  const bool random = !window_seeds.empty();
  if (random && window_seeds.size() != indices.size()) {
    throw Error("make_batch: one window seed per video is required");
  }
  const auto& first = data.videos.at(indices.front());
  const std::size_t b = indices.size();
  const std::size_t t = run.num_frames;
  const auto& fs = first.frames.shape();
  const auto& ls = first.local.shape();
  Batch<float> batch;
  batch.frames = Tensor<float>({b, t, fs[1], fs[2], fs[3]});
  batch.local = Tensor<float>({b, ls[0], t, ls[2], ls[3]});
  const bool has_clip = first.clip.rank() == 4;
  if (has_clip) {
    const auto& cs = first.clip.shape();
    batch.clip = Tensor<float>({b, cs[0], t, cs[2], cs[3]});
  }
  const std::size_t frame_block = t * fs[1] * fs[2] * fs[3];
  const std::size_t local_block = ls[0] * t * ls[2] * ls[3];
  const std::size_t clip_block = has_clip ? batch.clip.numel() / b : 0;
  for (std::size_t k = 0; k < b; ++k) {
    const auto& v = data.videos.at(indices[k]);
    const std::size_t n = v.frames.dim(0);
    const auto idx = random ? sample_frames(n, t, window_seeds[k]) : centered_frames(n, t);
    gather(v.frames, 0, idx, batch.frames.data().data() + k * frame_block);
    if (has_clip) gather(v.clip, 1, idx, batch.clip.data().data() + k * clip_block);
    const std::size_t nl = v.local.dim(1);
    // Fragment features aligned with the frames reuse their window.
    const auto lidx = nl == n ? idx
                              : (random ? sample_frames(nl, t, ~window_seeds[k])
                                        : centered_frames(nl, t));
    gather(v.local, 1, lidx, batch.local.data().data() + k * local_block);
  }
  return batch;
}

}  // namespace dsvqa
