#include "dsvqa/synth.h"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "dsvqa/bvfe.h"
#include "dsvqa/data.h"
#include "dsvqa/rng.h"
#include "dsvqa/tensor_file.h"

namespace dsvqa {

namespace {

using Vec = std::vector<double>;

constexpr double kTextKappa = 0.5;
constexpr double kTextNoise = 0.05;
constexpr double kOffsetGain = 1.0;
constexpr double kJitter = 0.05;
constexpr double kLatentRange = 3.0;

double dot(const Vec& a, const Vec& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

Vec gaussian(Rng& rng, std::size_t n, double sd) {
  Vec v(n);
  for (auto& x : v) x = normal(rng, 0.0, sd);
  return v;
}

void remove_component(Vec& v, const Vec& unit) {
  const double p = dot(v, unit);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] -= p * unit[i];
}

void normalize(Vec& v) {
  const double n = std::sqrt(dot(v, v));
  for (auto& x : v) x /= n;
}

Tensor<float> to_tensor(Shape shape, const Vec& v) {
  return Tensor<float>(std::move(shape), std::vector<float>(v.begin(), v.end()));
}

/// Smooth moving colour pattern with quality-dependent noise and flicker.
Tensor<double> degraded_video(Rng& rng, std::size_t t, std::size_t size, double degradation) {
  Tensor<double> v({3, t, size, size});
  const double fy = uniform(rng, 0.2, 0.8) * 8.0 / static_cast<double>(size);
  const double fx = uniform(rng, 0.2, 0.8) * 8.0 / static_cast<double>(size);
  const double omega = uniform(rng, 0.1, 0.4);
  double phase[3];
  for (auto& p : phase) p = uniform(rng, 0.0, 6.283185307179586);
  const double pixel_noise = 0.02 + 0.3 * degradation;
  for (std::size_t f = 0; f < t; ++f) {
    const double flicker = normal(rng, 0.0, 0.2 * degradation);
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
          const double base = 0.5 + 0.25 * std::sin(fx * static_cast<double>(x) +
                                                    fy * static_cast<double>(y) + phase[c] +
                                                    omega * static_cast<double>(f));
          v[((c * t + f) * size + y) * size + x] = base + flicker + normal(rng, 0.0, pixel_noise);
        }
      }
    }
  }
  return v;
}

std::string video_name(const std::string& dataset, std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04zu", i);
  return dataset + "_" + buf;
}

}  // namespace

Manifest synth_dataset(const SynthConfig& config, const std::filesystem::path& out_dir) {
  if (config.n_videos == 0) throw Error("synth: n_videos must be positive");
  if (config.dim < 2) throw Error("synth: dim must be at least 2");
  if (config.num_frames == 0) throw Error("synth: num_frames must be positive");
  if (config.noise < 0.0) throw Error("synth: noise must be non-negative");
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "text");
  fs::create_directories(out_dir / "videos");
  const std::size_t d = config.dim;

  Rng dir(config.direction_seed);
  Vec u = gaussian(dir, d, 1.0);
  normalize(u);
  Vec k = gaussian(dir, d, 1.0);
  remove_component(k, u);
  normalize(k);
  auto text = [&](double sign) {
    Vec t(d);
    for (std::size_t i = 0; i < d; ++i) {
      t[i] = k[i] + sign * kTextKappa * u[i] + normal(dir, 0.0, kTextNoise);
    }
    return t;
  };
  const Vec pos = text(+1.0);
  const Vec neg = text(-1.0);
  const Vec guide = text(0.0);

  Manifest m;
  m.encoder = "synthetic";
  m.base_dir = out_dir;
  m.text_embeddings = {"text/guide.dvlt", "text/pos.dvlt", "text/neg.dvlt"};
  write_tensor(to_tensor({d}, guide), out_dir / m.text_embeddings.guide);
  write_tensor(to_tensor({d}, pos), out_dir / m.text_embeddings.pos);
  write_tensor(to_tensor({d}, neg), out_dir / m.text_embeddings.neg);

  const auto splits = assign_splits(config.n_videos, config.seed);
  Rng rng(config.seed);
  const std::size_t t = config.num_frames;
  for (std::size_t i = 0; i < config.n_videos; ++i) {
    const double a = uniform(rng, -kLatentRange, kLatentRange);
    Vec content = gaussian(rng, d, 1.0 / std::sqrt(static_cast<double>(d)));
    remove_component(content, u);

    Vec frames(t * d);
    Vec mean(d, 0.0);
    for (std::size_t f = 0; f < t; ++f) {
      for (std::size_t j = 0; j < d; ++j) {
        const double z = a * u[j] + content[j] + kOffsetGain * k[j] + normal(rng, 0.0, kJitter);
        frames[f * d + j] = static_cast<double>(static_cast<float>(z));
        mean[j] += frames[f * d + j] / static_cast<double>(t);
      }
    }
    const double latent = dot(mean, u);
    const double mos =
        std::clamp(1.0 / (1.0 + std::exp(-latent)) + normal(rng, 0.0, config.noise), 0.0, 1.0);
    const double degradation = 1.0 - 1.0 / (1.0 + std::exp(-a));

    const auto clip = degraded_video(rng, t, config.clip_size, degradation);
    const auto source = degraded_video(rng, t, config.frame_size, degradation);
    const auto grid = sample_fragments(source, config.fragment_grid, config.fragment_size,
                                       config.seed * 1000003ULL + i);
    const auto local = fragment_descriptors(grid);

    ManifestEntry e;
    e.video_id = video_name(config.dataset, i);
    e.mos = mos;
    e.mos_scale = {0.0, 1.0};
    e.num_frames = t;
    e.split = splits[i];
    e.dataset = config.dataset;
    e.frames_path = "videos/" + e.video_id + ".frames.dvlt";
    e.fragments_path = "videos/" + e.video_id + ".fragments.dvlt";
    e.clip_path = "videos/" + e.video_id + ".clip.dvlt";
    write_tensor(to_tensor({t, d}, frames), out_dir / e.frames_path);
    write_tensor(local.cast<float>(), out_dir / e.fragments_path);
    write_tensor(clip.cast<float>(), out_dir / e.clip_path);
    m.entries.push_back(std::move(e));
  }
  save_manifest(m, out_dir / "manifest.json");
  return m;
}

}  // namespace dsvqa
