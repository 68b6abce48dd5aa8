#include "dsvqa/bvfe.h"

#include <algorithm>
#include <cmath>

#include "dsvqa/rng.h"

namespace dsvqa {

std::vector<FragmentOffset> fragment_offsets(std::size_t height, std::size_t width,
                                             std::size_t grid, std::size_t patch,
                                             std::uint64_t seed) {
  if (grid == 0 || patch == 0) throw Error("fragment grid and patch size must be positive");
  SplitMix64 rng(seed);
  std::vector<FragmentOffset> offsets;
  offsets.reserve(grid * grid);
  for (std::size_t gy = 0; gy < grid; ++gy) {
    const std::size_t y0 = gy * height / grid;
    const std::size_t y1 = (gy + 1) * height / grid;
    for (std::size_t gx = 0; gx < grid; ++gx) {
      const std::size_t x0 = gx * width / grid;
      const std::size_t x1 = (gx + 1) * width / grid;
      if (y1 - y0 < patch || x1 - x0 < patch) {
        throw Error("fragment region " + std::to_string(y1 - y0) + "x" + std::to_string(x1 - x0) +
                    " is smaller than the " + std::to_string(patch) + "x" +
                    std::to_string(patch) + " patch");
      }
      FragmentOffset off;
      off.y = y0 + rng.below(y1 - y0 - patch + 1);
      off.x = x0 + rng.below(x1 - x0 - patch + 1);
      offsets.push_back(off);
    }
  }
  return offsets;
}

template <typename T>
FragmentGrid<T> sample_fragments(const Tensor<T>& frames, std::size_t grid, std::size_t patch,
                                 std::uint64_t seed) {
  if (frames.rank() != 4) {
    throw ShapeError("sample_fragments expects C x T x H x W frames, got " +
                     shape_str(frames.shape()));
  }
  const std::size_t c = frames.dim(0);
  const std::size_t t = frames.dim(1);
  const std::size_t h = frames.dim(2);
  const std::size_t w = frames.dim(3);
  FragmentGrid<T> out;
  out.grid = grid;
  out.patch = patch;
  out.offsets = fragment_offsets(h, w, grid, patch, seed);
  const std::size_t side = grid * patch;
  out.patches = Tensor<T>({c, t, side, side});
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t f = 0; f < t; ++f) {
      const T* src = frames.data().data() + (ch * t + f) * h * w;
      T* dst = out.patches.data().data() + (ch * t + f) * side * side;
      for (std::size_t gy = 0; gy < grid; ++gy) {
        for (std::size_t gx = 0; gx < grid; ++gx) {
          const auto& off = out.offsets[gy * grid + gx];
          for (std::size_t dy = 0; dy < patch; ++dy) {
            std::copy_n(src + (off.y + dy) * w + off.x, patch,
                        dst + (gy * patch + dy) * side + gx * patch);
          }
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> fragment_descriptors(const FragmentGrid<T>& grid) {
  const auto& x = grid.patches;
  if (x.rank() != 4 || x.dim(0) != 3) {
    throw ShapeError("fragment_descriptors expects 3 x T x H x W patches, got " +
                     shape_str(x.shape()));
  }
  const std::size_t t = x.dim(1);
  const std::size_t side = x.dim(2);
  const std::size_t g = grid.grid;
  const std::size_t s = grid.patch;
  if (g * s != side || x.dim(3) != side) throw ShapeError("fragment grid geometry mismatch");
  Tensor<T> out({kDescriptorChannels, t, g, g});
  const double n = static_cast<double>(s * s);
  auto at = [&](std::size_t ch, std::size_t f, std::size_t y, std::size_t xx) -> double {
    return x[((ch * t + f) * side + y) * side + xx];
  };
  auto luma = [&](std::size_t f, std::size_t y, std::size_t xx) {
    return 0.299 * at(0, f, y, xx) + 0.587 * at(1, f, y, xx) + 0.114 * at(2, f, y, xx);
  };
  auto put = [&](std::size_t ch, std::size_t f, std::size_t gy, std::size_t gx, double v) {
    out[((ch * t + f) * g + gy) * g + gx] = static_cast<T>(v);
  };
  for (std::size_t f = 0; f < t; ++f) {
    for (std::size_t gy = 0; gy < g; ++gy) {
      for (std::size_t gx = 0; gx < g; ++gx) {
        const std::size_t y0 = gy * s;
        const std::size_t x0 = gx * s;
        // Summaries of one plane given a sampler over the patch.
        auto stats = [&](auto&& value, double& mean, double& sd, double& diff, double& range) {
          double sum = 0, sq = 0, d = 0, lo = 1e300, hi = -1e300;
          std::size_t nd = 0;
          for (std::size_t dy = 0; dy < s; ++dy) {
            for (std::size_t dx = 0; dx < s; ++dx) {
              const double v = value(y0 + dy, x0 + dx);
              sum += v;
              sq += v * v;
              lo = std::min(lo, v);
              hi = std::max(hi, v);
              if (dx + 1 < s) {
                d += std::abs(value(y0 + dy, x0 + dx + 1) - v);
                ++nd;
              }
              if (dy + 1 < s) {
                d += std::abs(value(y0 + dy + 1, x0 + dx) - v);
                ++nd;
              }
            }
          }
          mean = sum / n;
          sd = std::sqrt(std::max(0.0, sq / n - mean * mean));
          diff = nd ? d / static_cast<double>(nd) : 0.0;
          range = hi - lo;
        };
        for (std::size_t ch = 0; ch < 3; ++ch) {
          double mean, sd, diff, range;
          stats([&](std::size_t y, std::size_t xx) { return at(ch, f, y, xx); }, mean, sd, diff,
                range);
          put(ch, f, gy, gx, mean);
          put(3 + ch, f, gy, gx, sd);
          put(6 + ch, f, gy, gx, diff);
          put(9 + ch, f, gy, gx, range);
        }
        double mean, sd, diff, range;
        stats([&](std::size_t y, std::size_t xx) { return luma(f, y, xx); }, mean, sd, diff,
              range);
        put(12, f, gy, gx, mean);
        put(13, f, gy, gx, sd);
        put(14, f, gy, gx, diff);
        double change = 0;
        if (f > 0) {
          for (std::size_t dy = 0; dy < s; ++dy) {
            for (std::size_t dx = 0; dx < s; ++dx) {
              change += std::abs(luma(f, y0 + dy, x0 + dx) - luma(f - 1, y0 + dy, x0 + dx));
            }
          }
          change /= n;
        }
        put(15, f, gy, gx, change);
      }
    }
  }
  return out;
}

namespace {

ConvSpec spatial_3x3() {
  ConvSpec s;
  s.pad = {0, 1, 1};
  return s;
}

}  // namespace

template <typename T>
BvfeHead<T>::BvfeHead(const BvfeConfig& config, Rng& rng) : config_(config) {
  if (config.in_channels < 4 || config.in_channels % 4 != 0) {
    throw Error("fragment feature channels must be a positive multiple of 4, got " +
                std::to_string(config.in_channels));
  }
  const std::size_t c = config.in_channels;
  conv1 = Conv<T>(c, c / 2, {1, 3, 3}, spatial_3x3(), rng);
  conv2 = Conv<T>(c / 2, c / 4, {1, 3, 3}, spatial_3x3(), rng);
  proj = Linear<T>(c / 4, config.out_dim, rng);
}

template <typename T>
Var<T> BvfeHead<T>::refine(const Var<T>& local) const {
  if (local.rank() != 5 || local.dim(1) != config_.in_channels) {
    throw ShapeError("BVFE expects B x " + std::to_string(config_.in_channels) +
                     " x T x H x W features, got " + shape_str(local.shape()));
  }
  return conv2.forward(gelu(conv1.forward(local)));
}

template <typename T>
Var<T> BvfeHead<T>::forward(const Var<T>& local) const {
  return proj.forward(mean(refine(local), {2, 3, 4}));
}

template <typename T>
void BvfeHead<T>::collect(const std::string& prefix, StateList<T>& out) {
  conv1.collect(prefix + ".conv1", out);
  conv2.collect(prefix + ".conv2", out);
  proj.collect(prefix + ".proj", out);
}

template FragmentGrid<float> sample_fragments(const Tensor<float>&, std::size_t, std::size_t,
                                              std::uint64_t);
template FragmentGrid<double> sample_fragments(const Tensor<double>&, std::size_t, std::size_t,
                                               std::uint64_t);
template Tensor<float> fragment_descriptors(const FragmentGrid<float>&);
template Tensor<double> fragment_descriptors(const FragmentGrid<double>&);
template class BvfeHead<float>;
template class BvfeHead<double>;

}  // namespace dsvqa
