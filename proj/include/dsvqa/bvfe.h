#pragma once

#include <cstdint>
#include <vector>

#include "dsvqa/layers.h"

namespace dsvqa {

struct FragmentOffset {
  std::size_t y = 0;
  std::size_t x = 0;

  friend bool operator==(const FragmentOffset&, const FragmentOffset&) = default;
};

/// Crop origins for a grid x grid fragment layout over an H x W frame.
///
/// The frame is split into grid x grid regions with integer bounds
/// [i * H / grid, (i + 1) * H / grid). One patch x patch crop is drawn per
/// region, row-major over regions; for each region a SplitMix64(seed) stream
/// supplies the row offset then the column offset, each as
/// `next() % (region_extent - patch + 1)`. Throws if a region is smaller than
/// the patch.
std::vector<FragmentOffset> fragment_offsets(std::size_t height, std::size_t width,
                                             std::size_t grid, std::size_t patch,
                                             std::uint64_t seed);

template <typename T>
struct FragmentGrid {
  Tensor<T> patches;  // C x T x (grid * patch) x (grid * patch)
  std::vector<FragmentOffset> offsets;
  std::size_t grid = 0;
  std::size_t patch = 0;
};

/// Native-resolution fragment sampling of C x T x H x W frames. Crop offsets
/// are shared by every frame.
template <typename T>
FragmentGrid<T> sample_fragments(const Tensor<T>& frames, std::size_t grid, std::size_t patch,
                                 std::uint64_t seed);

/// Number of channels produced by fragment_descriptors.
inline constexpr std::size_t kDescriptorChannels = 16;

/// Fixed (non-learned) per-patch descriptors of RGB fragments, a lightweight
/// stand-in for a pretrained fragment backbone. Input: 3 x T x (g*s) x (g*s)
/// patches; output: 16 x T x g x g. Per patch and frame the channels are
/// mean (3), standard deviation (3), mean absolute neighbour difference (3)
/// and range (3) of each colour channel, then luma mean, luma standard
/// deviation, luma neighbour difference and mean absolute luma change from the
/// previous frame (0 for the first frame).
template <typename T>
Tensor<T> fragment_descriptors(const FragmentGrid<T>& grid);

struct BvfeConfig {
  std::size_t in_channels = 768;
  std::size_t out_dim = 512;
};

/// Two 1x3x3 3-D convs (C -> C/2 -> C/4) with GELU between, global mean,
/// projection to out_dim.
template <typename T>
class BvfeHead {
 public:
  BvfeHead(const BvfeConfig& config, Rng& rng);

  Var<T> refine(const Var<T>& local) const;   // B x C/4 x T x H x W
  Var<T> forward(const Var<T>& local) const;  // B x out_dim
  void collect(const std::string& prefix, StateList<T>& out);
  const BvfeConfig& config() const { return config_; }

  Conv<T> conv1;
  Conv<T> conv2;
  Linear<T> proj;

 private:
  BvfeConfig config_;
};

extern template class BvfeHead<float>;
extern template class BvfeHead<double>;

}  // namespace dsvqa
