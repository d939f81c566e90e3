#include "avu/ssl.hpp"

#include <algorithm>
#include <cmath>

#include "avu/errors.hpp"
#include "avu/ops.hpp"

namespace avu {

Tensor ssl_scores(const Tensor& patches, const Tensor& audio) {
  if (patches.rank() != 3 || audio.rank() != 2 || audio.dim(0) != patches.dim(0) ||
      audio.dim(1) != patches.dim(2)) {
    throw ShapeError("ssl_scores: patches " + shape_str(patches.shape()) + " vs audio " +
                     shape_str(audio.shape()));
  }
  const std::size_t t = patches.dim(0), m = patches.dim(1), c = patches.dim(2);
  Tensor a = ops::reshape(audio, {t, c, 1});
  Tensor s = ops::reshape(ops::matmul(patches, a), {t, m});
  return ops::scale(s, 1.0 / std::sqrt(static_cast<double>(c)));
}

Tensor ssl_heatmap(const Tensor& patches, const Tensor& audio) {
  if (patches.rank() == 2) {
    const std::size_t m = patches.dim(0), c = patches.dim(1);
    if (audio.numel() != c) {
      throw ShapeError("ssl_heatmap: patches " + shape_str(patches.shape()) + " vs audio " +
                       shape_str(audio.shape()));
    }
    Tensor s = ssl_scores(ops::reshape(patches, {1, m, c}), ops::reshape(audio, {1, c}));
    return ops::reshape(ops::softmax_lastdim(s), {m});
  }
  return ops::softmax_lastdim(ssl_scores(patches, audio));
}

std::vector<std::uint8_t> heatmap_region(std::span<const double> heatmap, std::size_t grid,
                                         std::size_t height, std::size_t width,
                                         double threshold) {
  if (heatmap.size() != grid * grid || grid == 0 || height % grid != 0 || width % grid != 0) {
    throw ShapeError("heatmap_region: " + std::to_string(heatmap.size()) +
                     " scores for a " + std::to_string(grid) + "x" + std::to_string(grid) +
                     " grid onto " + std::to_string(height) + "x" + std::to_string(width));
  }
  const double peak = *std::max_element(heatmap.begin(), heatmap.end());
  std::vector<std::uint8_t> region(height * width, 0);
  if (!(peak > 0.0)) return region;
  const std::size_t bh = height / grid, bw = width / grid;
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x)
      region[y * width + x] = heatmap[(y / bh) * grid + x / bw] >= threshold * peak ? 1 : 0;
  return region;
}

}  // namespace avu
