#pragma once

#include <vector>

#include "avu/tensor.hpp"

namespace avu {

// Patch-audio similarity logits dot(p_{t,m}, a_t) / sqrt(C).
// patches [T, M, C], audio [T, C] -> [T, M].
Tensor ssl_scores(const Tensor& patches, const Tensor& audio);

// Softmax of ssl_scores over the M patches of each segment.
// patches [M, C] with audio [1, C] (or [C]) -> [M]; [T, M, C] with [T, C] -> [T, M].
Tensor ssl_heatmap(const Tensor& patches, const Tensor& audio);

// Heatmap region for cIoU: patches whose score is at least `threshold` times
// the segment maximum, block-upsampled from g x g to H x W.
std::vector<std::uint8_t> heatmap_region(std::span<const double> heatmap, std::size_t grid,
                                         std::size_t height, std::size_t width,
                                         double threshold = 0.5);

}  // namespace avu
