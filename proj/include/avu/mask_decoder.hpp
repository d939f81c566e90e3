#pragma once

#include <vector>

#include "avu/params.hpp"
#include "avu/tpgl.hpp"

namespace avu {

struct MaskDecoderConfig {
  std::size_t dim = 64;     // C
  std::size_t grid = 4;     // g
  std::size_t height = 64;  // H
  std::size_t width = 64;   // W
  // Channel count after the input 1x1 conv, then after each upsampling
  // stage; the last entry repeats when there are more stages than entries.
  std::vector<std::size_t> channels = {16, 8, 8, 4, 4};
  std::size_t out_channels = 1;

  // Number of x2 stages from g to H; throws ConfigError for invalid sizes.
  std::size_t stage_count() const;
  std::size_t stage_channels(std::size_t stage) const;  // stage 0 = input conv
};

struct ConvParams {
  Tensor weight;  // [Cout, Cin, k, k]
  Tensor bias;    // [Cout]
};

struct MaskDecoderParams {
  MaskDecoderConfig config;
  ConvParams input;                // 1x1, C -> channels[0]
  std::vector<ConvParams> stages;  // 3x3 after each upsample
  ConvParams output;               // 1x1 -> out_channels
};

// `zero_output` initialises the final conv to zeros (logits start at 0).
MaskDecoderParams make_mask_decoder_params(ParamStore& store, Rng& rng,
                                           const MaskDecoderConfig& config, TaskSet users,
                                           bool zero_output = false);

// Throws ConfigError when M is not a perfect square.
std::size_t grid_side(std::size_t patches);

// Spatial rows of the unified sequence: each segment's patches plus its
// spatial-audio row, reshaped to [T, C, g, g], then upsampled to
// [T, out_channels, H, W] logits. `relu_inputs`, when given, receives the
// input of every ReLU in order.
Tensor avs_mask_decode(const MaskDecoderParams& params, const UnifiedSequence& seq,
                       std::vector<Tensor>* relu_inputs = nullptr);

}  // namespace avu
