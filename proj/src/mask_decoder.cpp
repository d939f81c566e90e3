#include "avu/mask_decoder.hpp"

#include <cmath>

#include "avu/errors.hpp"
#include "avu/ops.hpp"

namespace avu {

std::size_t MaskDecoderConfig::stage_count() const {
  if (grid == 0 || height != width || height % grid != 0) {
    throw ConfigError("mask decoder: H=" + std::to_string(height) + ", W=" +
                      std::to_string(width) + " must be equal multiples of g=" +
                      std::to_string(grid));
  }
  std::size_t ratio = height / grid;
  std::size_t stages = 0;
  while (ratio > 1) {
    if (ratio % 2 != 0) {
      throw ConfigError("mask decoder: H/g = " + std::to_string(height / grid) +
                        " is not a power of two");
    }
    ratio /= 2;
    ++stages;
  }
  if (channels.empty() || out_channels == 0) {
    throw ConfigError("mask decoder: channel list and output channels must be non-empty");
  }
  return stages;
}

std::size_t MaskDecoderConfig::stage_channels(std::size_t stage) const {
  return channels[std::min(stage, channels.size() - 1)];
}

std::size_t grid_side(std::size_t patches) {
  const auto g = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(patches))));
  if (patches == 0 || g * g != patches) {
    throw ConfigError("patch count M=" + std::to_string(patches) + " is not a square grid");
  }
  return g;
}

namespace {

ConvParams make_conv(ParamStore& store, Rng& rng, const std::string& name, std::size_t cin,
                     std::size_t cout, std::size_t k, TaskSet users, bool zero) {
  ConvParams p;
  if (zero) {
    p.weight = store.zeros(name + ".w", {cout, cin, k, k}, users);
  } else {
    p.weight = store.xavier(rng, name + ".w", {cout, cin, k, k}, cin * k * k, cout * k * k,
                            users);
  }
  p.bias = store.zeros(name + ".b", {cout}, users);
  return p;
}

Tensor conv(const ConvParams& p, const Tensor& x) { return ops::conv2d(x, p.weight, p.bias); }

}  // namespace

MaskDecoderParams make_mask_decoder_params(ParamStore& store, Rng& rng,
                                           const MaskDecoderConfig& config, TaskSet users,
                                           bool zero_output) {
  MaskDecoderParams p;
  p.config = config;
  const std::size_t stages = config.stage_count();
  p.input = make_conv(store, rng, "mask.in", config.dim, config.stage_channels(0), 1, users,
                      false);
  for (std::size_t s = 0; s < stages; ++s) {
    p.stages.push_back(make_conv(store, rng, "mask.up" + std::to_string(s),
                                 config.stage_channels(s), config.stage_channels(s + 1), 3,
                                 users, false));
  }
  p.output = make_conv(store, rng, "mask.out", config.stage_channels(stages),
                       config.out_channels, 1, users, zero_output);
  return p;
}

Tensor avs_mask_decode(const MaskDecoderParams& params, const UnifiedSequence& seq,
                       std::vector<Tensor>* relu_inputs) {
  const MaskDecoderConfig& cfg = params.config;
  const std::size_t g = grid_side(seq.patches);
  if (g != cfg.grid) {
    throw ConfigError("mask decoder built for g=" + std::to_string(cfg.grid) +
                      ", sequence has g=" + std::to_string(g));
  }
  const std::size_t t = seq.segments;
  const std::size_t m = seq.patches;
  const std::size_t c = seq.tokens.dim(1);
  if (c != cfg.dim) {
    throw ShapeError("mask decoder: sequence width " + std::to_string(c) + ", expected " +
                     std::to_string(cfg.dim));
  }
  const Tensor spatial = deserialize(seq).second;  // [T, M+1, C]
  Tensor audio = ops::slice(spatial, 1, 0, 1);
  Tensor patches = ops::slice(spatial, 1, 1, m + 1);
  Tensor fused = ops::scale(ops::add(patches, audio), static_cast<double>(m + 1));
  Tensor x = ops::reshape(ops::transpose(fused), {t, c, g, g});
  const auto rectify = [relu_inputs](const Tensor& pre) {
    if (relu_inputs) relu_inputs->push_back(pre);
    return ops::relu(pre);
  };
  x = rectify(conv(params.input, x));
  for (const auto& stage : params.stages) x = rectify(conv(stage, ops::upsample_nearest2x(x)));
  return conv(params.output, x);
}

}  // namespace avu
