#pragma once

#include <array>
#include <vector>

#include "avu/attention.hpp"

namespace avu {

struct TPMConfig {
  std::size_t max_window = 8;  // S; even
  bool include_global = true;  // adds one unwindowed HAN stage
  std::size_t dim = 64;        // C
  std::size_t heads = 1;

  // {2, 4, ..., S}
  std::vector<std::size_t> scales() const;
  std::size_t stage_count() const { return scales().size() + (include_global ? 1 : 0); }
  void validate() const;
};

struct TemporalStreams {
  Tensor audio;   // [T, C]
  Tensor visual;  // [T, C]
};

// Sites of one HAN stage.
struct HanSites {
  AttentionSite audio_self;
  AttentionSite audio_cross;
  AttentionSite visual_self;
  AttentionSite visual_cross;
};

struct TPMParams {
  // Stage order: global (when enabled), then scales ascending.
  std::vector<HanSites> stages;
  Affine out_audio;   // stage_count * C -> C
  Affine out_visual;
};

TPMParams make_tpm_params(ParamStore& store, Rng& rng, const TPMConfig& config,
                          TaskSet users);

// Segments within size/2 of t on either side, clipped to [0, T).
std::vector<std::size_t> window_indices(std::size_t t, std::size_t size, std::size_t length);

// Additive logit mask [T, T]: 0 inside window_indices(t, size, T), -inf outside.
// size == 0 means no window (all zeros).
Tensor window_mask(std::size_t length, std::size_t size);

// One HAN stage: out_a[t] = sa(a_t, A_win) + ca(a_t, V_win), symmetric for v.
// size == 0 runs the dense (unwindowed) block.
std::pair<Tensor, Tensor> han_scale_block(const Tensor& audio, const Tensor& visual,
                                          std::size_t size, const HanSites& sites);

// Concatenates stage outputs on the channel axis and projects back to C.
TemporalStreams multiscale_aggregate(const std::vector<Tensor>& audio_stages,
                                     const std::vector<Tensor>& visual_stages,
                                     const TPMParams& params, const TPMConfig& config);

TemporalStreams tpm_forward(const TPMParams& params, const TPMConfig& config,
                            const Tensor& audio, const Tensor& visual);

}  // namespace avu
