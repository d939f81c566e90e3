#pragma once

#include "avu/attention.hpp"
#include "avu/tpm.hpp"

namespace avu {

struct SpatialStreams {
  Tensor audio;          // [T, C]   guided audio
  Tensor patches;        // [T, M, C] guided patches
  Tensor guide_weights;  // [T, M]   visual-guided audio attention over patches
};

struct SPMParams {
  AttentionSite patch_self;      // intra-frame patch self-attention
  AttentionSite audio_to_patch;  // audio-guided patch attention
  AttentionSite patch_to_audio;  // visual-guided audio attention
};

SPMParams make_spm_params(ParamStore& store, Rng& rng, std::size_t dim, std::size_t heads,
                          TaskSet users);

// patches [T, M, C] or [M, C]: out = p + sa(p, P_t).
Tensor patch_self_attention(const Tensor& patches, const AttentionSite& site);

struct GuidedPatches {
  Tensor out;     // same shape as input patches
  Tensor branch;  // attention term added to every patch
};

// patches [T, M, C], audio context [T, A, C] (A = 1 unless chunked audio is
// enabled). With a single audio token the attention term equals the value
// projection of that token and is identical for every patch of a frame.
GuidedPatches audio_guided_patch_attention(const Tensor& patches,
                                           const Tensor& audio_context,
                                           const AttentionSite& site);

struct GuidedAudio {
  Tensor out;      // [T, C]
  Tensor weights;  // [T, M]
};

// audio [T, C] (temporal module output), patches [T, M, C].
GuidedAudio visual_guided_audio_attention(const Tensor& audio, const Tensor& patches,
                                          const AttentionSite& site);

// Applies the three attentions independently per segment.
// temporal_audio: [T, C]; audio_context: [T, A, C]; patches: [T, M, C].
SpatialStreams spm_forward(const SPMParams& params, const Tensor& temporal_audio,
                           const Tensor& audio_context, const Tensor& patches);

}  // namespace avu
