#pragma once

#include <vector>

#include "avu/params.hpp"
#include "avu/spm.hpp"
#include "avu/tpm.hpp"

namespace avu {

enum class RowKind : std::uint8_t {
  kTemporalAudio = 0,
  kTemporalVisual = 1,
  kSpatialAudio = 2,
  kSpatialPatch = 3,
};

struct RowTag {
  RowKind kind;
  std::size_t segment;
  std::size_t patch;  // patch index for kSpatialPatch, 0 otherwise
  bool operator==(const RowTag&) const = default;
};

// Temporal rows first (audio 0..T-1, visual 0..T-1), then the spatial block
// segment-major: for each t, the audio slot followed by M patches.
struct UnifiedSequence {
  Tensor tokens;  // [2T + T(M+1), C]
  std::vector<RowTag> provenance;
  std::size_t segments = 0;
  std::size_t patches = 0;

  std::size_t length() const { return tokens.dim(0); }
  static std::size_t expected_length(std::size_t t, std::size_t m) {
    return 2 * t + t * (m + 1);
  }
};

struct PromptWeights {
  Tensor temporal;  // [2T]
  Tensor spatial;   // [T, M+1]
};

struct TPGLParams {
  Affine temporal_audio;  // C -> C, followed by ReLU
  Affine temporal_visual;
  Affine spatial_audio;
  Affine spatial_patch;
};

TPGLParams make_tpgl_params(ParamStore& store, Rng& rng, std::size_t dim, TaskSet users);

// [2T, C]: projected-ReLU audio rows, then projected-ReLU visual rows.
Tensor build_tpm_sequence(const TPGLParams& params, const Tensor& audio,
                          const Tensor& visual);
// [T, M+1, C]: slot 0 per segment is projected-ReLU audio, slots 1..M patches.
Tensor build_spm_sequence(const TPGLParams& params, const Tensor& audio,
                          const Tensor& patches);

// Prompt-as-query softmax similarities: over the 2T temporal rows, and over
// the M+1 slots of each segment. prompt [1, C]; scaled by 1/sqrt(scale_dim).
PromptWeights prompt_weights(const Tensor& prompt, const Tensor& tpm_sequence,
                             const Tensor& spm_sequence, std::size_t scale_dim);
PromptWeights uniform_prompt_weights(std::size_t segments, std::size_t patches);

// Row-wise scaling by the prompt weights.
std::pair<Tensor, Tensor> reweight(const Tensor& tpm_sequence, const Tensor& spm_sequence,
                                   const PromptWeights& weights);

UnifiedSequence serialize(const Tensor& tpm_weighted, const Tensor& spm_weighted);
// Inverse of serialize: ([2T, C], [T, M+1, C]).
std::pair<Tensor, Tensor> deserialize(const UnifiedSequence& seq);

}  // namespace avu
