#include "avu/tpgl.hpp"

#include <cmath>

#include "avu/errors.hpp"
#include "avu/ops.hpp"

namespace avu {

TPGLParams make_tpgl_params(ParamStore& store, Rng& rng, std::size_t dim, TaskSet users) {
  return {make_affine(store, rng, "tpgl.tpm_a", dim, dim, users),
          make_affine(store, rng, "tpgl.tpm_v", dim, dim, users),
          make_affine(store, rng, "tpgl.spm_a", dim, dim, users),
          make_affine(store, rng, "tpgl.spm_p", dim, dim, users)};
}

Tensor build_tpm_sequence(const TPGLParams& params, const Tensor& audio,
                          const Tensor& visual) {
  if (audio.rank() != 2 || audio.shape() != visual.shape()) {
    throw ShapeError("build_tpm_sequence: audio " + shape_str(audio.shape()) +
                     " vs visual " + shape_str(visual.shape()));
  }
  return ops::concat({ops::relu(params.temporal_audio(audio)),
                      ops::relu(params.temporal_visual(visual))},
                     0);
}

Tensor build_spm_sequence(const TPGLParams& params, const Tensor& audio,
                          const Tensor& patches) {
  if (audio.rank() != 2 || patches.rank() != 3 || audio.dim(0) != patches.dim(0) ||
      audio.dim(1) != patches.dim(2)) {
    throw ShapeError("build_spm_sequence: audio " + shape_str(audio.shape()) +
                     " vs patches " + shape_str(patches.shape()));
  }
  const std::size_t t = audio.dim(0);
  const std::size_t c = audio.dim(1);
  Tensor a = ops::reshape(ops::relu(params.spatial_audio(audio)), {t, 1, c});
  return ops::concat({a, ops::relu(params.spatial_patch(patches))}, 1);
}

PromptWeights prompt_weights(const Tensor& prompt, const Tensor& tpm_sequence,
                             const Tensor& spm_sequence, std::size_t scale_dim) {
  if (prompt.rank() != 2 || prompt.dim(0) != 1 || tpm_sequence.rank() != 2 ||
      spm_sequence.rank() != 3 || prompt.dim(1) != tpm_sequence.dim(1) ||
      prompt.dim(1) != spm_sequence.dim(2)) {
    throw ShapeError("prompt_weights: prompt " + shape_str(prompt.shape()) + ", temporal " +
                     shape_str(tpm_sequence.shape()) + ", spatial " +
                     shape_str(spm_sequence.shape()));
  }
  const double inv = 1.0 / std::sqrt(static_cast<double>(scale_dim));
  const std::size_t rows = tpm_sequence.dim(0);
  const std::size_t t = spm_sequence.dim(0);
  const std::size_t slots = spm_sequence.dim(1);
  Tensor lt = ops::scale(ops::matmul(prompt, ops::transpose(tpm_sequence)), inv);
  Tensor wt = ops::reshape(ops::softmax_lastdim(lt), {rows});
  Tensor ls = ops::matmul(spm_sequence, ops::transpose(prompt));  // [T, M+1, 1]
  ls = ops::scale(ops::reshape(ls, {t, slots}), inv);
  return {wt, ops::softmax_lastdim(ls)};
}

PromptWeights uniform_prompt_weights(std::size_t segments, std::size_t patches) {
  return {Tensor::full({2 * segments}, 1.0 / static_cast<double>(2 * segments)),
          Tensor::full({segments, patches + 1}, 1.0 / static_cast<double>(patches + 1))};
}

std::pair<Tensor, Tensor> reweight(const Tensor& tpm_sequence, const Tensor& spm_sequence,
                                   const PromptWeights& weights) {
  if (weights.temporal.numel() != tpm_sequence.dim(0) ||
      weights.spatial.numel() != spm_sequence.dim(0) * spm_sequence.dim(1)) {
    throw ShapeError("reweight: weights " + shape_str(weights.temporal.shape()) + "/" +
                     shape_str(weights.spatial.shape()) + " vs sequences " +
                     shape_str(tpm_sequence.shape()) + "/" +
                     shape_str(spm_sequence.shape()));
  }
  Tensor wt = ops::reshape(weights.temporal, {tpm_sequence.dim(0), 1});
  Tensor ws = ops::reshape(weights.spatial, {spm_sequence.dim(0), spm_sequence.dim(1), 1});
  return {ops::mul(wt, tpm_sequence), ops::mul(ws, spm_sequence)};
}

UnifiedSequence serialize(const Tensor& tpm_weighted, const Tensor& spm_weighted) {
  if (tpm_weighted.rank() != 2 || spm_weighted.rank() != 3 ||
      tpm_weighted.dim(0) != 2 * spm_weighted.dim(0) ||
      tpm_weighted.dim(1) != spm_weighted.dim(2)) {
    throw ShapeError("serialize: temporal " + shape_str(tpm_weighted.shape()) +
                     " vs spatial " + shape_str(spm_weighted.shape()));
  }
  const std::size_t t = spm_weighted.dim(0);
  const std::size_t slots = spm_weighted.dim(1);
  const std::size_t c = spm_weighted.dim(2);
  UnifiedSequence seq;
  seq.segments = t;
  seq.patches = slots - 1;
  seq.tokens = ops::concat({tpm_weighted, ops::reshape(spm_weighted, {t * slots, c})}, 0);
  seq.provenance.reserve(seq.tokens.dim(0));
  for (std::size_t i = 0; i < t; ++i) seq.provenance.push_back({RowKind::kTemporalAudio, i, 0});
  for (std::size_t i = 0; i < t; ++i) seq.provenance.push_back({RowKind::kTemporalVisual, i, 0});
  for (std::size_t i = 0; i < t; ++i) {
    seq.provenance.push_back({RowKind::kSpatialAudio, i, 0});
    for (std::size_t m = 0; m < seq.patches; ++m)
      seq.provenance.push_back({RowKind::kSpatialPatch, i, m});
  }
  return seq;
}

std::pair<Tensor, Tensor> deserialize(const UnifiedSequence& seq) {
  const std::size_t t = seq.segments;
  const std::size_t slots = seq.patches + 1;
  const std::size_t c = seq.tokens.dim(1);
  Tensor temporal = ops::slice(seq.tokens, 0, 0, 2 * t);
  Tensor spatial = ops::reshape(ops::slice(seq.tokens, 0, 2 * t, seq.length()), {t, slots, c});
  return {temporal, spatial};
}

}  // namespace avu
