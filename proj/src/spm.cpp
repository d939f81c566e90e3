#include "avu/spm.hpp"

#include "avu/errors.hpp"
#include "avu/ops.hpp"

namespace avu {

SPMParams make_spm_params(ParamStore& store, Rng& rng, std::size_t dim, std::size_t heads,
                          TaskSet users) {
  return {make_attention_site(store, rng, "spm.patch_sa", dim, heads, users),
          make_attention_site(store, rng, "spm.a2p", dim, heads, users),
          make_attention_site(store, rng, "spm.p2a", dim, heads, users)};
}

Tensor patch_self_attention(const Tensor& patches, const AttentionSite& site) {
  if (patches.rank() < 2 || patches.dim(patches.rank() - 1) != site.dim()) {
    throw ShapeError("patch_self_attention: patches " + shape_str(patches.shape()) +
                     " vs site dim " + std::to_string(site.dim()));
  }
  return ops::add(patches, self_attend(site, patches, patches).out);
}

GuidedPatches audio_guided_patch_attention(const Tensor& patches,
                                           const Tensor& audio_context,
                                           const AttentionSite& site) {
  if (patches.rank() != 3 || audio_context.rank() != 3 ||
      patches.dim(0) != audio_context.dim(0) || patches.dim(2) != audio_context.dim(2)) {
    throw ShapeError("audio_guided_patch_attention: patches " +
                     shape_str(patches.shape()) + " vs audio " +
                     shape_str(audio_context.shape()));
  }
  Tensor branch = cross_attend(site, patches, audio_context).out;
  return {ops::add(patches, branch), branch};
}

GuidedAudio visual_guided_audio_attention(const Tensor& audio, const Tensor& patches,
                                          const AttentionSite& site) {
  if (audio.rank() != 2 || patches.rank() != 3 || audio.dim(0) != patches.dim(0) ||
      audio.dim(1) != patches.dim(2)) {
    throw ShapeError("visual_guided_audio_attention: audio " + shape_str(audio.shape()) +
                     " vs patches " + shape_str(patches.shape()));
  }
  const std::size_t t = audio.dim(0);
  const std::size_t c = audio.dim(1);
  const std::size_t m = patches.dim(1);
  Tensor q = ops::reshape(audio, {t, 1, c});
  AttendResult r = cross_attend(site, q, patches);
  return {ops::add(audio, ops::reshape(r.out, {t, c})), ops::reshape(r.weights, {t, m})};
}

SpatialStreams spm_forward(const SPMParams& params, const Tensor& temporal_audio,
                           const Tensor& audio_context, const Tensor& patches) {
  if (patches.rank() != 3 || temporal_audio.rank() != 2 ||
      temporal_audio.dim(0) != patches.dim(0)) {
    throw ShapeError("spm_forward: audio " + shape_str(temporal_audio.shape()) +
                     " vs patches " + shape_str(patches.shape()));
  }
  Tensor enhanced = patch_self_attention(patches, params.patch_self);
  GuidedPatches gp = audio_guided_patch_attention(enhanced, audio_context,
                                                  params.audio_to_patch);
  GuidedAudio ga = visual_guided_audio_attention(temporal_audio, enhanced,
                                                 params.patch_to_audio);
  return {ga.out, gp.out, ga.weights};
}

}  // namespace avu
