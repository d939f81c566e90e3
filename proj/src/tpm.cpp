#include "avu/tpm.hpp"

#include <limits>

#include "avu/errors.hpp"
#include "avu/ops.hpp"

namespace avu {

std::vector<std::size_t> TPMConfig::scales() const {
  std::vector<std::size_t> s;
  for (std::size_t i = 2; i <= max_window; i += 2) s.push_back(i);
  return s;
}

void TPMConfig::validate() const {
  if (max_window < 2 || max_window % 2 != 0) {
    throw ConfigError("tpm: max window must be even and >= 2, got " +
                      std::to_string(max_window));
  }
  if (dim == 0 || heads == 0 || dim % heads != 0) {
    throw ConfigError("tpm: heads must divide a positive channel dim");
  }
}

TPMParams make_tpm_params(ParamStore& store, Rng& rng, const TPMConfig& config,
                          TaskSet users) {
  config.validate();
  TPMParams p;
  std::vector<std::string> tags;
  if (config.include_global) tags.push_back("global");
  for (auto s : config.scales()) tags.push_back("w" + std::to_string(s));
  const std::size_t c = config.dim;
  for (const auto& tag : tags) {
    const std::string base = "tpm." + tag;
    HanSites h;
    h.audio_self = make_attention_site(store, rng, base + ".a_sa", c, config.heads, users);
    h.audio_cross = make_attention_site(store, rng, base + ".a_ca", c, config.heads, users);
    h.visual_self = make_attention_site(store, rng, base + ".v_sa", c, config.heads, users);
    h.visual_cross = make_attention_site(store, rng, base + ".v_ca", c, config.heads, users);
    p.stages.push_back(std::move(h));
  }
  const std::size_t width = tags.size() * c;
  p.out_audio = make_affine(store, rng, "tpm.out_a", width, c, users);
  p.out_visual = make_affine(store, rng, "tpm.out_v", width, c, users);
  return p;
}

std::vector<std::size_t> window_indices(std::size_t t, std::size_t size,
                                        std::size_t length) {
  const std::size_t half = size / 2;
  const std::size_t lo = t >= half ? t - half : 0;
  const std::size_t hi = std::min(length - 1, t + half);
  std::vector<std::size_t> out;
  for (std::size_t i = lo; i <= hi; ++i) out.push_back(i);
  return out;
}

Tensor window_mask(std::size_t length, std::size_t size) {
  std::vector<double> m(length * length, 0.0);
  if (size > 0) {
    const double ninf = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < length; ++t) {
      for (std::size_t j = 0; j < length; ++j) m[t * length + j] = ninf;
      for (auto j : window_indices(t, size, length)) m[t * length + j] = 0.0;
    }
  }
  return Tensor::from({length, length}, std::move(m));
}

std::pair<Tensor, Tensor> han_scale_block(const Tensor& audio, const Tensor& visual,
                                          std::size_t size, const HanSites& sites) {
  if (audio.rank() != 2 || audio.shape() != visual.shape()) {
    throw ShapeError("han_scale_block: audio " + shape_str(audio.shape()) +
                     " vs visual " + shape_str(visual.shape()));
  }
  const Tensor mask = window_mask(audio.dim(0), size);
  const Tensor* m = size > 0 ? &mask : nullptr;
  Tensor a = ops::add(self_attend(sites.audio_self, audio, audio, m).out,
                      cross_attend(sites.audio_cross, audio, visual, m).out);
  Tensor v = ops::add(self_attend(sites.visual_self, visual, visual, m).out,
                      cross_attend(sites.visual_cross, visual, audio, m).out);
  return {a, v};
}

TemporalStreams multiscale_aggregate(const std::vector<Tensor>& audio_stages,
                                     const std::vector<Tensor>& visual_stages,
                                     const TPMParams& params, const TPMConfig& config) {
  const std::size_t expected = config.stage_count();
  if (audio_stages.size() != expected || visual_stages.size() != expected) {
    throw ContractError("multiscale_aggregate: expected " + std::to_string(expected) +
                        " stages, got " + std::to_string(audio_stages.size()) + "/" +
                        std::to_string(visual_stages.size()));
  }
  Tensor a = audio_stages.size() == 1 ? audio_stages[0] : ops::concat(audio_stages, 1);
  Tensor v = visual_stages.size() == 1 ? visual_stages[0] : ops::concat(visual_stages, 1);
  return {params.out_audio(a), params.out_visual(v)};
}

TemporalStreams tpm_forward(const TPMParams& params, const TPMConfig& config,
                            const Tensor& audio, const Tensor& visual) {
  std::vector<std::size_t> sizes;
  if (config.include_global) sizes.push_back(0);
  for (auto s : config.scales()) sizes.push_back(s);
  if (sizes.size() != params.stages.size()) {
    throw ContractError("tpm_forward: parameter stages do not match config");
  }
  std::vector<Tensor> as;
  std::vector<Tensor> vs;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    auto [a, v] = han_scale_block(audio, visual, sizes[i], params.stages[i]);
    as.push_back(a);
    vs.push_back(v);
  }
  return multiscale_aggregate(as, vs, params, config);
}

}  // namespace avu
