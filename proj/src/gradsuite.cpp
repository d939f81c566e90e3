#include "avu/gradsuite.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "avu/attention.hpp"
#include "avu/decoder.hpp"
#include "avu/mask_decoder.hpp"
#include "avu/ops.hpp"
#include "avu/rng.hpp"
#include "avu/spm.hpp"
#include "avu/tpgl.hpp"
#include "avu/tpm.hpp"
#include "avu/vocab.hpp"

namespace avu {

namespace {

using LossFn = std::function<Tensor()>;

struct Probe {
  const GradSuiteConfig& cfg;
  GradCompare total;

  void check(const LossFn& fn, std::vector<Tensor> wrt) {
    total.merge(check_gradients(fn, std::move(wrt), cfg.eps, cfg.rel_tol, cfg.abs_tol));
  }
};

// Generic scalar readout so every output element gets a distinct weight.
Tensor readout(const Tensor& out, const Tensor& weights) {
  return ops::sum(ops::mul(out, weights));
}

Tensor leaf(Rng& rng, Shape shape, double sd = 1.0) { return randn(rng, std::move(shape), sd, true); }

void primitives(Probe& p, Rng& rng) {
  const Tensor a = leaf(rng, {3, 4});
  const Tensor b = leaf(rng, {4, 5});
  const Tensor bias = leaf(rng, {5});
  const Tensor batched = leaf(rng, {2, 3, 4});
  const Tensor batched_rhs = leaf(rng, {2, 4, 2});
  const Tensor r35 = randn(rng, {3, 5});
  const Tensor r232 = randn(rng, {2, 3, 2});
  p.check([&] { return readout(ops::linear(a, b, bias), r35); }, {a, b, bias});
  p.check([&] { return readout(ops::matmul(batched, batched_rhs), r232); }, {batched, batched_rhs});

  const Tensor x = leaf(rng, {3, 5});
  const Tensor y = leaf(rng, {1, 5});
  p.check([&] { return readout(ops::mul(ops::sub(x, y), ops::add(x, y)), r35); }, {x, y});
  p.check([&] { return readout(ops::softmax_lastdim(ops::scale(x, 1.7)), r35); }, {x});
  p.check([&] { return readout(ops::sigmoid(x), r35); }, {x});
  p.check([&] { return readout(ops::relu(x), r35); }, {x});
  p.check([&] {
    Tensor t = ops::transpose(ops::reshape(x, {5, 3}));
    Tensor c = ops::concat({ops::slice(t, 1, 1, 4), t}, 1);
    return ops::sum(ops::mean_axis(ops::mul(c, c), 0));
  }, {x});

  const Tensor gamma = leaf(rng, {5});
  const Tensor beta = leaf(rng, {5});
  p.check([&] { return readout(ops::layer_norm(x, gamma, beta), r35); }, {x, gamma, beta});

  const Tensor logits = leaf(rng, {4, 6});
  const std::vector<int> targets = {0, 5, 2, 2};
  p.check([&] { return ops::cross_entropy(logits, targets); }, {logits});
  std::vector<double> bits(24);
  for (auto& v : bits) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
  p.check([&] { return ops::binary_cross_entropy(logits, bits); }, {logits});

  const Tensor table = leaf(rng, {4, 3});
  const std::vector<int> ids = {3, 0, 3};
  const Tensor r33 = randn(rng, {3, 3});
  p.check([&] { return readout(ops::embed_lookup(table, ids), r33); }, {table});

  const Tensor img = leaf(rng, {2, 2, 3, 3});
  const Tensor kernel = leaf(rng, {3, 2, 3, 3});
  const Tensor kbias = leaf(rng, {3});
  const Tensor rimg = randn(rng, {2, 3, 6, 6});
  p.check([&] { return readout(ops::upsample_nearest2x(ops::conv2d(img, kernel, kbias)), rimg); },
          {img, kernel, kbias});
}

void attend_module(Probe& p, Rng& rng) {
  const std::size_t c = p.cfg.dim;
  ParamStore store;
  const AttentionSite site = make_attention_site(store, rng, "site", c, p.cfg.heads, all_tasks());
  const Tensor q = leaf(rng, {2, 3, c});
  const Tensor ctx = leaf(rng, {2, 5, c});
  const Tensor shared = leaf(rng, {4, c});
  Tensor mask = Tensor::zeros({3, 5});
  mask.mutable_data()[1] = -std::numeric_limits<double>::infinity();
  const Tensor r = randn(rng, {2, 3, c});
  std::vector<Tensor> wrt = store.tensors();
  wrt.push_back(q);
  wrt.push_back(ctx);
  p.check([&] { return readout(attend(site, q, ctx, &mask).out, r); }, wrt);
  const Tensor rw = randn(rng, {2, 3, 4});
  p.check([&] { return readout(attend(site, q, shared).weights, rw); }, {shared});
}

void tpm_module(Probe& p, Rng& rng) {
  TPMConfig tc;
  tc.dim = p.cfg.dim;
  tc.heads = p.cfg.heads;
  tc.max_window = 4;
  ParamStore store;
  const TPMParams params = make_tpm_params(store, rng, tc, all_tasks());
  const std::size_t t = p.cfg.segments;
  const Tensor audio = leaf(rng, {t, tc.dim});
  const Tensor visual = leaf(rng, {t, tc.dim});
  const Tensor ra = randn(rng, {t, tc.dim});
  const Tensor rv = randn(rng, {t, tc.dim});
  std::vector<Tensor> wrt = store.tensors();
  wrt.push_back(audio);
  wrt.push_back(visual);
  p.check([&] {
    const TemporalStreams s = tpm_forward(params, tc, audio, visual);
    return ops::add(readout(s.audio, ra), readout(s.visual, rv));
  }, wrt);
}

void spm_module(Probe& p, Rng& rng) {
  const std::size_t c = p.cfg.dim, t = p.cfg.segments, m = p.cfg.grid * p.cfg.grid;
  ParamStore store;
  const SPMParams params = make_spm_params(store, rng, c, p.cfg.heads, all_tasks());
  const Tensor audio = leaf(rng, {t, c});
  const Tensor patches = leaf(rng, {t, m, c});
  const Tensor ra = randn(rng, {t, c});
  const Tensor rp = randn(rng, {t, m, c});
  const Tensor rw = randn(rng, {t, m});
  std::vector<Tensor> wrt = store.tensors();
  wrt.push_back(audio);
  wrt.push_back(patches);
  p.check([&] {
    const SpatialStreams s = spm_forward(params, audio, ops::reshape(audio, {t, 1, c}), patches);
    return ops::add(ops::add(readout(s.audio, ra), readout(s.patches, rp)),
                    readout(s.guide_weights, rw));
  }, wrt);
}

void tpgl_module(Probe& p, Rng& rng) {
  const std::size_t c = p.cfg.dim, t = p.cfg.segments, m = p.cfg.grid * p.cfg.grid;
  ParamStore store;
  const TPGLParams params = make_tpgl_params(store, rng, c, all_tasks());
  const Tensor prompt = leaf(rng, {1, c});
  const Tensor audio = leaf(rng, {t, c});
  const Tensor visual = leaf(rng, {t, c});
  const Tensor sa = leaf(rng, {t, c});
  const Tensor patches = leaf(rng, {t, m, c});
  const Tensor r = randn(rng, {UnifiedSequence::expected_length(t, m), c});
  std::vector<Tensor> wrt = store.tensors();
  for (const Tensor& x : {prompt, audio, visual, sa, patches}) wrt.push_back(x);
  p.check([&] {
    const Tensor ts = build_tpm_sequence(params, audio, visual);
    const Tensor ss = build_spm_sequence(params, sa, patches);
    auto [tw, sw] = reweight(ts, ss, prompt_weights(prompt, ts, ss, c));
    return readout(serialize(tw, sw).tokens, r);
  }, wrt);
}

// Leaves of a unified sequence; serialize inside the loss so perturbations reach it.
struct UnifiedLeaves {
  Tensor temporal;
  Tensor spatial;
  UnifiedSequence build() const { return serialize(temporal, spatial); }
};

UnifiedLeaves random_unified(Rng& rng, std::size_t t, std::size_t m, std::size_t c,
                             std::vector<Tensor>& leaves) {
  // Real rows are prompt-weighted (weights sum to one), hence the small scale.
  UnifiedLeaves u{leaf(rng, {2 * t, c}, 1.0 / static_cast<double>(2 * t)),
                  leaf(rng, {t, m + 1, c}, 1.0 / static_cast<double>(m + 1))};
  leaves.push_back(u.temporal);
  leaves.push_back(u.spatial);
  return u;
}

void token_decoder_module(Probe& p, Rng& rng) {
  const std::size_t c = p.cfg.dim, t = p.cfg.segments, m = p.cfg.grid * p.cfg.grid;
  const TokenVocab vocab(p.cfg.num_classes, m, 8);
  DecoderConfig dc;
  dc.dim = c;
  dc.heads = p.cfg.heads;
  dc.ffn_dim = 2 * c;
  dc.segments = t;
  dc.patches = m;
  dc.max_length = GrammarCursor::max_length(Task::kAVVP, t, p.cfg.num_classes);
  ParamStore store;
  const DecoderParams params = make_decoder_params(store, rng, dc, vocab.size(), all_tasks());
  std::vector<Tensor> wrt = store.tensors();
  const UnifiedLeaves seq = random_unified(rng, t, m, c, wrt);
  const Tensor context = leaf(rng, {1, c});
  const Tensor focus = leaf(rng, {t, m});
  wrt.push_back(context);
  wrt.push_back(focus);

  LabelBlock labels;
  AvvpLabels avvp;
  avvp.num_classes = static_cast<std::uint16_t>(p.cfg.num_classes);
  for (std::size_t i = 0; i < t * p.cfg.num_classes; ++i) {
    avvp.audio.push_back(rng.bernoulli(0.4) ? 1 : 0);
    avvp.visual.push_back(rng.bernoulli(0.4) ? 1 : 0);
  }
  labels.payload = avvp;
  const TeacherPlan plan = teacher_plan(encode_labels(labels, Task::kAVVP, vocab, t), vocab, t);
  p.check([&] {
    const Tensor memory = memory_with_provenance(params, seq.build(), &focus);
    const Tensor summed = ops::add(context, focus_summary(params, focus));
    return ops::cross_entropy(ops::add(decoder_logits(params, memory, plan.inputs, plan.segments,
                                                      &summed),
                                       plan.mask),
                              plan.targets);
  }, wrt);
}

void mask_decoder_module(Probe& p, Rng& rng) {
  const std::size_t c = p.cfg.dim, t = 2, m = p.cfg.grid * p.cfg.grid;
  MaskDecoderConfig mc;
  mc.dim = c;
  mc.grid = p.cfg.grid;
  mc.height = mc.width = p.cfg.mask_size;
  mc.channels = {4, 3};
  ParamStore store;
  const MaskDecoderParams params = make_mask_decoder_params(store, rng, mc, all_tasks());
  std::vector<Tensor> wrt = store.tensors();
  const std::vector<std::vector<double>> initial = [&] {
    std::vector<std::vector<double>> v;
    for (const Tensor& w : wrt) v.emplace_back(w.data().begin(), w.data().end());
    return v;
  }();
  const UnifiedLeaves seq = random_unified(rng, t, m, c, wrt);
  // Finite differences are meaningless across a ReLU kink (zero biases start
  // some units exactly on it), so jitter the parameters until every ReLU
  // input clears the margin.
  const double margin = 1e-3;
  for (int attempt = 0; attempt < 100; ++attempt) {
    for (std::size_t i = 0; i < initial.size(); ++i) {
      auto d = wrt[i].mutable_data();
      for (std::size_t j = 0; j < d.size(); ++j) d[j] = initial[i][j] + rng.normal(0.0, 0.1);
    }
    std::vector<Tensor> pre;
    {
      NoGradGuard no_grad;
      avs_mask_decode(params, seq.build(), &pre);
    }
    double closest = std::numeric_limits<double>::infinity();
    for (const Tensor& z : pre)
      for (double v : z.data()) closest = std::min(closest, std::abs(v));
    if (closest >= margin) break;
  }
  std::vector<double> target(t * mc.height * mc.width);
  for (auto& v : target) v = rng.bernoulli(0.3) ? 1.0 : 0.0;
  p.check([&] { return ops::binary_cross_entropy(avs_mask_decode(params, seq.build()), target); }, wrt);
}

}  // namespace

const std::vector<std::string>& gradient_suite_modules() {
  static const std::vector<std::string> names = {
      "primitives", "attend", "tpm", "spm", "tpgl", "token_decoder", "mask_decoder"};
  return names;
}

std::vector<ModuleGradResult> gradient_suite(std::uint64_t seed, const GradSuiteConfig& config) {
  using Runner = void (*)(Probe&, Rng&);
  const Runner runners[] = {primitives, attend_module, tpm_module, spm_module,
                            tpgl_module, token_decoder_module, mask_decoder_module};
  std::vector<ModuleGradResult> out;
  const auto& names = gradient_suite_modules();
  for (std::size_t i = 0; i < names.size(); ++i) {
    Rng rng(seed * 1000003u + i);
    Probe probe{config, {}};
    runners[i](probe, rng);
    out.push_back({names[i], probe.total, probe.total.passed(config.min_fraction)});
  }
  return out;
}

}  // namespace avu
