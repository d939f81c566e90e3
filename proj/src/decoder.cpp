#include "avu/decoder.hpp"

#include <cmath>
#include <limits>

#include "avu/errors.hpp"
#include "avu/ops.hpp"

namespace avu {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Tensor embedding(ParamStore& store, Rng& rng, const std::string& name, std::size_t rows,
                 std::size_t dim, TaskSet users) {
  const double sd = 1.0 / std::sqrt(static_cast<double>(dim));
  std::vector<double> v(rows * dim);
  for (auto& x : v) x = rng.normal(0.0, sd);
  return store.add(name, {rows, dim}, std::move(v), users);
}

Tensor causal_mask(std::size_t n) {
  std::vector<double> m(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) m[i * n + j] = kNegInf;
  return Tensor::from({n, n}, std::move(m));
}

Tensor maybe_norm(const DecoderParams& p, const LayerNormParams& ln, const Tensor& x) {
  return p.config.layer_norm ? ln(x) : x;
}

}  // namespace

DecoderParams make_decoder_params(ParamStore& store, Rng& rng, const DecoderConfig& config,
                                  std::size_t vocab_size, TaskSet users) {
  if (config.dim == 0 || config.max_length == 0 || config.segments == 0) {
    throw ConfigError("decoder: dim, max_length and segments must be positive");
  }
  const std::size_t c = config.dim;
  DecoderParams p;
  p.config = config;
  p.token_emb = embedding(store, rng, "dec.token_emb", vocab_size, c, users);
  p.pos_emb = embedding(store, rng, "dec.pos_emb", config.max_length, c, users);
  p.seg_emb = embedding(store, rng, "dec.seg_emb", config.segments + 1, c, users);
  p.mem_kind_emb = embedding(store, rng, "dec.mem_kind_emb", 4, c, users);
  p.mem_seg_emb = embedding(store, rng, "dec.mem_seg_emb", config.segments, c, users);
  p.mem_slot_emb = embedding(store, rng, "dec.mem_slot_emb", config.patches + 1, c, users);
  p.self_site = make_attention_site(store, rng, "dec.self", c, config.heads, users);
  p.cross_site = make_attention_site(store, rng, "dec.cross", c, config.heads, users);
  p.ln_self = make_layer_norm(store, "dec.ln_self", c, users);
  p.ln_cross = make_layer_norm(store, "dec.ln_cross", c, users);
  p.ln_ffn = make_layer_norm(store, "dec.ln_ffn", c, users);
  p.ffn_in = make_affine(store, rng, "dec.ffn_in", c, config.ffn_dim, users);
  p.ffn_out = make_affine(store, rng, "dec.ffn_out", config.ffn_dim, c, users);
  p.out = make_affine(store, rng, "dec.out", c, vocab_size, users);
  p.mem_focus = embedding(store, rng, "dec.mem_focus", 1, c, users);
  p.where_emb = embedding(store, rng, "dec.where_emb", config.patches, c, users);
  return p;
}

Tensor memory_with_provenance(const DecoderParams& params, const UnifiedSequence& seq,
                              const Tensor* focus) {
  const std::size_t l = seq.length();
  if (seq.provenance.size() != l || seq.segments != params.config.segments ||
      seq.patches != params.config.patches) {
    throw ShapeError("memory_with_provenance: sequence of " + std::to_string(l) +
                     " rows (T=" + std::to_string(seq.segments) +
                     ", M=" + std::to_string(seq.patches) + ") does not match decoder T=" +
                     std::to_string(params.config.segments) +
                     ", M=" + std::to_string(params.config.patches));
  }
  std::vector<int> kind(l), segment(l), slot(l);
  std::vector<double> gain(l);
  const double temporal_gain = 2.0 * static_cast<double>(seq.segments);
  const double spatial_gain = static_cast<double>(seq.patches + 1);
  for (std::size_t i = 0; i < l; ++i) {
    const RowTag& tag = seq.provenance[i];
    kind[i] = static_cast<int>(tag.kind);
    segment[i] = static_cast<int>(tag.segment);
    slot[i] = tag.kind == RowKind::kSpatialPatch ? static_cast<int>(tag.patch) + 1 : 0;
    const bool temporal =
        tag.kind == RowKind::kTemporalAudio || tag.kind == RowKind::kTemporalVisual;
    gain[i] = temporal ? temporal_gain : spatial_gain;
  }
  Tensor rows = ops::mul(seq.tokens, Tensor::from({l, 1}, std::move(gain)));
  Tensor tags = ops::add(ops::embed_lookup(params.mem_kind_emb, kind),
                         ops::embed_lookup(params.mem_seg_emb, segment));
  tags = ops::add(tags, ops::embed_lookup(params.mem_slot_emb, slot));
  Tensor memory = ops::add(rows, tags);
  if (!focus) return memory;
  const std::size_t t = seq.segments, m = seq.patches;
  if (focus->shape() != Shape{t, m})
    throw ShapeError("memory_with_provenance: focus " + shape_str(focus->shape()) + " for T=" +
                     std::to_string(t) + ", M=" + std::to_string(m));
  // Row order is 2T temporal rows, then per segment one audio row and M patches.
  Tensor per_slot = ops::concat({Tensor::zeros({t, 1}), *focus}, 1);
  Tensor column = ops::concat({Tensor::zeros({2 * t, 1}), ops::reshape(per_slot, {t * (m + 1), 1})}, 0);
  return ops::add(memory, ops::mul(column, params.mem_focus));
}

Tensor focus_summary(const DecoderParams& params, const Tensor& focus) {
  if (focus.rank() != 2 || focus.dim(1) != params.where_emb.dim(0))
    throw ShapeError("focus_summary: focus " + shape_str(focus.shape()) + " for M=" +
                     std::to_string(params.where_emb.dim(0)));
  return ops::matmul(ops::reshape(ops::mean_axis(focus, 0), {1, focus.dim(1)}), params.where_emb);
}

Tensor decoder_logits(const DecoderParams& params, const Tensor& memory,
                      std::span<const int> prefix, std::span<const int> segments,
                      const Tensor* context) {
  const std::size_t n = prefix.size();
  if (n == 0) throw ContractError("decoder: empty prefix");
  if (segments.size() != n) {
    throw ContractError("decoder: " + std::to_string(segments.size()) +
                        " segment tags for a prefix of " + std::to_string(n));
  }
  if (n > params.config.max_length) {
    throw ContractError("decoder: prefix of " + std::to_string(n) +
                        " exceeds the position table of " +
                        std::to_string(params.config.max_length));
  }
  std::vector<int> pos(n);
  for (std::size_t i = 0; i < n; ++i) pos[i] = static_cast<int>(i);
  Tensor x = ops::add(ops::embed_lookup(params.token_emb, prefix),
                      ops::embed_lookup(params.pos_emb, pos));
  x = ops::add(x, ops::embed_lookup(params.seg_emb, segments));
  if (context) {
    if (context->rank() != 2 || context->dim(0) != 1 || context->dim(1) != x.dim(1))
      throw ShapeError("decoder: context must be [1, " + std::to_string(x.dim(1)) + "]");
    x = ops::add(x, *context);
  }

  const Tensor causal = causal_mask(n);
  Tensor h = maybe_norm(params, params.ln_self, x);
  x = ops::add(x, self_attend(params.self_site, h, h, &causal).out);
  h = maybe_norm(params, params.ln_cross, x);
  x = ops::add(x, cross_attend(params.cross_site, h, memory).out);
  h = maybe_norm(params, params.ln_ffn, x);
  x = ops::add(x, params.ffn_out(ops::relu(params.ffn_in(h))));
  return params.out(x);
}

Tensor token_decoder_step(const DecoderParams& params, const Tensor& memory,
                          std::span<const int> prefix, std::span<const int> segments,
                          int bos_id, const Tensor* context) {
  if (prefix.empty()) throw ContractError("token_decoder_step: empty prefix");
  if (prefix.front() != bos_id) throw ContractError("token_decoder_step: prefix must start with BOS");
  Tensor logits = decoder_logits(params, memory, prefix, segments, context);
  const std::size_t n = prefix.size();
  const std::size_t v = logits.dim(1);
  return ops::reshape(ops::slice(logits, 0, n - 1, n), {v});
}

TeacherPlan teacher_plan(const TokenProgram& program, const TokenVocab& vocab,
                         std::size_t segments) {
  const auto& toks = program.tokens;
  if (toks.size() < 2) throw ContractError("teacher_plan: program shorter than two tokens");
  GrammarCursor cursor(vocab, program.task, segments);
  TeacherPlan plan;
  const std::size_t n = toks.size() - 1;
  const std::size_t v = vocab.size();
  std::vector<double> mask(n * v, kNegInf);
  cursor.advance(toks[0]);
  for (std::size_t i = 0; i < n; ++i) {
    plan.inputs.push_back(toks[i]);
    plan.targets.push_back(toks[i + 1]);
    plan.segments.push_back(static_cast<int>(cursor.segment()));
    for (int id : cursor.allowed()) mask[i * v + static_cast<std::size_t>(id)] = 0.0;
    cursor.advance(toks[i + 1]);
  }
  if (!cursor.finished()) throw ParseError("teacher_plan: program ends before EOS");
  plan.mask = Tensor::from({n, v}, std::move(mask));
  return plan;
}

TokenProgram greedy_decode(const TokenVocab& vocab, Task task, std::size_t segments,
                           const LogitFn& logits) {
  GrammarCursor cursor(vocab, task, segments);
  TokenProgram program;
  program.task = task;
  std::vector<int> segs;
  cursor.advance(vocab.bos());
  program.tokens.push_back(vocab.bos());
  segs.push_back(static_cast<int>(cursor.segment()));
  // The task token is forced by the grammar; skip the model call.
  cursor.advance(vocab.task(task));
  program.tokens.push_back(vocab.task(task));
  segs.push_back(static_cast<int>(cursor.segment()));
  while (!cursor.finished()) {
    const std::vector<int> allowed = cursor.allowed();
    int best = allowed.front();
    if (allowed.size() > 1) {
      const std::vector<double> scores = logits(program.tokens, segs);
      if (scores.size() != vocab.size()) {
        throw ContractError("greedy_decode: logit function returned " +
                            std::to_string(scores.size()) + " scores for a vocabulary of " +
                            std::to_string(vocab.size()));
      }
      double best_score = kNegInf;
      for (int id : allowed) {
        const double s = scores[static_cast<std::size_t>(id)];
        if (std::isfinite(s) && s > best_score) {
          best_score = s;
          best = id;
        }
      }
    }
    cursor.advance(best);
    program.tokens.push_back(best);
    if (!cursor.finished()) segs.push_back(static_cast<int>(cursor.segment()));
  }
  return program;
}

}  // namespace avu
