#pragma once

#include <functional>
#include <vector>

#include "avu/attention.hpp"
#include "avu/tpgl.hpp"
#include "avu/vocab.hpp"

namespace avu {

struct DecoderConfig {
  std::size_t dim = 64;
  std::size_t heads = 1;
  std::size_t ffn_dim = 128;
  std::size_t max_length = 160;  // rows of the position table
  std::size_t segments = 10;
  std::size_t patches = 16;
  bool layer_norm = true;
};

// One causal decoder block: self-attention over the prefix, cross-attention
// to the unified sequence, feed-forward, vocabulary projection.
struct DecoderParams {
  DecoderConfig config;
  Tensor token_emb;     // [V, C]
  Tensor pos_emb;       // [max_length, C]
  Tensor seg_emb;       // [T + 1, C]; row T is "no segment"
  Tensor mem_kind_emb;  // [4, C]
  Tensor mem_seg_emb;   // [T, C]
  Tensor mem_slot_emb;  // [M + 1, C]
  Tensor mem_focus;     // [1, C], scaled per patch row by its localisation weight
  Tensor where_emb;     // [M, C]
  AttentionSite self_site;
  AttentionSite cross_site;
  LayerNormParams ln_self;
  LayerNormParams ln_cross;
  LayerNormParams ln_ffn;
  Affine ffn_in;
  Affine ffn_out;
  Affine out;  // C -> V
};

DecoderParams make_decoder_params(ParamStore& store, Rng& rng, const DecoderConfig& config,
                                  std::size_t vocab_size, TaskSet users);

// Decoder memory: unified rows rescaled so uniform prompt weights give unit
// gain, plus row-kind, segment and slot embeddings taken from provenance.
// `focus` [T, M], when given, adds focus[t, m] * mem_focus to patch row (t, m).
Tensor memory_with_provenance(const DecoderParams& params, const UnifiedSequence& seq,
                              const Tensor* focus = nullptr);

// Segment-averaged localisation weights [T, M] as one row [1, C] over where_emb.
Tensor focus_summary(const DecoderParams& params, const Tensor& focus);

// Teacher-forced logits [N, V] for every prefix position. `segments[i]` is
// the segment the token after position i belongs to (T for none). A
// `context` row [1, C], when given, is added to every input position.
Tensor decoder_logits(const DecoderParams& params, const Tensor& memory,
                      std::span<const int> prefix, std::span<const int> segments,
                      const Tensor* context = nullptr);

// Logits [V] for the token following `prefix`. Throws ContractError on an
// empty prefix or one that does not start with BOS.
Tensor token_decoder_step(const DecoderParams& params, const Tensor& memory,
                          std::span<const int> prefix, std::span<const int> segments,
                          int bos_id, const Tensor* context = nullptr);

// Per-position grammar information for a gold program: the segment of each
// next token and the additive mask (0 allowed, -inf otherwise), [N-1, V].
struct TeacherPlan {
  std::vector<int> inputs;    // program without its last token
  std::vector<int> targets;   // program without its first token
  std::vector<int> segments;  // per input position
  Tensor mask;                // [N-1, V]
};
TeacherPlan teacher_plan(const TokenProgram& program, const TokenVocab& vocab,
                         std::size_t segments);

// Next-token scores for a prefix; `segments` as in decoder_logits.
using LogitFn = std::function<std::vector<double>(const std::vector<int>& prefix,
                                                  const std::vector<int>& segments)>;

// Greedy decoding under the task grammar. Ungrammatical tokens are excluded;
// NaN scores count as -inf, and when no allowed token has a finite score the
// first allowed token is taken, so the result always parses.
TokenProgram greedy_decode(const TokenVocab& vocab, Task task, std::size_t segments,
                           const LogitFn& logits);

}  // namespace avu
