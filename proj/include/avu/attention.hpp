#pragma once

#include <string>

#include "avu/params.hpp"

namespace avu {

// One attention call site with its own query/key/value maps. Sites are never
// shared between call locations.
struct AttentionSite {
  Affine query;
  Affine key;
  Affine value;
  std::size_t heads = 1;

  std::size_t dim() const { return query.in_dim(); }
};

AttentionSite make_attention_site(ParamStore& store, Rng& rng, const std::string& name,
                                  std::size_t dim, std::size_t heads, TaskSet users);
AttentionSite identity_site(std::size_t dim);

struct AttendResult {
  Tensor out;      // rows of `query`, width C
  Tensor weights;  // [..., N, L]; averaged over heads when heads > 1
};

// softmax(q K^T / sqrt(d)) V with q, K, V the site projections of `query` and
// `context`. query [..., N, C]; context [..., L, C] with matching leading
// dims, or [L, C] shared by every query row. `mask` is added to the logits
// (use -inf to exclude a context row) and broadcasts against [..., N, L].
AttendResult attend(const AttentionSite& site, const Tensor& query,
                    const Tensor& context, const Tensor* mask = nullptr);

// Same-modality context.
AttendResult self_attend(const AttentionSite& site, const Tensor& token,
                         const Tensor& own_context, const Tensor* mask = nullptr);
// Context from the other modality.
AttendResult cross_attend(const AttentionSite& site, const Tensor& token,
                          const Tensor& other_context, const Tensor* mask = nullptr);

}  // namespace avu
