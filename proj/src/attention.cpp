#include "avu/attention.hpp"

#include <cmath>

#include "avu/errors.hpp"
#include "avu/ops.hpp"

namespace avu {

AttentionSite make_attention_site(ParamStore& store, Rng& rng, const std::string& name,
                                  std::size_t dim, std::size_t heads, TaskSet users) {
  if (heads == 0 || dim % heads != 0) {
    throw ConfigError("attention site " + name + ": heads " + std::to_string(heads) +
                      " must divide dim " + std::to_string(dim));
  }
  AttentionSite s;
  s.query = make_affine(store, rng, name + ".q", dim, dim, users);
  s.key = make_affine(store, rng, name + ".k", dim, dim, users);
  s.value = make_affine(store, rng, name + ".v", dim, dim, users);
  s.heads = heads;
  return s;
}

AttentionSite identity_site(std::size_t dim) {
  return {identity_affine(dim), identity_affine(dim), identity_affine(dim), 1};
}

AttendResult attend(const AttentionSite& site, const Tensor& query,
                    const Tensor& context, const Tensor* mask) {
  const std::size_t c = site.dim();
  if (query.rank() < 2 || query.dim(query.rank() - 1) != c) {
    throw ShapeError("attend: query " + shape_str(query.shape()) + " vs site dim " +
                     std::to_string(c));
  }
  if (context.rank() < 2 || context.dim(context.rank() - 1) != c) {
    throw ShapeError("attend: context " + shape_str(context.shape()) + " vs site dim " +
                     std::to_string(c));
  }
  if (context.dim(context.rank() - 2) == 0) throw ContractError("attend: empty context");

  Tensor q = site.query(query);
  Tensor k = site.key(context);
  Tensor v = site.value(context);
  const std::size_t h = site.heads;
  const std::size_t dh = c / h;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  auto head = [&](const Tensor& qh, const Tensor& kh, const Tensor& vh,
                  Tensor& weights_out) {
    // A rank-2 context is shared by every leading index of the query.
    Tensor logits = ops::scale(ops::matmul(qh, ops::transpose(kh)), inv_sqrt);
    if (mask != nullptr) logits = ops::add(logits, *mask);
    weights_out = ops::softmax_lastdim(logits);
    return ops::matmul(weights_out, vh);
  };

  AttendResult r;
  if (h == 1) {
    r.out = head(q, k, v, r.weights);
    return r;
  }
  std::vector<Tensor> outs;
  Tensor wsum;
  const std::size_t ax_q = q.rank() - 1;
  const std::size_t ax_k = k.rank() - 1;
  for (std::size_t i = 0; i < h; ++i) {
    Tensor w;
    outs.push_back(head(ops::slice(q, ax_q, i * dh, (i + 1) * dh),
                        ops::slice(k, ax_k, i * dh, (i + 1) * dh),
                        ops::slice(v, ax_k, i * dh, (i + 1) * dh), w));
    wsum = wsum.defined() ? ops::add(wsum, w) : w;
  }
  r.out = ops::concat(outs, ax_q);
  r.weights = ops::scale(wsum, 1.0 / static_cast<double>(h));
  return r;
}

AttendResult self_attend(const AttentionSite& site, const Tensor& token,
                         const Tensor& own_context, const Tensor* mask) {
  return attend(site, token, own_context, mask);
}

AttendResult cross_attend(const AttentionSite& site, const Tensor& token,
                          const Tensor& other_context, const Tensor* mask) {
  return attend(site, token, other_context, mask);
}

}  // namespace avu
