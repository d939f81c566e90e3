#include "avu/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include <cblas.h>

#include "avu/errors.hpp"

namespace avu::ops {

namespace {

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b,
                             const std::string& why) {
  throw ShapeError(std::string(op) + ": " + why + " (" + shape_str(a) +
                   " vs " + shape_str(b) + ")");
}

[[noreturn]] void shape_fail(const char* op, const Shape& a,
                             const std::string& why) {
  throw ShapeError(std::string(op) + ": " + why + " (" + shape_str(a) + ")");
}

// Training steps are single-threaded; worker threads, when used, are ours.
const bool kBlasSingleThread = [] {
  openblas_set_num_threads(1);
  return true;
}();

int blas_dim(std::size_t d) { return static_cast<int>(d); }

// C[n,m] += A[n,k] * B[k,m]
void gemm_nn(const double* A, const double* B, double* C, std::size_t n, std::size_t k,
             std::size_t m) {
  if (n == 0 || k == 0 || m == 0) return;
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, blas_dim(n), blas_dim(m), blas_dim(k),
              1.0, A, blas_dim(k), B, blas_dim(m), 1.0, C, blas_dim(m));
}

// C[k,m] += A[n,k]^T * G[n,m]
void gemm_tn(const double* A, const double* G, double* C, std::size_t n, std::size_t k,
             std::size_t m) {
  if (n == 0 || k == 0 || m == 0) return;
  cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, blas_dim(k), blas_dim(m), blas_dim(n),
              1.0, A, blas_dim(k), G, blas_dim(m), 1.0, C, blas_dim(m));
}

// C[n,k] += G[n,m] * B[k,m]^T
void gemm_nt(const double* G, const double* B, double* C, std::size_t n, std::size_t k,
             std::size_t m) {
  if (n == 0 || k == 0 || m == 0) return;
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, blas_dim(n), blas_dim(k), blas_dim(m),
              1.0, G, blas_dim(m), B, blas_dim(m), 1.0, C, blas_dim(k));
}

void transpose_into(const double* src, double* dst, std::size_t rows,
                    std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
}

struct Broadcast {
  Shape out;
  std::vector<std::size_t> stride_a;
  std::vector<std::size_t> stride_b;
  bool same = false;
};

Broadcast broadcast_shapes(const char* op, const Shape& a, const Shape& b) {
  Broadcast bc;
  if (a == b) {
    bc.out = a;
    bc.same = true;
    return bc;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  bc.out.assign(rank, 1);
  bc.stride_a.assign(rank, 0);
  bc.stride_b.assign(rank, 0);
  std::size_t sa = 1;
  std::size_t sb = 1;
  for (std::size_t r = 0; r < rank; ++r) {
    const std::size_t ax = rank - 1 - r;
    const std::size_t da = r < a.size() ? a[a.size() - 1 - r] : 1;
    const std::size_t db = r < b.size() ? b[b.size() - 1 - r] : 1;
    if (da != db && da != 1 && db != 1) {
      shape_fail(op, a, b, "shapes are not broadcast-compatible");
    }
    bc.out[ax] = std::max(da, db);
    bc.stride_a[ax] = da == 1 ? 0 : sa;
    bc.stride_b[ax] = db == 1 ? 0 : sb;
    sa *= da;
    sb *= db;
  }
  return bc;
}

// Calls f(out_index, a_index, b_index) for every output element.
template <class F>
void for_each_broadcast(const Broadcast& bc, F&& f) {
  const std::size_t total = shape_numel(bc.out);
  if (bc.same) {
    for (std::size_t i = 0; i < total; ++i) f(i, i, i);
    return;
  }
  const std::size_t rank = bc.out.size();
  if (rank == 0) {
    f(0, 0, 0);
    return;
  }
  const std::size_t inner = bc.out[rank - 1];
  const std::size_t ia_step = bc.stride_a[rank - 1];
  const std::size_t ib_step = bc.stride_b[rank - 1];
  std::vector<std::size_t> idx(rank, 0);
  std::size_t o = 0;
  while (o < total) {
    std::size_t ia = 0;
    std::size_t ib = 0;
    for (std::size_t ax = 0; ax + 1 < rank; ++ax) {
      ia += idx[ax] * bc.stride_a[ax];
      ib += idx[ax] * bc.stride_b[ax];
    }
    for (std::size_t j = 0; j < inner; ++j) {
      f(o + j, ia + j * ia_step, ib + j * ib_step);
    }
    o += inner;
    for (std::size_t ax = rank - 1; ax-- > 0;) {
      if (++idx[ax] < bc.out[ax]) break;
      idx[ax] = 0;
    }
  }
}

enum class Binary { kAdd, kSub, kMul };

Tensor binary(Binary which, const Tensor& a, const Tensor& b) {
  const char* name = which == Binary::kAdd   ? "add"
                     : which == Binary::kSub ? "sub"
                                             : "mul";
  auto bc = std::make_shared<Broadcast>(broadcast_shapes(name, a.shape(), b.shape()));
  std::vector<double> out(shape_numel(bc->out));
  const auto ad = a.data();
  const auto bd = b.data();
  switch (which) {
    case Binary::kAdd:
      for_each_broadcast(*bc, [&](std::size_t o, std::size_t i, std::size_t j) {
        out[o] = ad[i] + bd[j];
      });
      break;
    case Binary::kSub:
      for_each_broadcast(*bc, [&](std::size_t o, std::size_t i, std::size_t j) {
        out[o] = ad[i] - bd[j];
      });
      break;
    case Binary::kMul:
      for_each_broadcast(*bc, [&](std::size_t o, std::size_t i, std::size_t j) {
        out[o] = ad[i] * bd[j];
      });
      break;
  }
  const OpKind kind = which == Binary::kAdd   ? OpKind::kAdd
                      : which == Binary::kSub ? OpKind::kSub
                                              : OpKind::kMul;
  return make_result(kind, bc->out, std::move(out), {a, b}, [bc, which](Node& n) {
    Node& na = *n.inputs[0];
    Node& nb = *n.inputs[1];
    const auto& g = n.grad;
    if (na.requires_grad) {
      if (which == Binary::kMul) {
        for_each_broadcast(*bc, [&](std::size_t o, std::size_t i, std::size_t j) {
          na.grad[i] += g[o] * nb.data[j];
        });
      } else {
        for_each_broadcast(*bc, [&](std::size_t o, std::size_t i, std::size_t) {
          na.grad[i] += g[o];
        });
      }
    }
    if (nb.requires_grad) {
      switch (which) {
        case Binary::kAdd:
          for_each_broadcast(*bc, [&](std::size_t o, std::size_t, std::size_t j) {
            nb.grad[j] += g[o];
          });
          break;
        case Binary::kSub:
          for_each_broadcast(*bc, [&](std::size_t o, std::size_t, std::size_t j) {
            nb.grad[j] -= g[o];
          });
          break;
        case Binary::kMul:
          for_each_broadcast(*bc, [&](std::size_t o, std::size_t i, std::size_t j) {
            nb.grad[j] += g[o] * na.data[i];
          });
          break;
      }
    }
  });
}

// Splits a shape around `axis` into (outer, axis length, inner).
struct AxisSplit {
  std::size_t outer = 1;
  std::size_t len = 1;
  std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& s, std::size_t axis) {
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2) {
    shape_fail("matmul", a.shape(), b.shape(), "operands need rank >= 2");
  }
  std::size_t n = a.dim(a.rank() - 2);
  const std::size_t k = a.dim(a.rank() - 1);
  const bool shared_rhs = b.rank() == 2;
  std::size_t kb = 0;
  std::size_t m = 0;
  if (shared_rhs) {
    kb = b.dim(0);
    m = b.dim(1);
  } else {
    if (b.rank() != a.rank() ||
        !std::equal(a.shape().begin(), a.shape().end() - 2, b.shape().begin())) {
      shape_fail("matmul", a.shape(), b.shape(), "batch dimensions differ");
    }
    kb = b.dim(b.rank() - 2);
    m = b.dim(b.rank() - 1);
  }
  if (kb != k) shape_fail("matmul", a.shape(), b.shape(), "inner dimensions differ");
  std::size_t batch = n * k == 0 ? 0 : a.numel() / (n * k);
  Shape out_shape = a.shape();
  out_shape.back() = m;
  if (shared_rhs) {
    // Leading dims of `a` are plain rows against one right-hand side.
    n *= batch;
    batch = n == 0 ? 0 : 1;
  }
  std::vector<double> out(batch * n * m, 0.0);
  const double* A = a.data().data();
  const double* B = b.data().data();
  for (std::size_t bi = 0; bi < batch; ++bi) {
    gemm_nn(A + bi * n * k, B + (shared_rhs ? 0 : bi * k * m),
            out.data() + bi * n * m, n, k, m);
  }
  return make_result(OpKind::kMatmul, std::move(out_shape), std::move(out), {a, b},
                     [n, k, m, batch, shared_rhs](Node& node) {
                       Node& na = *node.inputs[0];
                       Node& nb = *node.inputs[1];
                       const double* G = node.grad.data();
                       for (std::size_t bi = 0; bi < batch; ++bi) {
                         const std::size_t boff = shared_rhs ? 0 : bi * k * m;
                         if (na.requires_grad) {
                           gemm_nt(G + bi * n * m, nb.data.data() + boff,
                                   na.grad.data() + bi * n * k, n, k, m);
                         }
                         if (nb.requires_grad) {
                           gemm_tn(na.data.data() + bi * n * k, G + bi * n * m,
                                   nb.grad.data() + boff, n, k, m);
                         }
                       }
                     });
}

Tensor add(const Tensor& a, const Tensor& b) { return binary(Binary::kAdd, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(Binary::kSub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(Binary::kMul, a, b); }

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  return make_result(OpKind::kScale, a.shape(), std::move(out), {a},
                     [factor](Node& n) {
                       Node& na = *n.inputs[0];
                       for (std::size_t i = 0; i < n.grad.size(); ++i)
                         na.grad[i] += factor * n.grad[i];
                     });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat_axis: no inputs");
  const Shape& ref = parts[0].shape();
  if (axis >= ref.size()) shape_fail("concat_axis", ref, "axis out of range");
  Shape out_shape = ref;
  out_shape[axis] = 0;
  std::vector<std::size_t> lens;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != ref.size()) shape_fail("concat_axis", ref, s, "rank differs");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != ref[i]) {
        shape_fail("concat_axis", ref, s, "non-concat dimension differs");
      }
    }
    lens.push_back(s[axis]);
    out_shape[axis] += s[axis];
  }
  const AxisSplit sp = split_axis(out_shape, axis);
  std::vector<double> out(shape_numel(out_shape));
  std::size_t pos = 0;
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t p = 0; p < parts.size(); ++p) {
      const std::size_t chunk = lens[p] * sp.inner;
      const double* src = parts[p].data().data() + o * chunk;
      std::copy(src, src + chunk, out.begin() + pos);
      pos += chunk;
    }
  }
  return make_result(OpKind::kConcat, out_shape, std::move(out), parts,
                     [lens, sp](Node& n) {
                       std::size_t pos = 0;
                       for (std::size_t o = 0; o < sp.outer; ++o) {
                         for (std::size_t p = 0; p < lens.size(); ++p) {
                           const std::size_t chunk = lens[p] * sp.inner;
                           Node& in = *n.inputs[p];
                           if (in.requires_grad) {
                             double* dst = in.grad.data() + o * chunk;
                             for (std::size_t j = 0; j < chunk; ++j)
                               dst[j] += n.grad[pos + j];
                           }
                           pos += chunk;
                         }
                       }
                     });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin,
             std::size_t end) {
  if (axis >= a.rank()) shape_fail("slice", a.shape(), "axis out of range");
  if (begin > end || end > a.dim(axis)) {
    shape_fail("slice", a.shape(),
               "range [" + std::to_string(begin) + ", " + std::to_string(end) +
                   ") out of bounds on axis " + std::to_string(axis));
  }
  const AxisSplit sp = split_axis(a.shape(), axis);
  Shape out_shape = a.shape();
  out_shape[axis] = end - begin;
  const std::size_t chunk = (end - begin) * sp.inner;
  std::vector<double> out(sp.outer * chunk);
  const double* src = a.data().data();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    const double* s = src + (o * sp.len + begin) * sp.inner;
    std::copy(s, s + chunk, out.begin() + o * chunk);
  }
  return make_result(OpKind::kSlice, std::move(out_shape), std::move(out), {a},
                     [sp, begin, chunk](Node& n) {
                       Node& na = *n.inputs[0];
                       for (std::size_t o = 0; o < sp.outer; ++o) {
                         double* d = na.grad.data() + (o * sp.len + begin) * sp.inner;
                         const double* g = n.grad.data() + o * chunk;
                         for (std::size_t j = 0; j < chunk; ++j) d[j] += g[j];
                       }
                     });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    shape_fail("reshape", a.shape(), shape, "element count differs");
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return make_result(OpKind::kReshape, std::move(shape), std::move(out), {a},
                     [](Node& n) {
                       Node& na = *n.inputs[0];
                       for (std::size_t i = 0; i < n.grad.size(); ++i)
                         na.grad[i] += n.grad[i];
                     });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() < 2) shape_fail("transpose", a.shape(), "rank must be >= 2");
  const std::size_t r = a.dim(a.rank() - 2);
  const std::size_t c = a.dim(a.rank() - 1);
  const std::size_t batch = r * c == 0 ? 0 : a.numel() / (r * c);
  Shape out_shape = a.shape();
  std::swap(out_shape[out_shape.size() - 1], out_shape[out_shape.size() - 2]);
  std::vector<double> out(a.numel());
  for (std::size_t b = 0; b < batch; ++b)
    transpose_into(a.data().data() + b * r * c, out.data() + b * r * c, r, c);
  return make_result(OpKind::kTranspose, std::move(out_shape), std::move(out), {a},
                     [r, c, batch](Node& n) {
                       Node& na = *n.inputs[0];
                       for (std::size_t b = 0; b < batch; ++b) {
                         const double* g = n.grad.data() + b * r * c;
                         double* d = na.grad.data() + b * r * c;
                         for (std::size_t i = 0; i < r; ++i)
                           for (std::size_t j = 0; j < c; ++j)
                             d[i * c + j] += g[j * r + i];
                       }
                     });
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v = v > 0.0 ? v : 0.0;
  return make_result(OpKind::kRelu, a.shape(), std::move(out), {a}, [](Node& n) {
    Node& na = *n.inputs[0];
    for (std::size_t i = 0; i < n.grad.size(); ++i)
      if (na.data[i] > 0.0) na.grad[i] += n.grad[i];
  });
}

Tensor sigmoid(const Tensor& a) {
  std::vector<double> out(a.numel());
  const auto d = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = d[i];
    out[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                      : std::exp(x) / (1.0 + std::exp(x));
  }
  return make_result(OpKind::kSigmoid, a.shape(), std::move(out), {a}, [](Node& n) {
    Node& na = *n.inputs[0];
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      const double s = n.data[i];
      na.grad[i] += n.grad[i] * s * (1.0 - s);
    }
  });
}

Tensor softmax_lastdim(const Tensor& a) {
  if (a.rank() == 0) shape_fail("softmax_lastdim", a.shape(), "needs rank >= 1");
  const std::size_t len = a.dim(a.rank() - 1);
  if (len == 0) shape_fail("softmax_lastdim", a.shape(), "empty last axis");
  const std::size_t rows = a.numel() / len;
  std::vector<double> out(a.numel());
  const double* x = a.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x + r * len;
    double* yr = out.data() + r * len;
    const double mx = *std::max_element(xr, xr + len);
    if (!std::isfinite(mx)) {
      throw NumericsError("softmax_lastdim: row " + std::to_string(r) +
                          " has no finite maximum");
    }
    double z = 0.0;
    for (std::size_t j = 0; j < len; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      z += yr[j];
    }
    for (std::size_t j = 0; j < len; ++j) yr[j] /= z;
  }
  return make_result(OpKind::kSoftmax, a.shape(), std::move(out), {a},
                     [len, rows](Node& n) {
                       Node& na = *n.inputs[0];
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* y = n.data.data() + r * len;
                         const double* g = n.grad.data() + r * len;
                         double dot = 0.0;
                         for (std::size_t j = 0; j < len; ++j) dot += g[j] * y[j];
                         double* d = na.grad.data() + r * len;
                         for (std::size_t j = 0; j < len; ++j)
                           d[j] += y[j] * (g[j] - dot);
                       }
                     });
}

Tensor mean_axis(const Tensor& a, std::size_t axis) {
  if (axis >= a.rank()) shape_fail("mean_axis", a.shape(), "axis out of range");
  const AxisSplit sp = split_axis(a.shape(), axis);
  if (sp.len == 0) shape_fail("mean_axis", a.shape(), "empty axis");
  Shape out_shape = a.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  std::vector<double> out(sp.outer * sp.inner, 0.0);
  const double* x = a.data().data();
  const double inv = 1.0 / static_cast<double>(sp.len);
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t l = 0; l < sp.len; ++l)
      for (std::size_t i = 0; i < sp.inner; ++i)
        out[o * sp.inner + i] += x[(o * sp.len + l) * sp.inner + i];
  for (auto& v : out) v *= inv;
  return make_result(OpKind::kMeanAxis, std::move(out_shape), std::move(out), {a},
                     [sp, inv](Node& n) {
                       Node& na = *n.inputs[0];
                       for (std::size_t o = 0; o < sp.outer; ++o)
                         for (std::size_t l = 0; l < sp.len; ++l)
                           for (std::size_t i = 0; i < sp.inner; ++i)
                             na.grad[(o * sp.len + l) * sp.inner + i] +=
                                 inv * n.grad[o * sp.inner + i];
                     });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return make_result(OpKind::kSum, {}, {s}, {a}, [](Node& n) {
    Node& na = *n.inputs[0];
    const double g = n.grad[0];
    for (auto& v : na.grad) v += g;
  });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets) {
  if (logits.rank() != 2) {
    shape_fail("cross_entropy", logits.shape(), "logits must be [N, V]");
  }
  const std::size_t rows = logits.dim(0);
  const std::size_t vocab = logits.dim(1);
  if (targets.size() != rows) {
    shape_fail("cross_entropy", logits.shape(), Shape{targets.size()},
               "one target per logit row required");
  }
  if (rows == 0) shape_fail("cross_entropy", logits.shape(), "no rows");
  auto probs = std::make_shared<std::vector<double>>(logits.numel());
  std::vector<int> tgt(targets.begin(), targets.end());
  const double* x = logits.data().data();
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const int t = tgt[r];
    if (t < 0 || static_cast<std::size_t>(t) >= vocab) {
      throw ContractError("cross_entropy: target " + std::to_string(t) +
                          " outside vocabulary of " + std::to_string(vocab));
    }
    const double* xr = x + r * vocab;
    if (!std::isfinite(xr[t])) {
      throw NumericsError("cross_entropy: target logit is not finite at row " +
                          std::to_string(r));
    }
    const double mx = *std::max_element(xr, xr + vocab);
    double z = 0.0;
    double* pr = probs->data() + r * vocab;
    for (std::size_t j = 0; j < vocab; ++j) {
      pr[j] = std::exp(xr[j] - mx);
      z += pr[j];
    }
    for (std::size_t j = 0; j < vocab; ++j) pr[j] /= z;
    total += (mx + std::log(z)) - xr[t];
  }
  const double inv = 1.0 / static_cast<double>(rows);
  return make_result(OpKind::kCrossEntropy, {}, {total * inv}, {logits},
                     [probs, tgt, vocab, inv](Node& n) {
                       Node& nl = *n.inputs[0];
                       const double g = n.grad[0] * inv;
                       for (std::size_t r = 0; r < tgt.size(); ++r) {
                         const double* pr = probs->data() + r * vocab;
                         double* d = nl.grad.data() + r * vocab;
                         for (std::size_t j = 0; j < vocab; ++j) d[j] += g * pr[j];
                         d[tgt[r]] -= g;
                       }
                     });
}

Tensor binary_cross_entropy(const Tensor& logits,
                            std::span<const double> targets) {
  if (targets.size() != logits.numel()) {
    shape_fail("binary_cross_entropy", logits.shape(), Shape{targets.size()},
               "target count differs from logit count");
  }
  if (logits.numel() == 0) shape_fail("binary_cross_entropy", logits.shape(), "empty");
  auto tgt = std::make_shared<std::vector<double>>(targets.begin(), targets.end());
  const double* x = logits.data().data();
  double total = 0.0;
  for (std::size_t i = 0; i < tgt->size(); ++i) {
    const double v = x[i];
    total += std::max(v, 0.0) - v * (*tgt)[i] + std::log1p(std::exp(-std::abs(v)));
  }
  const double inv = 1.0 / static_cast<double>(tgt->size());
  return make_result(OpKind::kBinaryCrossEntropy, {}, {total * inv}, {logits},
                     [tgt, inv](Node& n) {
                       Node& nl = *n.inputs[0];
                       const double g = n.grad[0] * inv;
                       for (std::size_t i = 0; i < tgt->size(); ++i) {
                         const double v = nl.data[i];
                         const double s = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                                                   : std::exp(v) / (1.0 + std::exp(v));
                         nl.grad[i] += g * (s - (*tgt)[i]);
                       }
                     });
}

Tensor embed_lookup(const Tensor& table, std::span<const int> ids) {
  if (table.rank() != 2) shape_fail("embed_lookup", table.shape(), "table must be [V, C]");
  const std::size_t vocab = table.dim(0);
  const std::size_t width = table.dim(1);
  std::vector<int> idx(ids.begin(), ids.end());
  std::vector<double> out(idx.size() * width);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || static_cast<std::size_t>(idx[r]) >= vocab) {
      throw ShapeError("embed_lookup: id " + std::to_string(idx[r]) +
                       " outside table " + shape_str(table.shape()));
    }
    const double* src = table.data().data() + static_cast<std::size_t>(idx[r]) * width;
    std::copy(src, src + width, out.begin() + r * width);
  }
  return make_result(OpKind::kEmbedLookup, {idx.size(), width}, std::move(out), {table},
                     [idx, width](Node& n) {
                       Node& nt = *n.inputs[0];
                       for (std::size_t r = 0; r < idx.size(); ++r) {
                         double* d = nt.grad.data() + static_cast<std::size_t>(idx[r]) * width;
                         const double* g = n.grad.data() + r * width;
                         for (std::size_t j = 0; j < width; ++j) d[j] += g[j];
                       }
                     });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  if (x.rank() == 0) shape_fail("layer_norm", x.shape(), "needs rank >= 1");
  const std::size_t width = x.dim(x.rank() - 1);
  if (gamma.numel() != width || beta.numel() != width) {
    shape_fail("layer_norm", x.shape(), gamma.shape(),
               "gamma/beta must match the last axis");
  }
  const std::size_t rows = x.numel() / width;
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  std::vector<double> out(x.numel());
  const double* xd = x.data().data();
  const double* gd = gamma.data().data();
  const double* bd = beta.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xd + r * width;
    double mean = 0.0;
    for (std::size_t j = 0; j < width; ++j) mean += xr[j];
    mean /= static_cast<double>(width);
    double var = 0.0;
    for (std::size_t j = 0; j < width; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<double>(width);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < width; ++j) {
      const double h = (xr[j] - mean) * is;
      (*xhat)[r * width + j] = h;
      out[r * width + j] = gd[j] * h + bd[j];
    }
  }
  return make_result(
      OpKind::kLayerNorm, x.shape(), std::move(out), {x, gamma, beta},
      [xhat, inv_std, width, rows](Node& n) {
        Node& nx = *n.inputs[0];
        Node& ng = *n.inputs[1];
        Node& nb = *n.inputs[2];
        std::vector<double> dh(width);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* g = n.grad.data() + r * width;
          const double* h = xhat->data() + r * width;
          double mean_dh = 0.0;
          double mean_dh_h = 0.0;
          for (std::size_t j = 0; j < width; ++j) {
            if (ng.requires_grad) ng.grad[j] += g[j] * h[j];
            if (nb.requires_grad) nb.grad[j] += g[j];
            dh[j] = g[j] * ng.data[j];
            mean_dh += dh[j];
            mean_dh_h += dh[j] * h[j];
          }
          if (!nx.requires_grad) continue;
          mean_dh /= static_cast<double>(width);
          mean_dh_h /= static_cast<double>(width);
          double* d = nx.grad.data() + r * width;
          const double is = (*inv_std)[r];
          for (std::size_t j = 0; j < width; ++j)
            d[j] += is * (dh[j] - mean_dh - h[j] * mean_dh_h);
        }
      });
}

namespace {

// cols [Cin*k*k, H*W]
void im2col(const double* x, std::size_t cin, std::size_t h, std::size_t w,
            std::size_t k, double* cols) {
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < cin; ++c)
    for (std::size_t ky = 0; ky < k; ++ky)
      for (std::size_t kx = 0; kx < k; ++kx) {
        double* row = cols + ((c * k + ky) * k + kx) * hw;
        const auto dy = static_cast<std::ptrdiff_t>(ky) - pad;
        const auto dx = static_cast<std::ptrdiff_t>(kx) - pad;
        for (std::size_t y = 0; y < h; ++y) {
          const auto sy = static_cast<std::ptrdiff_t>(y) + dy;
          double* r = row + y * w;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) {
            std::fill(r, r + w, 0.0);
            continue;
          }
          const double* src = x + (c * h + static_cast<std::size_t>(sy)) * w;
          for (std::size_t xx = 0; xx < w; ++xx) {
            const auto sx = static_cast<std::ptrdiff_t>(xx) + dx;
            r[xx] = (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w))
                        ? 0.0
                        : src[static_cast<std::size_t>(sx)];
          }
        }
      }
}

void col2im_add(const double* cols, std::size_t cin, std::size_t h,
                std::size_t w, std::size_t k, double* dx) {
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < cin; ++c)
    for (std::size_t ky = 0; ky < k; ++ky)
      for (std::size_t kx = 0; kx < k; ++kx) {
        const double* row = cols + ((c * k + ky) * k + kx) * hw;
        const auto ddy = static_cast<std::ptrdiff_t>(ky) - pad;
        const auto ddx = static_cast<std::ptrdiff_t>(kx) - pad;
        for (std::size_t y = 0; y < h; ++y) {
          const auto sy = static_cast<std::ptrdiff_t>(y) + ddy;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
          double* dst = dx + (c * h + static_cast<std::size_t>(sy)) * w;
          const double* r = row + y * w;
          for (std::size_t xx = 0; xx < w; ++xx) {
            const auto sx = static_cast<std::ptrdiff_t>(xx) + ddx;
            if (sx >= 0 && sx < static_cast<std::ptrdiff_t>(w))
              dst[static_cast<std::size_t>(sx)] += r[xx];
          }
        }
      }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.rank() != 4) shape_fail("conv2d", x.shape(), "input must be [B, Cin, H, W]");
  if (weight.rank() != 4 || weight.dim(2) != weight.dim(3) || weight.dim(2) % 2 == 0) {
    shape_fail("conv2d", weight.shape(), "weight must be [Cout, Cin, k, k] with odd k");
  }
  if (weight.dim(1) != x.dim(1)) {
    shape_fail("conv2d", x.shape(), weight.shape(), "input channels differ");
  }
  if (bias.numel() != weight.dim(0)) {
    shape_fail("conv2d", weight.shape(), bias.shape(), "bias must have Cout entries");
  }
  const std::size_t batch = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t cout = weight.dim(0), k = weight.dim(2);
  const std::size_t ck = cin * k * k, hw = h * w;
  std::vector<double> out(batch * cout * hw);
  std::vector<double> cols(ck * hw);
  for (std::size_t b = 0; b < batch; ++b) {
    double* o = out.data() + b * cout * hw;
    for (std::size_t c = 0; c < cout; ++c)
      std::fill(o + c * hw, o + (c + 1) * hw, bias.data()[c]);
    im2col(x.data().data() + b * cin * hw, cin, h, w, k, cols.data());
    gemm_nn(weight.data().data(), cols.data(), o, cout, ck, hw);
  }
  return make_result(
      OpKind::kConv2d, {batch, cout, h, w}, std::move(out), {x, weight, bias},
      [batch, cin, h, w, cout, k, ck, hw](Node& n) {
        Node& nx = *n.inputs[0];
        Node& nw = *n.inputs[1];
        Node& nb = *n.inputs[2];
        std::vector<double> cols(ck * hw);
        std::vector<double> dcols;
        for (std::size_t b = 0; b < batch; ++b) {
          const double* g = n.grad.data() + b * cout * hw;
          if (nb.requires_grad) {
            for (std::size_t c = 0; c < cout; ++c) {
              double s = 0.0;
              for (std::size_t i = 0; i < hw; ++i) s += g[c * hw + i];
              nb.grad[c] += s;
            }
          }
          if (nw.requires_grad) {
            im2col(nx.data.data() + b * cin * hw, cin, h, w, k, cols.data());
            gemm_nt(g, cols.data(), nw.grad.data(), cout, ck, hw);
          }
          if (nx.requires_grad) {
            dcols.assign(ck * hw, 0.0);
            gemm_tn(nw.data.data(), g, dcols.data(), cout, ck, hw);
            col2im_add(dcols.data(), cin, h, w, k, nx.grad.data() + b * cin * hw);
          }
        }
      });
}

Tensor upsample_nearest2x(const Tensor& x) {
  if (x.rank() < 2) shape_fail("upsample_nearest2x", x.shape(), "needs rank >= 2");
  const std::size_t h = x.dim(x.rank() - 2), w = x.dim(x.rank() - 1);
  const std::size_t planes = h * w == 0 ? 0 : x.numel() / (h * w);
  Shape out_shape = x.shape();
  out_shape[out_shape.size() - 2] = 2 * h;
  out_shape[out_shape.size() - 1] = 2 * w;
  std::vector<double> out(planes * 4 * h * w);
  const double* src = x.data().data();
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t y = 0; y < 2 * h; ++y)
      for (std::size_t xx = 0; xx < 2 * w; ++xx)
        out[(p * 2 * h + y) * 2 * w + xx] = src[(p * h + y / 2) * w + xx / 2];
  return make_result(OpKind::kUpsample2x, std::move(out_shape), std::move(out), {x},
                     [planes, h, w](Node& n) {
                       Node& nx = *n.inputs[0];
                       for (std::size_t p = 0; p < planes; ++p)
                         for (std::size_t y = 0; y < 2 * h; ++y)
                           for (std::size_t xx = 0; xx < 2 * w; ++xx)
                             nx.grad[(p * h + y / 2) * w + xx / 2] +=
                                 n.grad[(p * 2 * h + y) * 2 * w + xx];
                     });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  return add(matmul(x, w), b);
}

}  // namespace avu::ops
