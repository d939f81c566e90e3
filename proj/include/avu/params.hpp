#pragma once

#include <string>
#include <vector>

#include "avu/rng.hpp"
#include "avu/task.hpp"
#include "avu/tensor.hpp"

namespace avu {

struct ParamEntry {
  std::string name;
  Tensor tensor;
  TaskSet users;  // tasks whose forward path touches this parameter
};

// Owns every trainable tensor of a model, in registration order.
class ParamStore {
 public:
  Tensor add(std::string name, Shape shape, std::vector<double> values, TaskSet users);
  Tensor xavier(Rng& rng, std::string name, Shape shape, std::size_t fan_in,
                std::size_t fan_out, TaskSet users);
  Tensor zeros(std::string name, Shape shape, TaskSet users);
  Tensor constant(std::string name, Shape shape, double value, TaskSet users);

  const std::vector<ParamEntry>& entries() const { return entries_; }
  std::vector<Tensor> tensors() const;
  const ParamEntry* find(const std::string& name) const;
  std::size_t scalar_count() const;

  void zero_grad();

 private:
  std::vector<ParamEntry> entries_;
};

// y = x W + b on the last axis.
struct Affine {
  Tensor w;  // [in, out]
  Tensor b;  // [out]
  Tensor operator()(const Tensor& x) const;
  std::size_t in_dim() const { return w.dim(0); }
  std::size_t out_dim() const { return w.dim(1); }
};

Affine make_affine(ParamStore& store, Rng& rng, const std::string& name,
                   std::size_t in, std::size_t out, TaskSet users);
// Constant (non-trainable) identity map, for tests and structural checks.
Affine identity_affine(std::size_t dim);

struct LayerNormParams {
  Tensor gamma;
  Tensor beta;
  Tensor operator()(const Tensor& x) const;
};

LayerNormParams make_layer_norm(ParamStore& store, const std::string& name,
                                std::size_t dim, TaskSet users);

}  // namespace avu
