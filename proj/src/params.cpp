#include "avu/params.hpp"

#include <cmath>

#include "avu/errors.hpp"
#include "avu/ops.hpp"

namespace avu {

std::string_view task_name(Task t) {
  switch (t) {
    case Task::kAVE: return "AVE";
    case Task::kAVVP: return "AVVP";
    case Task::kSSL: return "SSL";
    case Task::kAVS: return "AVS";
    case Task::kAVQA: return "AVQA";
  }
  return "?";
}

std::optional<Task> parse_task(std::string_view name) {
  for (Task t : kAllTasks)
    if (task_name(t) == name) return t;
  return std::nullopt;
}

Tensor ParamStore::add(std::string name, Shape shape, std::vector<double> values,
                       TaskSet users) {
  if (find(name) != nullptr) throw ConfigError("duplicate parameter name: " + name);
  Tensor t = Tensor::from(std::move(shape), std::move(values), true);
  entries_.push_back({std::move(name), t, users});
  return t;
}

Tensor ParamStore::xavier(Rng& rng, std::string name, Shape shape, std::size_t fan_in,
                          std::size_t fan_out, TaskSet users) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(-a, a);
  return add(std::move(name), std::move(shape), std::move(v), users);
}

Tensor ParamStore::zeros(std::string name, Shape shape, TaskSet users) {
  return constant(std::move(name), std::move(shape), 0.0, users);
}

Tensor ParamStore::constant(std::string name, Shape shape, double value, TaskSet users) {
  std::vector<double> v(shape_numel(shape), value);
  return add(std::move(name), std::move(shape), std::move(v), users);
}

std::vector<Tensor> ParamStore::tensors() const {
  std::vector<Tensor> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.tensor);
  return out;
}

const ParamEntry* ParamStore::find(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return &e;
  return nullptr;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

Tensor Affine::operator()(const Tensor& x) const { return ops::linear(x, w, b); }

Affine make_affine(ParamStore& store, Rng& rng, const std::string& name, std::size_t in,
                   std::size_t out, TaskSet users) {
  Affine a;
  a.w = store.xavier(rng, name + ".w", {in, out}, in, out, users);
  a.b = store.zeros(name + ".b", {out}, users);
  return a;
}

Affine identity_affine(std::size_t dim) {
  std::vector<double> eye(dim * dim, 0.0);
  for (std::size_t i = 0; i < dim; ++i) eye[i * dim + i] = 1.0;
  return {Tensor::from({dim, dim}, std::move(eye)), Tensor::zeros({dim})};
}

Tensor LayerNormParams::operator()(const Tensor& x) const {
  return ops::layer_norm(x, gamma, beta);
}

LayerNormParams make_layer_norm(ParamStore& store, const std::string& name,
                                std::size_t dim, TaskSet users) {
  return {store.constant(name + ".gamma", {dim}, 1.0, users),
          store.zeros(name + ".beta", {dim}, users)};
}

}  // namespace avu
