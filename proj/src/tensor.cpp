#include "avu/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_set>

#include "avu/errors.hpp"

namespace avu {

namespace {
std::atomic<std::uint64_t> g_next_id{1};
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kMatmul: return "matmul";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kScale: return "scale";
    case OpKind::kConcat: return "concat_axis";
    case OpKind::kSlice: return "slice";
    case OpKind::kReshape: return "reshape";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kRelu: return "relu";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kSoftmax: return "softmax_lastdim";
    case OpKind::kMeanAxis: return "mean_axis";
    case OpKind::kSum: return "sum";
    case OpKind::kCrossEntropy: return "cross_entropy";
    case OpKind::kBinaryCrossEntropy: return "binary_cross_entropy";
    case OpKind::kEmbedLookup: return "embed_lookup";
    case OpKind::kLayerNorm: return "layer_norm";
    case OpKind::kConv2d: return "conv2d";
    case OpKind::kUpsample2x: return "upsample_nearest2x";
  }
  return "?";
}

void Node::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
}

static std::shared_ptr<Node> new_node(Shape shape, std::vector<double> data,
                                      bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("tensor: shape " + shape_str(shape) + " holds " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(data.size()));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  node->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  return node;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = shape_numel(shape);
  return Tensor(new_node(std::move(shape), std::vector<double>(n, 0.0),
                         requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto n = shape_numel(shape);
  return Tensor(new_node(std::move(shape), std::vector<double>(n, value),
                         requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> values,
                    bool requires_grad) {
  return Tensor(new_node(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(new_node({}, {value}, requires_grad));
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ContractError("item: tensor of shape " + shape_str(shape()) +
                        " is not a scalar");
  }
  return node_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  if (index.size() != rank()) {
    throw ShapeError("at: index rank " + std::to_string(index.size()) +
                     " for shape " + shape_str(shape()));
  }
  std::size_t off = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= node_->shape[axis]) {
      throw ShapeError("at: index out of range for shape " +
                       shape_str(shape()));
    }
    off = off * node_->shape[axis] + i;
    ++axis;
  }
  return node_->data[off];
}

std::vector<double> Tensor::grad() const {
  if (node_->grad.empty()) return std::vector<double>(numel(), 0.0);
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.assign(numel(), 0.0); }

Tensor Tensor::detach() const {
  return Tensor(new_node(node_->shape, node_->data, false));
}

namespace {
thread_local bool g_grad_enabled = true;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Tensor make_result(OpKind kind, Shape shape, std::vector<double> data,
                   std::vector<Tensor> inputs,
                   std::function<void(Node&)> backward) {
  bool track = false;
  if (g_grad_enabled)
    for (const auto& t : inputs) track = track || t.requires_grad();
  auto node = new_node(std::move(shape), std::move(data), track);
  node->kind = kind;
  if (track) {
    node->inputs.reserve(inputs.size());
    for (auto& t : inputs) node->inputs.push_back(t.shared());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

Tape backprop(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backprop: loss must be a scalar, got shape " +
                        (loss.defined() ? shape_str(loss.shape())
                                        : std::string("<undefined>")));
  }
  Tape tape;
  Node* root = loss.node();
  if (!root->requires_grad) return tape;

  // Collect every ancestor that participates in differentiation.
  std::vector<Node*> stack{root};
  std::vector<Node*> seen;
  std::unordered_set<const Node*> visited;
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    if (!visited.insert(n).second) continue;
    seen.push_back(n);
    for (auto& in : n->inputs) {
      if (in->requires_grad) stack.push_back(in.get());
    }
  }
  std::sort(seen.begin(), seen.end(),
            [](const Node* a, const Node* b) { return a->id < b->id; });
  tape.nodes = seen;

  // Interior grads are per-sweep; leaf grads accumulate across sweeps.
  for (Node* n : seen) {
    if (n->backward) {
      n->grad.assign(n->data.size(), 0.0);
    } else {
      n->ensure_grad();
    }
  }
  root->grad[0] += 1.0;
  for (auto it = seen.rbegin(); it != seen.rend(); ++it) {
    Node* n = *it;
    if (n->backward) n->backward(*n);
  }
  return tape;
}

}  // namespace avu
