#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace avu {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

enum class OpKind : std::uint8_t {
  kLeaf,
  kMatmul,
  kAdd,
  kSub,
  kMul,
  kScale,
  kConcat,
  kSlice,
  kReshape,
  kTranspose,
  kRelu,
  kSigmoid,
  kSoftmax,
  kMeanAxis,
  kSum,
  kCrossEntropy,
  kBinaryCrossEntropy,
  kEmbedLookup,
  kLayerNorm,
  kConv2d,
  kUpsample2x,
};

const char* op_name(OpKind kind);

// One record of the computation graph. Nodes are created in program order and
// carry a monotonically increasing id, so sorting ancestors by id yields a
// valid topological order.
struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  OpKind kind = OpKind::kLeaf;
  std::uint64_t id = 0;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into the grads of `inputs`.
  std::function<void(Node&)> backward;

  void ensure_grad();
};

// Value-semantic handle to a graph node. Copies share the node.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<const double> data() const { return node_->data; }
  std::span<double> mutable_data() { return node_->data; }
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  // Gradient buffer; zeros when nothing has flowed into this tensor.
  std::vector<double> grad() const;
  std::span<const double> grad_view() const { return node_->grad; }
  void zero_grad();
  void clear_grad() { node_->grad.clear(); }

  // Constant copy with no history.
  Tensor detach() const;

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Topologically ordered view of the graph that produced a loss.
struct Tape {
  std::vector<Node*> nodes;
  std::size_t size() const { return nodes.size(); }
};

// Reverse-mode sweep from a scalar loss. Gradients accumulate additively into
// every reachable node that requires grad.
Tape backprop(const Tensor& loss);

// While alive, new results record no history (inference and evaluation).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};
bool grad_enabled();

// Builds a node for an op; `inputs` decide whether the node records history.
Tensor make_result(OpKind kind, Shape shape, std::vector<double> data,
                   std::vector<Tensor> inputs,
                   std::function<void(Node&)> backward);

}  // namespace avu
