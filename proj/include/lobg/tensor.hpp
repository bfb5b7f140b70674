#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace lobg {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// One vertex of the define-by-run graph. Nodes are created in strictly
// increasing id order, so sorting by id is a topological order.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until a backward pass reaches the node
  bool requires_grad = false;
  std::uint64_t id = 0;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents' grads.
  std::function<void(Node&)> backward_fn;

  void ensure_grad();
};

using NodePtr = std::shared_ptr<Node>;

// Handle to a dense row-major float64 array that may participate in
// reverse-mode differentiation. Copies share the underlying node.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor constant(Shape shape, std::vector<double> values);
  static Tensor parameter(Shape shape, std::vector<double> values);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t numel() const { return node_->value.size(); }
  std::size_t rank() const { return node_->shape.size(); }
  // Last axis length; 1 for a rank-0 scalar.
  std::size_t cols() const;
  // Product of every axis but the last.
  std::size_t rows() const;

  std::span<const double> values() const { return node_->value; }
  // Direct write access. Intended for leaves (parameters, inputs); writing
  // into an interior node invalidates the graph built on top of it.
  std::span<double> mutable_values() { return node_->value; }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad();
  bool has_grad() const { return !node_->grad.empty(); }

  double item() const;
  double at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag);
  bool is_leaf() const { return !node_->backward_fn; }
  void zero_grad();

  std::uint64_t node_id() const { return node_->id; }
  const char* op() const { return node_->op; }
  const NodePtr& node() const { return node_; }

  // Fresh constant leaf holding a copy of the values.
  Tensor detach() const;

 private:
  NodePtr node_;
};

std::uint64_t next_node_id();

// Builds a node for an op result. When no parent requires grad the node is a
// constant and backward_fn is dropped.
Tensor make_result(const char* op, Shape shape, std::vector<double> value,
                   std::vector<NodePtr> parents, std::function<void(Node&)> backward_fn);

// The ordered trace of ops reachable from a scalar loss.
class ComputationRecord {
 public:
  struct Entry {
    std::string op;
    std::vector<std::uint64_t> inputs;
    std::uint64_t output = 0;
  };

  static ComputationRecord trace(const Tensor& loss);

  // Topological order, inputs first.
  const std::vector<Entry>& entries() const { return entries_; }
  const std::vector<NodePtr>& nodes() const { return nodes_; }

 private:
  std::vector<Entry> entries_;
  std::vector<NodePtr> nodes_;
};

// Reverse accumulation from a scalar loss. Leaf grads accumulate across calls;
// interior grads are reset per call. Throws InvalidParameter for a non-scalar loss.
void backward(const Tensor& loss);

namespace debug {
// Test hook: scales every leaf gradient produced by backward(). 1 disables it.
void set_gradient_corruption(double factor);
}  // namespace debug

}  // namespace lobg
