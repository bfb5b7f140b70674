#include "lobg/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_set>

#include "lobg/errors.hpp"

namespace lobg {

namespace {
std::atomic<std::uint64_t> g_node_counter{1};
}

std::uint64_t next_node_id() { return g_node_counter.fetch_add(1, std::memory_order_relaxed); }

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

void Node::ensure_grad() {
  if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
}

namespace {
NodePtr make_leaf(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw InvalidInput("tensor shape " + shape_str(shape) + " does not match " +
                       std::to_string(values.size()) + " values");
  }
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  n->id = next_node_id();
  return n;
}
}  // namespace

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
  return Tensor(make_leaf(std::move(shape), std::move(values), false));
}

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  return Tensor(make_leaf(std::move(shape), std::move(values), true));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = shape_numel(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return Tensor(make_leaf({}, {v}, requires_grad));
}

std::size_t Tensor::cols() const {
  const auto& s = node_->shape;
  return s.empty() ? 1 : s.back();
}

std::size_t Tensor::rows() const {
  const auto c = cols();
  return c == 0 ? 0 : numel() / c;
}

std::span<double> Tensor::mutable_grad() {
  node_->ensure_grad();
  return node_->grad;
}

double Tensor::item() const {
  if (numel() != 1) throw InvalidParameter("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

void Tensor::set_requires_grad(bool flag) {
  if (!is_leaf()) throw InvalidParameter("requires_grad can only be toggled on leaves");
  node_->requires_grad = flag;
  if (!flag) node_->grad.clear();
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return Tensor::constant(shape(), node_->value); }

Tensor make_result(const char* op, Shape shape, std::vector<double> value,
                   std::vector<NodePtr> parents, std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->op = op;
  n->id = next_node_id();
  const bool any = std::any_of(parents.begin(), parents.end(),
                               [](const NodePtr& p) { return p->requires_grad; });
  if (any) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(n));
}

ComputationRecord ComputationRecord::trace(const Tensor& loss) {
  ComputationRecord rec;
  if (!loss.defined() || !loss.requires_grad()) return rec;
  std::unordered_set<const Node*> seen;
  std::vector<NodePtr> stack{loss.node()};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto n = std::move(stack.back());
    stack.pop_back();
    for (const auto& p : n->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p);
    }
    rec.nodes_.push_back(std::move(n));
  }
  std::sort(rec.nodes_.begin(), rec.nodes_.end(),
            [](const NodePtr& a, const NodePtr& b) { return a->id < b->id; });
  rec.entries_.reserve(rec.nodes_.size());
  for (const auto& n : rec.nodes_) {
    Entry e;
    e.op = n->op;
    e.output = n->id;
    for (const auto& p : n->parents) e.inputs.push_back(p->id);
    rec.entries_.push_back(std::move(e));
  }
  return rec;
}

namespace {
std::atomic<double> g_corruption{1.0};
}  // namespace

void debug::set_gradient_corruption(double factor) { g_corruption = factor; }

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw InvalidParameter("backward requires a scalar loss, got shape " +
                           (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) return;
  auto rec = ComputationRecord::trace(loss);
  const auto& nodes = rec.nodes();
  for (const auto& n : nodes) {
    if (n->backward_fn) n->grad.assign(n->value.size(), 0.0);
  }
  loss.node()->ensure_grad();
  loss.node()->grad[0] += 1.0;
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    Node& n = **it;
    if (!n.backward_fn) continue;
    for (const auto& p : n.parents) {
      if (p->requires_grad) p->ensure_grad();
    }
    n.backward_fn(n);
  }
  if (const double k = g_corruption.load(); k != 1.0) {
    std::unordered_set<Node*> leaves;
    for (const auto& n : nodes)
      for (const auto& p : n->parents)
        if (p->requires_grad && !p->backward_fn) leaves.insert(p.get());
    for (Node* p : leaves)
      for (auto& g : p->grad) g *= k;
  }
}

}  // namespace lobg
