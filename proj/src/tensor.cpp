#include "ctxdit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "ctxdit/op_support.hpp"

namespace ctxdit {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

void detail::Node::ensure_grad() {
  if (grad.size() != data.size()) grad.assign(data.size(), Scalar(0));
}

Tensor::Tensor(Shape shape, std::vector<Scalar> data, bool requires_grad) {
  for (auto d : shape)
    if (d == 0) throw ShapeError("tensor dims must be positive, got " + shape_str(shape));
  if (shape_numel(shape) != data.size())
    throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                     shape_str(shape));
  node_ = std::make_shared<detail::Node>();
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0, requires_grad); }

Tensor Tensor::full(Shape shape, Scalar value, bool requires_grad) {
  auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<Scalar>(n, value), requires_grad);
}

Tensor Tensor::scalar(Scalar value, bool requires_grad) { return Tensor({1}, {value}, requires_grad); }

Tensor Tensor::eye(std::size_t n) {
  std::vector<Scalar> d(n * n, 0);
  for (std::size_t i = 0; i < n; ++i) d[i * n + i] = 1;
  return Tensor({n, n}, std::move(d));
}

Tensor Tensor::from_node(std::shared_ptr<detail::Node> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

const Shape& Tensor::shape() const {
  if (!node_) throw ShapeError("undefined tensor");
  return node_->shape;
}

std::size_t Tensor::dim(std::ptrdiff_t i) const {
  auto r = static_cast<std::ptrdiff_t>(rank());
  if (i < 0) i += r;
  if (i < 0 || i >= r) throw ShapeError("dim index out of range for shape " + shape_str(shape()));
  return shape()[static_cast<std::size_t>(i)];
}

std::size_t Tensor::numel() const { return node_ ? node_->data.size() : 0; }

std::span<const Scalar> Tensor::data() const {
  if (!node_) return {};
  return node_->data;
}

std::span<Scalar> Tensor::mutable_data() {
  if (!node_) throw ShapeError("undefined tensor");
  if (!node_->is_leaf()) throw Error("mutable_data() is only allowed on leaf tensors");
  return node_->data;
}

Scalar Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() needs a one-element tensor, got " + shape_str(shape()));
  return node_->data[0];
}

Scalar Tensor::at(std::initializer_list<std::size_t> index) const {
  const auto& s = shape();
  if (index.size() != s.size()) throw ShapeError("index rank mismatch for " + shape_str(s));
  std::size_t flat = 0, k = 0;
  for (auto i : index) {
    if (i >= s[k]) throw ShapeError("index out of range for " + shape_str(s));
    flat = flat * s[k++] + i;
  }
  return node_->data[flat];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  if (!node_) throw ShapeError("undefined tensor");
  node_->requires_grad = on;
  if (!on) node_->grad.clear();
  return *this;
}

std::span<const Scalar> Tensor::grad() const {
  if (!node_) return {};
  return node_->grad;
}

std::span<Scalar> Tensor::mutable_grad() {
  if (!node_) throw ShapeError("undefined tensor");
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_ && !node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), Scalar(0));
}

void Tensor::backward() const {
  if (!node_) throw ShapeError("backward on undefined tensor");
  if (numel() != 1) throw ShapeError("backward needs a scalar loss, got shape " + shape_str(shape()));
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order (parents before children).
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      auto* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  for (auto* n : order) {
    if (!n->is_leaf()) n->grad.assign(n->data.size(), Scalar(0));
  }
  node_->ensure_grad();
  node_->grad[0] += Scalar(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto* n = *it;
    if (!n->is_leaf() && n->backward) n->backward(*n);
  }
  // Intermediate grads are scratch space.
  for (auto* n : order) {
    if (!n->is_leaf()) {
      n->grad.clear();
      n->grad.shrink_to_fit();
    }
  }
}

Tensor Tensor::detach() const {
  if (!node_) return {};
  return Tensor(node_->shape, node_->data, false);
}

Tensor Tensor::clone() const {
  if (!node_) return {};
  return Tensor(node_->shape, node_->data, node_->requires_grad);
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_mode_enabled() { return g_grad_enabled; }

namespace detail {

void require_finite(const std::vector<Scalar>& values, const char* op) {
  for (auto v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite value produced by ") + op);
  }
}

Tensor make_result(const char* op, Shape shape, std::vector<Scalar> data, std::vector<Tensor> inputs,
                   BackwardFn backward, bool check_finite) {
  if (check_finite) require_finite(data, op);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;
  bool track = false;
  if (g_grad_enabled) {
    for (const auto& t : inputs) track = track || t.requires_grad();
  }
  if (track) {
    node->requires_grad = true;
    node->parents.reserve(inputs.size());
    for (const auto& t : inputs) node->parents.push_back(t.node());
    node->backward = std::move(backward);
  }
  return Tensor::from_node(std::move(node));
}

Scalar* parent_grad(Node& self, std::size_t i) {
  auto& p = *self.parents[i];
  if (!p.requires_grad) return nullptr;
  p.ensure_grad();
  return p.grad.data();
}

}  // namespace detail
}  // namespace ctxdit
