#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ctxdit/errors.hpp"

namespace ctxdit {

#ifdef CTXDIT_FLOAT32
using Scalar = float;
#else
using Scalar = double;
#endif

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// One vertex of the autodiff graph. `backward` reads `grad` and accumulates
// into the parents' grads.
struct Node {
  Shape shape;
  std::vector<Scalar> data;
  std::vector<Scalar> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void ensure_grad();
  bool is_leaf() const { return parents.empty(); }
};

}  // namespace detail

/// Handle to a dense row-major array with optional gradient tracking.
///
/// Copies share storage (like a reference-counted view); use `clone()` for a
/// deep copy. Results of ops are immutable; only leaves may be written through
/// `mutable_data()`, which is how optimizers update parameters.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<Scalar> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, Scalar value, bool requires_grad = false);
  static Tensor scalar(Scalar value, bool requires_grad = false);
  static Tensor eye(std::size_t n);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  /// Negative indices count from the back.
  std::size_t dim(std::ptrdiff_t i) const;
  std::size_t numel() const;

  std::span<const Scalar> data() const;
  std::span<Scalar> mutable_data();
  Scalar item() const;
  Scalar at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);
  /// Empty when the tensor does not track gradients or none has flowed yet.
  std::span<const Scalar> grad() const;
  std::span<Scalar> mutable_grad();
  void zero_grad();

  /// Reverse-mode sweep from a scalar. Leaf grads accumulate across calls.
  void backward() const;

  /// Copy of the values without graph history.
  Tensor detach() const;
  /// Deep copy that keeps the requires_grad flag (as a fresh leaf).
  Tensor clone() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  static Tensor from_node(std::shared_ptr<detail::Node> node);

 private:
  std::shared_ptr<detail::Node> node_;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Thread-local switch: when disabled, ops compute values but record no graph.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_mode_enabled();

}  // namespace ctxdit
