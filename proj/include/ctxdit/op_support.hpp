#pragma once

// Helpers for defining differentiable ops outside ops.cpp (rotary, codec, ...).

#include <functional>
#include <memory>
#include <vector>

#include "ctxdit/tensor.hpp"

namespace ctxdit::detail {

using BackwardFn = std::function<void(Node& self)>;

/// Wraps computed values into a result tensor. When grad mode is on and any
/// input requires grad, records `inputs` as parents and installs `backward`.
Tensor make_result(const char* op, Shape shape, std::vector<Scalar> data,
                   std::vector<Tensor> inputs, BackwardFn backward,
                   bool check_finite = true);

/// Grad buffer of a parent, allocated on first use; nullptr when the parent
/// does not track gradients.
Scalar* parent_grad(Node& self, std::size_t i);

void require_finite(const std::vector<Scalar>& values, const char* op);

}  // namespace ctxdit::detail
