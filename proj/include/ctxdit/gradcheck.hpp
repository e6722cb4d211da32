#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ctxdit/tensor.hpp"

namespace ctxdit {

struct GradCheckReport {
  struct Entry {
    std::string name;
    double max_rel_error = 0;
    std::size_t worst_index = 0;
    double analytic = 0;
    double numeric = 0;
  };
  std::vector<Entry> per_param;
  double max_rel_error = 0;
  double tolerance = 0;
  bool pass = false;
};

/// Compares analytic gradients of the scalar `f()` with respect to each leaf in
/// `params` against central differences (f(θ+h) - f(θ-h)) / 2h.
/// Relative error uses max(|analytic|, |numeric|, floor) as the denominator;
/// the floor keeps gradients that are exactly zero (but measured with rounding
/// noise) from reporting a relative error of 1.
/// Throws DeterminismError if two evaluations at the same θ differ.
GradCheckReport finite_diff_check(const std::function<Tensor()>& f, std::vector<NamedTensor> params,
                                  double h = 1e-5, double tol = 1e-6, double floor = 1e-12);

GradCheckReport finite_diff_check(const std::function<Tensor()>& f, const std::vector<Tensor>& params,
                                  double h = 1e-5, double tol = 1e-6);

}  // namespace ctxdit
