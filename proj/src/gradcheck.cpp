#include "ctxdit/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace ctxdit {

GradCheckReport finite_diff_check(const std::function<Tensor()>& f, std::vector<NamedTensor> params, double h,
                                  double tol, double floor) {
  if (!(h > 0)) throw ConfigError("finite_diff_check: h must be positive");
  for (auto& p : params) {
    if (!p.tensor.node() || !p.tensor.node()->is_leaf())
      throw Error("finite_diff_check: parameter '" + p.name + "' is not a leaf tensor");
    p.tensor.set_requires_grad(true);
    p.tensor.zero_grad();
  }

  Tensor loss = f();
  double f0 = loss.item();
  loss.backward();
  std::vector<std::vector<Scalar>> analytic;
  for (auto& p : params) {
    auto g = p.tensor.grad();
    analytic.emplace_back(g.begin(), g.end());
    analytic.back().resize(p.tensor.numel(), 0);
  }

  auto eval = [&f] {
    NoGradGuard guard;
    return static_cast<double>(f().item());
  };
  double again = eval();
  if (again != f0)
    throw DeterminismError("finite_diff_check: f is not deterministic (" + std::to_string(f0) + " vs " +
                           std::to_string(again) + ")");

  GradCheckReport report;
  report.tolerance = tol;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto data = params[pi].tensor.mutable_data();
    GradCheckReport::Entry entry{params[pi].name, 0, 0, 0, 0};
    for (std::size_t i = 0; i < data.size(); ++i) {
      Scalar saved = data[i];
      data[i] = saved + static_cast<Scalar>(h);
      double fp = eval();
      data[i] = saved - static_cast<Scalar>(h);
      double fm = eval();
      data[i] = saved;
      double numeric = (fp - fm) / (2 * h);
      double a = analytic[pi][i];
      double denom = std::max({std::abs(a), std::abs(numeric), floor});
      double rel = std::abs(a - numeric) / denom;
      if (rel > entry.max_rel_error) {
        entry.max_rel_error = rel;
        entry.worst_index = i;
        entry.analytic = a;
        entry.numeric = numeric;
      }
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.per_param.push_back(std::move(entry));
  }
  report.pass = report.max_rel_error < tol;
  return report;
}

GradCheckReport finite_diff_check(const std::function<Tensor()>& f, const std::vector<Tensor>& params, double h,
                                  double tol) {
  std::vector<NamedTensor> named;
  for (std::size_t i = 0; i < params.size(); ++i) named.push_back({"param" + std::to_string(i), params[i]});
  return finite_diff_check(f, std::move(named), h, tol);
}

}  // namespace ctxdit
