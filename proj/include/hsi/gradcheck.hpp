#pragma once

#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hsi/autograd.hpp"

namespace hsi {

struct GradCheckReport {
  double max_rel_error = 0.0;
  bool pass = true;
  std::size_t coordinates = 0;
  // Location of the worst coordinate.
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

using ScalarFn = std::function<VarD(std::span<const VarD>)>;

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h against the taped
/// gradient for every coordinate of every input. Relative error uses
/// max(|analytic|, |numeric|, 1e-8) as denominator.
GradCheckReport finite_diff_check(const ScalarFn& f, const std::vector<TensorD>& inputs, double h, double tol);

GradCheckReport finite_diff_check(const std::function<VarD(const VarD&)>& f, const TensorD& x, double h, double tol);

/// Checks the gradient of `loss_of(weights)` with respect to every parameter
/// `weights.for_each_param` visits.
template <class W, class F>
GradCheckReport check_param_gradients(const W& weights, F&& loss_of, double h, double tol) {
  std::vector<TensorD> values;
  W probe = weights;
  probe.for_each_param([&](std::string_view, VarD& p) { values.push_back(p.value()); });
  const ScalarFn f = [&](std::span<const VarD> vs) {
    W w = weights;
    std::size_t i = 0;
    w.for_each_param([&](std::string_view, VarD& p) { p = vs[i++]; });
    return loss_of(w);
  };
  return finite_diff_check(f, values, h, tol);
}

struct GradCheckRow {
  std::string name;
  GradCheckReport report;
};

/// Every differentiable op plus the transfer composites, each on seeded
/// inputs of at most 64 elements in total.
std::vector<GradCheckRow> gradient_suite(std::uint64_t seed, double tol, double h = 1e-3);

}  // namespace hsi
