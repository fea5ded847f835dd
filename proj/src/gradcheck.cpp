#include "hsi/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace hsi {

namespace {
double eval(const ScalarFn& f, const std::vector<TensorD>& inputs) {
  std::vector<VarD> vs(inputs.begin(), inputs.end());
  const VarD y = f(vs);
  if (y.value().numel() != 1) throw ShapeError("finite_diff_check: function must return a scalar, got " + y.shape().str());
  return y.value()[0];
}
}  // namespace

GradCheckReport finite_diff_check(const ScalarFn& f, const std::vector<TensorD>& inputs, double h, double tol) {
  if (!(h > 0)) throw ArgumentError("finite_diff_check: h must be positive");
  TapeD tape;
  std::vector<VarD> leaves;
  leaves.reserve(inputs.size());
  for (const auto& x : inputs) leaves.push_back(tape.leaf(x));
  const VarD y = f(leaves);
  const GradientMap<double> grads = tape.backward(y);

  GradCheckReport rep;
  std::vector<TensorD> probe = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const TensorD analytic = grads.of(leaves[k]);
    for (std::size_t i = 0; i < inputs[k].numel(); ++i) {
      const double x0 = inputs[k][i];
      probe[k][i] = x0 + h;
      const double fp = eval(f, probe);
      probe[k][i] = x0 - h;
      const double fm = eval(f, probe);
      probe[k][i] = x0;
      const double num = (fp - fm) / (2.0 * h);
      const double ana = analytic[i];
      const double rel = std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), 1e-8});
      ++rep.coordinates;
      if (rel > rep.max_rel_error || rep.coordinates == 1) {
        rep.max_rel_error = std::max(rep.max_rel_error, rel);
        rep.worst_input = k;
        rep.worst_index = i;
        rep.worst_analytic = ana;
        rep.worst_numeric = num;
      }
    }
  }
  rep.pass = std::isfinite(rep.max_rel_error) && rep.max_rel_error <= tol;
  return rep;
}

GradCheckReport finite_diff_check(const std::function<VarD(const VarD&)>& f, const TensorD& x, double h, double tol) {
  return finite_diff_check([&](std::span<const VarD> vs) { return f(vs[0]); }, std::vector<TensorD>{x}, h, tol);
}

}  // namespace hsi
