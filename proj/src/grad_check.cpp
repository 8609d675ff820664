#include "loftr/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace loftr::LOFTR_PRECISION {

namespace {

double evaluate(const std::function<Tensor()>& f) {
  NoTapeScope no_tape;
  const Tensor y = f();
  if (y.numel() != 1) throw ContractError("grad_check: function must return a scalar");
  const double v = y.item();
  if (!std::isfinite(v)) throw EvaluationError("grad_check: function value is not finite");
  return v;
}

}  // namespace

GradCheckResult grad_check(const std::function<Tensor()>& f, std::vector<Tensor> params, real eps) {
  for (Tensor& p : params) {
    if (p.impl()->tape != nullptr) throw ContractError("grad_check: parameters must be leaves");
    p.set_requires_grad(true);
    p.zero_grad();
  }
  std::vector<std::vector<real>> analytic;
  {
    Tape tape;
    TapeScope scope(tape);
    const Tensor y = f();
    if (y.numel() != 1) throw ContractError("grad_check: function must return a scalar");
    if (!std::isfinite(y.item())) throw EvaluationError("grad_check: function value is not finite");
    tape.backward(y);
    for (const Tensor& p : params) analytic.push_back(p.grad());
  }
  GradCheckResult result;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto values = params[pi].mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const real original = values[i];
      const real up = original + eps, down = original - eps;
      values[i] = up;
      const double plus = evaluate(f);
      values[i] = down;
      const double minus = evaluate(f);
      values[i] = original;
      // The stored step, not the nominal one, after rounding to `real`.
      const double numeric = (plus - minus) / (double(up) - double(down));
      const double a = analytic[pi][i];
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      ++result.components;
      if (err > result.max_rel_err || result.components == 1) {
        result.max_rel_err = std::max(result.max_rel_err, err);
        result.worst_parameter = pi;
        result.worst_index = i;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  for (Tensor& p : params) p.zero_grad();
  return result;
}

GradCheckResult grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, real eps) {
  Tensor leaf = x.detach();
  return grad_check([&] { return f(leaf); }, {leaf}, eps);
}

}  // namespace loftr::LOFTR_PRECISION
