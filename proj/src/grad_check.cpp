#include "trajnet/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace trajnet {

namespace {

void require_step(double h) {
  if (!(h >= 1e-6 && h <= 1e-4)) {
    throw ContractError("grad_check: step h must lie in [1e-6, 1e-4], got " + std::to_string(h));
  }
}

}  // namespace

GradCheckReport check_gradient(std::span<Tensor* const> inputs,
                               std::span<const Tensor> analytic,
                               const std::function<double()>& eval, double h, double tol) {
  require_step(h);
  if (inputs.size() != analytic.size()) throw ContractError("check_gradient: input/gradient count mismatch");
  GradCheckReport report;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Tensor& x = *inputs[i];
    require_same_shape(x, analytic[i], "check_gradient");
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double saved = x[j];
      x[j] = saved + h;
      const double up = eval();
      x[j] = saved - h;
      const double down = eval();
      x[j] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[i][j];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double err = std::abs(a - numeric) / denom;
      report.analytic.push_back(a);
      report.numeric.push_back(numeric);
      report.rel_error.push_back(err);
      report.max_rel_error = std::max(report.max_rel_error, err);
    }
  }
  report.passed = report.max_rel_error < tol;
  return report;
}

GradCheckReport grad_check(const TapeFunction& f, std::vector<Tensor> inputs, double h, double tol) {
  require_step(h);
  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& x : inputs) vars.push_back(tape.variable(x));
    Var out = f(tape, vars);
    tape.backward(out);
    for (const auto& v : vars) analytic.push_back(v.grad());
  }
  auto eval = [&] {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& x : inputs) vars.push_back(tape.constant(x));
    return f(tape, vars).value().item();
  };
  std::vector<Tensor*> ptrs;
  for (auto& x : inputs) ptrs.push_back(&x);
  return check_gradient(ptrs, analytic, eval, h, tol);
}

GradCheckReport grad_check(const std::function<Var(Tape&, const Var&)>& f, const Tensor& x,
                           double h, double tol) {
  return grad_check([&](Tape& t, std::span<const Var> v) { return f(t, v[0]); },
                    std::vector<Tensor>{x}, h, tol);
}

}  // namespace trajnet
