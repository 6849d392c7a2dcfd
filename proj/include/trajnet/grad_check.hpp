#pragma once

#include <functional>
#include <span>
#include <vector>

#include "trajnet/autodiff.hpp"

namespace trajnet {

struct GradCheckReport {
  std::vector<double> analytic;
  std::vector<double> numeric;
  std::vector<double> rel_error;
  double max_rel_error = 0.0;
  bool passed = false;
};

/// Compare `analytic` gradients against central differences
/// (f(x+h) - f(x-h)) / 2h taken by perturbing each coordinate of `inputs`
/// in place. Relative error uses max(|analytic|, |numeric|, 1e-8) as the
/// denominator. Inputs are restored before returning.
GradCheckReport check_gradient(std::span<Tensor* const> inputs,
                               std::span<const Tensor> analytic,
                               const std::function<double()>& eval, double h, double tol);

using TapeFunction = std::function<Var(Tape&, std::span<const Var>)>;

/// Taped gradient of a scalar function of several tensors, checked against
/// central differences. h must lie in [1e-6, 1e-4].
GradCheckReport grad_check(const TapeFunction& f, std::vector<Tensor> inputs, double h = 1e-5,
                           double tol = 1e-4);

GradCheckReport grad_check(const std::function<Var(Tape&, const Var&)>& f, const Tensor& x,
                           double h = 1e-5, double tol = 1e-4);

}  // namespace trajnet
