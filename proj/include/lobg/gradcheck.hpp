#pragma once

#include <functional>

#include "lobg/tensor.hpp"

namespace lobg {

// Central-difference verification of reverse-mode gradients.
//
// The returned value is the worst coordinate-wise relative error
//   |analytic - central| / (|analytic| + |central| + 1e-12).
//
// `f` must rebuild its graph on every call (define-by-run) and return a scalar.
double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h = 1e-5);

// Same check for a leaf already captured inside `f` (a model parameter, a
// prompt token). The leaf's values are perturbed in place and restored.
double finite_diff_check_leaf(const std::function<Tensor()>& f, Tensor leaf, double h = 1e-5);

}  // namespace lobg
