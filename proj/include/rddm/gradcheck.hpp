#pragma once

#include <functional>
#include <vector>

#include "rddm/tensor.hpp"

namespace rddm {

/// Compares the reverse-mode gradient of a scalar function against central
/// differences. Returns max over coordinates of
/// |analytic - numeric| / max(1, |analytic|).
double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double step);

/// Same check over a set of parameter leaves that `f` closes over. Parameter
/// values are perturbed in place and restored before returning; their grads
/// are overwritten.
double finite_diff_check(const std::function<Tensor()>& f, std::vector<Tensor>& params, double step);

}  // namespace rddm
