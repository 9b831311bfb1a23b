#pragma once

#include <functional>

#include "mpl/tensor.hpp"

namespace mpl {

// Central-difference gradient verification. `fn` evaluates the scalar loss at
// the given parameters and, when `grads` is non-null, fills analytic
// gradients for every parameter. The function must be deterministic.
struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
  i64 worst_index = -1;
};

GradCheckResult grad_check(
    const std::function<double(const ParamSet&, ParamSet* grads)>& fn,
    ParamSet& params, double h);

}  // namespace mpl
