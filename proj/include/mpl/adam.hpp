#pragma once

#include "mpl/tensor.hpp"

namespace mpl {

// Adam with bias correction over a named parameter set.
struct AdamState {
  ParamSet m;
  ParamSet v;
  i64 t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  explicit AdamState(const ParamSet& params)
      : m(params.zeros_like()), v(params.zeros_like()) {}
};

void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state,
               double lr);

}  // namespace mpl
