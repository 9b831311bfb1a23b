#include "mpl/adam.hpp"

#include <cmath>

#include "mpl/kernels.hpp"

namespace mpl {

void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state,
               double lr) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    raise(Err::shape_mismatch, "adam_step: parameter/gradient/state sizes differ");
  }
  state.t += 1;
  const double bc1 = 1.0 / (1.0 - std::pow(state.beta1, double(state.t)));
  const double bc2 = 1.0 / (1.0 - std::pow(state.beta2, double(state.t)));
  for (i64 i = 0; i < params.size(); ++i) {
    auto& [pname, p] = params.item(i);
    const auto& [gname, g] = grads.item(i);
    auto& mt = state.m.item(i).second;
    auto& vt = state.v.item(i).second;
    if (pname != gname || !p.same_shape(g) || !p.same_shape(mt)) {
      raise(Err::shape_mismatch,
            strfmt("adam_step: parameter '%s' %s does not match gradient '%s' %s",
                   pname.c_str(), p.shape_str().c_str(), gname.c_str(),
                   g.shape_str().c_str()));
    }
    kernels::adam_update(p.data(), mt.data(), vt.data(), g.data(), p.numel(),
                         lr, state.beta1, state.beta2, state.eps, bc1, bc2);
  }
}

}  // namespace mpl
