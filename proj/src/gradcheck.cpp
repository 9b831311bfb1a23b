#include "mpl/gradcheck.hpp"

#include <cmath>

namespace mpl {

GradCheckResult grad_check(
    const std::function<double(const ParamSet&, ParamSet* grads)>& fn,
    ParamSet& params, double h) {
  ParamSet analytic = params.zeros_like();
  fn(params, &analytic);

  GradCheckResult res;
  for (i64 pi = 0; pi < params.size(); ++pi) {
    auto& [name, tensor] = params.item(pi);
    const Tensor& ga = analytic.get(name);
    for (i64 i = 0; i < tensor.numel(); ++i) {
      const double orig = tensor[i];
      tensor[i] = orig + h;
      const double fp = fn(params, nullptr);
      tensor[i] = orig - h;
      const double fm = fn(params, nullptr);
      tensor[i] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = ga[i];
      const double rel = std::abs(a - numeric) /
                         std::max({std::abs(a), std::abs(numeric), 1e-8});
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst_param = name;
        res.worst_index = i;
      }
    }
  }
  return res;
}

}  // namespace mpl
