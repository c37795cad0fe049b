#include "emoalign/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "emoalign/errors.hpp"

namespace emoalign::numerics {

GradCheckResult gradient_check(const std::function<Tensor()>& f, ParameterStore& point,
                               const GradCheckOptions& options) {
  if (!(options.eps > 0.0)) throw ContractError("gradient_check: eps must be positive");
  point.zero_grad();
  Tensor loss = f();
  if (loss.numel() != 1) throw DimensionError("gradient_check: f must return a scalar");
  loss.backward();

  std::map<std::string, std::vector<Real>> analytic;
  for (const auto& name : point.trainable()) {
    const auto g = point.get(name).grad();
    analytic[name].assign(g.begin(), g.end());
  }

  GradCheckResult result;
  NoGradGuard no_grad;
  for (const auto& name : point.trainable()) {
    Tensor& p = point.get(name);
    auto w = p.mutable_data();
    const std::size_t n = w.size();
    const std::size_t stride =
        options.max_per_param == 0 || n <= options.max_per_param ? 1 : (n + options.max_per_param - 1) / options.max_per_param;
    for (std::size_t i = 0; i < n; i += stride) {
      const Real orig = w[i];
      w[i] = orig + options.eps;
      const Real up = f().item();
      w[i] = orig - options.eps;
      const Real down = f().item();
      w[i] = orig;
      const Real numeric = (up - down) / (2.0 * options.eps);
      const Real a = analytic[name][i];
      const Real abs_err = std::abs(a - numeric);
      const Real rel = abs_err / std::max({std::abs(a), std::abs(numeric), options.floor});
      ++result.checked;
      result.max_abs_error = std::max(result.max_abs_error, abs_err);
      if (rel >= result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_param = name;
        result.worst_index = i;
      }
    }
  }
  return result;
}

}  // namespace emoalign::numerics
