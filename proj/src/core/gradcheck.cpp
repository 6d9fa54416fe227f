#include "fairseg/gradcheck.hpp"

#include <cmath>

#include "fairseg/error.hpp"

namespace fairseg {

void validate_grad_slot(const GradSlot& slot, const ParamSet& params) {
  require(std::isfinite(slot.value), ErrorKind::Dimension, "loss value is not finite");
  for (const auto& block : params) {
    const auto it = slot.grads.find(block.name);
    require(it != slot.grads.end(), ErrorKind::Dimension, "missing gradient for " + block.name);
    require(it->second.size() == block.size(), ErrorKind::Dimension,
            "gradient shape mismatch for " + block.name);
    for (double g : it->second)
      require(std::isfinite(g), ErrorKind::Dimension, "non-finite gradient in " + block.name);
  }
}

GradCheckResult finite_diff_check(const DifferentiableOp& loss, ParamSet params,
                                  double epsilon) {
  require(epsilon >= 1e-8 && epsilon <= 1e-4, ErrorKind::Spec,
          "finite_diff_check epsilon must lie in [1e-8, 1e-4]");
  const GradSlot analytic = loss(params);
  const GradSlot again = loss(params);
  if (analytic.value != again.value || analytic.value_residual != again.value_residual)
    fail(ErrorKind::Determinism, "loss evaluated twice at the same point gave different values");
  validate_grad_slot(analytic, params);

  GradCheckResult result;
  for (auto& block : params) {
    const auto& grad = analytic.grads.at(block.name);
    for (std::size_t i = 0; i < block.size(); ++i) {
      const double saved = block.values[i];
      block.values[i] = saved + epsilon;
      const GradSlot plus = loss(params);
      block.values[i] = saved - epsilon;
      const GradSlot minus = loss(params);
      block.values[i] = saved;

      const double delta = (plus.value - minus.value) + (plus.value_residual - minus.value_residual);
      const double fd = delta / (2.0 * epsilon);
      const double err =
          std::abs(grad[i] - fd) / std::max(1e-12, std::abs(grad[i]) + std::abs(fd));
      ++result.coordinates;
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_block = block.name;
        result.worst_index = i;
      }
    }
  }
  return result;
}

}  // namespace fairseg
