#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace fairseg {

struct ParamBlock {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> values;

  std::size_t size() const noexcept { return values.size(); }
};

using ParamSet = std::vector<ParamBlock>;

// Loss value plus gradients keyed by parameter-block name.
struct GradSlot {
  double value = 0.0;
  // Low-order part of the loss beyond `value` when the op tracks it; lets the
  // checker difference nearby evaluations below double rounding.
  double value_residual = 0.0;
  std::map<std::string, std::vector<double>> grads;
};

using DifferentiableOp = std::function<GradSlot(const ParamSet&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_block;
  std::size_t worst_index = 0;
  std::size_t coordinates = 0;
};

// Central differences against the analytic gradient; error per coordinate is
// |ga - gf| / max(1e-12, |ga| + |gf|). Throws Determinism if two evaluations
// at the same point disagree.
GradCheckResult finite_diff_check(const DifferentiableOp& loss, ParamSet params,
                                  double epsilon = 1e-6);

// Checks a GradSlot against the declared block shapes.
void validate_grad_slot(const GradSlot& slot, const ParamSet& params);

}  // namespace fairseg
