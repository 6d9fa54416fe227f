#include "fairseg/numerics.hpp"

#include <algorithm>
#include <cmath>

#include "fairseg/error.hpp"

namespace fairseg {

double euclidean(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorKind::Dimension,
          "euclidean: lengths " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return std::sqrt(sum);
}

void softmax_into(std::span<const double> logits, std::span<double> out) {
  require(!logits.empty(), ErrorKind::Dimension, "softmax of empty vector");
  require(out.size() == logits.size(), ErrorKind::Dimension, "softmax output size mismatch");
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    out[k] = std::exp(logits[k] - peak);
    total += out[k];
  }
  for (double& v : out) v /= total;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  softmax_into(logits, out);
  return out;
}

void softmax_backward(std::span<const double> probs, std::span<const double> dprobs,
                      std::span<double> dlogits) {
  require(probs.size() == dprobs.size() && probs.size() == dlogits.size(),
          ErrorKind::Dimension, "softmax_backward size mismatch");
  double dot = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) dot += probs[k] * dprobs[k];
  for (std::size_t k = 0; k < probs.size(); ++k) dlogits[k] = probs[k] * (dprobs[k] - dot);
}

std::pair<double, double> CompensatedSum::divided_by(double divisor) const {
  const double hi_sum = sum_ + comp_;
  const double lo_sum = std::abs(sum_) >= std::abs(comp_) ? comp_ - (hi_sum - sum_)
                                                          : sum_ - (hi_sum - comp_);
  const double q = hi_sum / divisor;
  const double rem = std::fma(-q, divisor, hi_sum);
  return {q, (rem + lo_sum) / divisor};
}

}  // namespace fairseg
