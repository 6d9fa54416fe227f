#include <algorithm>
#include <cmath>
#include <tuple>

#include "fairseg/error.hpp"
#include "fairseg/losses.hpp"
#include "fairseg/numerics.hpp"

namespace fairseg {

ClassDistribution ClassDistribution::from_labels(
    const std::vector<const LabelMap*>& labels,
    const std::vector<const std::vector<std::uint8_t>*>& masks,
    const std::vector<std::uint16_t>& classes) {
  require(labels.size() == masks.size(), ErrorKind::Dimension, "labels/masks count mismatch");
  ClassDistribution dist;
  for (auto c : classes) dist.pixel_counts[c] = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto& l = labels[i]->data;
    const auto& m = *masks[i];
    for (std::size_t p = 0; p < l.size(); ++p) {
      if (!m[p]) continue;
      const auto it = dist.pixel_counts.find(l[p]);
      if (it != dist.pixel_counts.end()) ++it->second;
    }
  }
  return dist;
}

std::map<std::uint16_t, double> ClassDistribution::probabilities() const {
  std::map<std::uint16_t, double> out;
  if (pixel_counts.empty()) return out;
  double total = 0.0;
  for (const auto& [c, n] : pixel_counts) total += static_cast<double>(n) + smoothing;
  require(total > 0.0, ErrorKind::Unavailable, "empty class distribution");
  for (const auto& [c, n] : pixel_counts) out[c] = (static_cast<double>(n) + smoothing) / total;
  return out;
}

std::map<std::uint16_t, double> ClassDistribution::raw_weights() const {
  const auto p = probabilities();
  const double q = p.empty() ? 0.0 : 1.0 / static_cast<double>(p.size());
  std::map<std::uint16_t, double> out;
  for (const auto& [c, pc] : p) out[c] = pc > 0.0 ? q / pc : w_max;
  return out;
}

std::vector<double> ClassDistribution::weight_table(std::size_t num_outputs) const {
  std::vector<double> table(num_outputs, 1.0);
  for (const auto& [c, w] : raw_weights())
    if (c < num_outputs) table[c] = std::clamp(w, w_min, w_max);
  return table;
}

GradSlot weighted_ce(const Grid& logits, const LabelMap& labels,
                     const std::vector<std::uint8_t>& mask, const std::vector<double>& weights) {
  require(labels.pixels() == logits.pixels() && mask.size() == logits.pixels(),
          ErrorKind::Dimension, "weighted_ce: label/mask shape mismatch");
  const std::size_t k = logits.channels();
  require(weights.empty() || weights.size() == k, ErrorKind::Dimension,
          "weighted_ce: weight table size mismatch");

  GradSlot slot;
  auto& grad = slot.grads["logits"];
  grad.assign(logits.size(), 0.0);
  std::size_t count = 0;
  CompensatedSum total;
  std::vector<double> probs(k);
  for (std::size_t i = 0; i < logits.pixels(); ++i) {
    const std::uint16_t y = labels.data[i];
    if (!mask[i] || y == kIgnoreLabel) continue;
    require(y < k, ErrorKind::Label,
            "label " + std::to_string(y) + " outside head range 0.." + std::to_string(k - 1));
    const auto z = logits.pixel(i);
    const double peak = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (std::size_t c = 0; c < k; ++c) sum += std::exp(z[c] - peak);
    const double lse = peak + std::log(sum);
    const double w = weights.empty() ? 1.0 : weights[y];
    total.add(w * (lse - z[y]));
    double* g = grad.data() + i * k;
    for (std::size_t c = 0; c < k; ++c) g[c] = w * std::exp(z[c] - lse);
    g[y] -= w;
    ++count;
  }
  if (count == 0) return slot;
  const double inv = 1.0 / static_cast<double>(count);
  std::tie(slot.value, slot.value_residual) = total.divided_by(static_cast<double>(count));
  for (double& g : grad) g *= inv;
  return slot;
}

}  // namespace fairseg
