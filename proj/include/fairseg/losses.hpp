#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "fairseg/gradcheck.hpp"
#include "fairseg/grid.hpp"
#include "fairseg/prototypes.hpp"

namespace fairseg {

// Empirical pixel distribution of the supervised classes and the importance
// weights q(c)/p(c) against a uniform ideal q.
struct ClassDistribution {
  std::map<std::uint16_t, std::uint64_t> pixel_counts;
  double smoothing = 1.0;
  double w_min = 0.1;
  double w_max = 10.0;

  static ClassDistribution from_labels(const std::vector<const LabelMap*>& labels,
                                       const std::vector<const std::vector<std::uint8_t>*>& masks,
                                       const std::vector<std::uint16_t>& classes);

  std::map<std::uint16_t, double> probabilities() const;
  std::map<std::uint16_t, double> raw_weights() const;
  // Clamped weights as a dense vector over ids 0..num_outputs-1; classes
  // outside the distribution weigh 1.
  std::vector<double> weight_table(std::size_t num_outputs) const;
};

struct ConsConfig {
  double sigma1 = 0.1;  // colour kernel scale
  double sigma2 = 0.5;  // prediction kernel scale (literal form only)
  std::size_t window = 3;
  // Literal kernel sum exp(-|dx|^2/2s1^2 - |dy|^2/2s2^2) instead of the
  // colour-weighted squared prediction difference.
  bool literal = false;

  void validate() const;
};

struct LossWeights {
  double lambda_cluster = 1e-3;
  double lambda_cons = 1e-2;
  double lambda_distill = 1e-1;
};

// Mean over masked pixels of w(label) * -log softmax(logits)[label].
// Gradient block: "logits". Empty `weights` means unit weights.
GradSlot weighted_ce(const Grid& logits, const LabelMap& labels,
                     const std::vector<std::uint8_t>& mask, const std::vector<double>& weights);

struct ClusterLossResult {
  GradSlot slot;  // gradient block: "features"
  std::size_t pixels = 0;          // contributing pixels
  std::size_t skipped_terms = 0;   // references to uninitialized prototypes
};

// Mean over labeled pixels of sum_c D(f, p_c), D = l(f,p_c) for the pixel's
// own class and max(0, margin - l(f,p_c)) otherwise. Prototypes are constants.
ClusterLossResult cluster_loss(const Grid& features, const LabelMap& labels,
                               const PrototypeBank& protos, const ClusterConfig& cfg);

// Colour-weighted neighbour prediction smoothness over a window; gradient
// block "probs".
GradSlot cons_loss(const Grid& image, const Grid& probs, const ConsConfig& cfg);
// Same loss chained through softmax; gradient block "logits".
GradSlot cons_loss_from_logits(const Grid& image, const Grid& logits, const ConsConfig& cfg);

// Mean per-pixel Euclidean distance to the frozen previous-step features;
// gradient block "features".
GradSlot distill_loss(const Grid& features_now, const Grid& features_prev);

struct Prop1Report {
  std::size_t pixels = 0;
  double min_slack = 0.0;  // min over pixels of rhs - lhs
  double mean_lhs = 0.0;
  double mean_rhs = 0.0;
  double max_lhs = 0.0;
  double max_rhs = 0.0;
  bool holds = true;
};

// Per pixel: lhs = l(f_now, f_prev), rhs = mean_c [l(f_now,p_c) + l(p_c,f_prev)].
Prop1Report verify_proposition1(const Grid& features_now, const Grid& features_prev,
                                const std::vector<std::vector<double>>& prototypes);
Prop1Report verify_proposition1(const Grid& features_now, const Grid& features_prev,
                                const PrototypeBank& protos);

}  // namespace fairseg
