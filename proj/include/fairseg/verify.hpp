#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fairseg/gradcheck.hpp"
#include "fairseg/losses.hpp"
#include "fairseg/model.hpp"
#include "fairseg/rng.hpp"

namespace fairseg::verify {

Grid random_grid(Rng& rng, std::size_t h, std::size_t w, std::size_t c, double lo, double hi);

struct CeInstance {
  Grid logits;
  LabelMap labels;
  std::vector<std::uint8_t> mask;
  std::vector<double> weights;
};
CeInstance random_ce_instance(Rng& rng, std::size_t h, std::size_t w, std::size_t k);

struct ClusterInstance {
  Grid features;
  LabelMap labels;
  PrototypeBank protos{0};
  ClusterConfig cfg;
};
ClusterInstance random_cluster_instance(Rng& rng, std::size_t h, std::size_t w, std::size_t dim,
                                        std::size_t classes);

struct ConsInstance {
  Grid image;
  Grid probs;
};
ConsInstance random_cons_instance(Rng& rng, std::size_t h, std::size_t w, std::size_t k);

// Losses known to the gradient suite, in table order.
const std::vector<std::string>& gradcheck_losses();

// One random 8x8x4 instance of `loss` checked by central differences. A
// non-empty `corrupt` scales that loss's analytic gradient by 1.001 first.
GradCheckResult gradcheck_instance(const std::string& loss, Rng& rng, double eps = 1e-6,
                                   bool corrupt = false);

// Whole encoder + head under CE, cluster, consistency and distillation.
GradCheckResult gradcheck_model_stack(Rng& rng, const ModelConfig& cfg, std::size_t h,
                                      std::size_t w, std::size_t classes, double eps = 1e-6,
                                      bool corrupt = false);

struct GradcheckRow {
  std::string loss;
  std::size_t instances = 0;
  double worst = 0.0;
  bool pass = false;
};

struct GradcheckOptions {
  std::size_t instances = 20;
  std::uint64_t seed = 1;
  double epsilon = 1e-6;
  double tolerance = 1e-5;
  bool include_model = true;
  std::optional<std::string> corrupt;
};

std::vector<GradcheckRow> run_gradcheck_suite(const GradcheckOptions& options);

Prop1Report random_prop1_trial(Rng& rng, std::size_t dim, std::size_t num_protos);

struct Prop1Summary {
  std::size_t trials = 0;
  std::size_t held = 0;
  double min_slack = 0.0;
  double mean_lhs = 0.0;
  double mean_rhs = 0.0;
  double max_lhs = 0.0;
  double max_rhs = 0.0;
  bool all_hold() const { return trials > 0 && held == trials; }
};

// Trials spread round-robin over every (dim, classes) combination.
Prop1Summary run_prop1_suite(std::size_t trials, const std::vector<std::size_t>& dims,
                             const std::vector<std::size_t>& classes, std::uint64_t seed);

}  // namespace fairseg::verify
