#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fairseg/gradcheck.hpp"
#include "fairseg/grid.hpp"

namespace fairseg {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ModelConfig {
  std::size_t patch_size = 5;
  std::size_t feature_dim = 16;
  std::vector<std::size_t> hidden{64, 32};

  void validate() const;
  std::size_t input_dim() const { return patch_size * patch_size * 3; }
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct Dense {
  RowMatrix weight;  // out x in
  Eigen::VectorXd bias;

  friend bool operator==(const Dense& a, const Dense& b) {
    return a.weight.rows() == b.weight.rows() && a.weight.cols() == b.weight.cols() &&
           a.weight == b.weight && a.bias == b.bias;
  }
};

// Patch-MLP encoder (ReLU hidden layers, linear feature layer) plus a linear
// classifier head whose row 0 is background/unknown.
struct ModelParams {
  ModelConfig config;
  // hidden layers..., feature layer, head
  std::vector<Dense> layers;

  std::size_t num_hidden() const { return config.hidden.size(); }
  const Dense& feature_layer() const { return layers[num_hidden()]; }
  const Dense& head() const { return layers.back(); }
  Dense& head() { return layers.back(); }
  std::size_t num_outputs() const { return static_cast<std::size_t>(head().weight.rows()); }

  // Same layout, all zeros (gradient and momentum buffers).
  ModelParams zeros_like() const;
  std::vector<std::string> block_names() const;
  ParamSet to_blocks() const;
  void assign_blocks(const ParamSet& blocks);
  double squared_norm() const;
  bool all_finite() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

// Glorot-uniform weights, zero biases; deterministic in `seed`.
ModelParams init_model(const ModelConfig& config, std::size_t num_outputs, std::uint64_t seed);

// Appends `new_classes` head rows; existing rows are untouched.
void grow_head(ModelParams& params, std::size_t new_classes, std::uint64_t seed);

struct Prediction {
  Grid features;  // H x W x D
  Grid logits;    // H x W x K
  Grid probs;     // H x W x K
};

struct ForwardPass {
  Prediction prediction;
  // Layer inputs per pixel: [0] flattened patches, then post-ReLU activations.
  std::vector<RowMatrix> activations;
};

ForwardPass forward(const ModelParams& params, const Grid& image);

// Gradients of all parameters given upstream gradients on features and logits.
ModelParams backward(const ModelParams& params, const ForwardPass& pass,
                     const Grid& dfeatures, const Grid& dlogits);
GradSlot backward_slot(const ModelParams& params, const ForwardPass& pass,
                       const Grid& dfeatures, const Grid& dlogits);

// Flattened k x k x 3 neighbourhoods with reflect padding, one row per pixel.
RowMatrix extract_patches(const Grid& image, std::size_t patch_size);

std::vector<std::uint16_t> argmax_labels(const Grid& probs);

}  // namespace fairseg
