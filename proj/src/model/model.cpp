#include "fairseg/model.hpp"

#include <cmath>

#include "fairseg/error.hpp"
#include "fairseg/numerics.hpp"
#include "fairseg/rng.hpp"

namespace fairseg {

void ModelConfig::validate() const {
  require(patch_size % 2 == 1, ErrorKind::Config, "patch_size must be odd");
  require(feature_dim >= 1, ErrorKind::Config, "feature_dim must be positive");
  for (auto h : hidden) require(h >= 1, ErrorKind::Config, "hidden widths must be positive");
}

namespace {

void glorot_fill(RowMatrix& w, std::size_t row_begin, std::size_t fan_in, std::size_t fan_out,
                 Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (Eigen::Index r = static_cast<Eigen::Index>(row_begin); r < w.rows(); ++r)
    for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = rng.uniform(-bound, bound);
}

Dense make_dense(std::size_t in, std::size_t out, Rng& rng) {
  Dense d{RowMatrix(out, in), Eigen::VectorXd::Zero(static_cast<Eigen::Index>(out))};
  glorot_fill(d.weight, 0, in, out, rng);
  return d;
}

std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
  if (i < 0) i = -i;
  const auto last = static_cast<std::ptrdiff_t>(n) - 1;
  if (i > last) i = 2 * last - i;
  return static_cast<std::size_t>(i);
}

}  // namespace

ModelParams init_model(const ModelConfig& config, std::size_t num_outputs, std::uint64_t seed) {
  config.validate();
  require(num_outputs >= 1, ErrorKind::Config, "model needs at least one output");
  ModelParams p;
  p.config = config;
  std::size_t in = config.input_dim();
  for (std::size_t l = 0; l < config.hidden.size(); ++l) {
    Rng rng(derive_seed(seed, "layer", l));
    p.layers.push_back(make_dense(in, config.hidden[l], rng));
    in = config.hidden[l];
  }
  Rng frng(derive_seed(seed, "feature"));
  p.layers.push_back(make_dense(in, config.feature_dim, frng));
  p.layers.push_back(Dense{RowMatrix(0, config.feature_dim), Eigen::VectorXd(0)});
  grow_head(p, num_outputs, seed);
  return p;
}

void grow_head(ModelParams& params, std::size_t new_classes, std::uint64_t seed) {
  require(new_classes >= 1, ErrorKind::Config, "grow_head needs at least one new class");
  Dense& head = params.head();
  const auto old_rows = static_cast<std::size_t>(head.weight.rows());
  const std::size_t rows = old_rows + new_classes;
  const std::size_t dim = params.config.feature_dim;
  head.weight.conservativeResize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim));
  head.bias.conservativeResize(static_cast<Eigen::Index>(rows));
  Rng rng(derive_seed(seed, "head-rows", old_rows));
  glorot_fill(head.weight, old_rows, dim, rows, rng);
  for (std::size_t r = old_rows; r < rows; ++r) head.bias(static_cast<Eigen::Index>(r)) = 0.0;
}

ModelParams ModelParams::zeros_like() const {
  ModelParams z;
  z.config = config;
  for (const auto& l : layers)
    z.layers.push_back(Dense{RowMatrix::Zero(l.weight.rows(), l.weight.cols()),
                             Eigen::VectorXd::Zero(l.bias.size())});
  return z;
}

std::vector<std::string> ModelParams::block_names() const {
  std::vector<std::string> names;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    std::string base = l < num_hidden() ? "encoder." + std::to_string(l)
                       : l == num_hidden() ? std::string("feature")
                                           : std::string("head");
    names.push_back(base + ".weight");
    names.push_back(base + ".bias");
  }
  return names;
}

ParamSet ModelParams::to_blocks() const {
  ParamSet out;
  const auto names = block_names();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& d = layers[l];
    ParamBlock w{names[2 * l],
                 {static_cast<std::size_t>(d.weight.rows()),
                  static_cast<std::size_t>(d.weight.cols())},
                 std::vector<double>(d.weight.data(), d.weight.data() + d.weight.size())};
    ParamBlock b{names[2 * l + 1], {static_cast<std::size_t>(d.bias.size())},
                 std::vector<double>(d.bias.data(), d.bias.data() + d.bias.size())};
    out.push_back(std::move(w));
    out.push_back(std::move(b));
  }
  return out;
}

void ModelParams::assign_blocks(const ParamSet& blocks) {
  require(blocks.size() == 2 * layers.size(), ErrorKind::Dimension, "block count mismatch");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto& d = layers[l];
    const auto& w = blocks[2 * l].values;
    const auto& b = blocks[2 * l + 1].values;
    require(w.size() == static_cast<std::size_t>(d.weight.size()) &&
                b.size() == static_cast<std::size_t>(d.bias.size()),
            ErrorKind::Dimension, "block shape mismatch for " + blocks[2 * l].name);
    std::copy(w.begin(), w.end(), d.weight.data());
    std::copy(b.begin(), b.end(), d.bias.data());
  }
}

double ModelParams::squared_norm() const {
  double s = 0.0;
  for (const auto& l : layers) s += l.weight.squaredNorm() + l.bias.squaredNorm();
  return s;
}

bool ModelParams::all_finite() const {
  for (const auto& l : layers)
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  return true;
}

RowMatrix extract_patches(const Grid& image, std::size_t k) {
  const std::size_t h = image.height(), w = image.width();
  require(image.channels() == 3, ErrorKind::Dimension, "image must have 3 channels");
  require(k % 2 == 1, ErrorKind::Config, "patch_size must be odd");
  require(k <= std::min(h, w), ErrorKind::Config,
          "patch_size " + std::to_string(k) + " exceeds image size");
  const auto r = static_cast<std::ptrdiff_t>(k / 2);
  RowMatrix patches(static_cast<Eigen::Index>(h * w), static_cast<Eigen::Index>(k * k * 3));
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double* row = patches.row(static_cast<Eigen::Index>(y * w + x)).data();
      for (std::ptrdiff_t dy = -r; dy <= r; ++dy) {
        const std::size_t sy = reflect(static_cast<std::ptrdiff_t>(y) + dy, h);
        for (std::ptrdiff_t dx = -r; dx <= r; ++dx) {
          const std::size_t sx = reflect(static_cast<std::ptrdiff_t>(x) + dx, w);
          for (std::size_t c = 0; c < 3; ++c) *row++ = image.at(sy, sx, c);
        }
      }
    }
  return patches;
}

namespace {

RowMatrix affine(const RowMatrix& input, const Dense& layer) {
  RowMatrix out = input * layer.weight.transpose();
  out.rowwise() += layer.bias.transpose();
  return out;
}

// Each output is a plain dot product over its own row, so a logit does not
// depend on how many rows the head has.
RowMatrix head_logits(const RowMatrix& features, const Dense& head) {
  RowMatrix out(features.rows(), head.weight.rows());
  for (Eigen::Index i = 0; i < features.rows(); ++i)
    for (Eigen::Index k = 0; k < head.weight.rows(); ++k) {
      double acc = head.bias[k];
      for (Eigen::Index d = 0; d < features.cols(); ++d) acc += features(i, d) * head.weight(k, d);
      out(i, k) = acc;
    }
  return out;
}

Grid to_grid(const RowMatrix& m, std::size_t h, std::size_t w) {
  Grid g(h, w, static_cast<std::size_t>(m.cols()));
  std::copy(m.data(), m.data() + m.size(), g.data());
  return g;
}

Eigen::Map<const RowMatrix> as_matrix(const Grid& g) {
  return {g.data(), static_cast<Eigen::Index>(g.pixels()),
          static_cast<Eigen::Index>(g.channels())};
}

}  // namespace

ForwardPass forward(const ModelParams& params, const Grid& image) {
  params.config.validate();
  ForwardPass pass;
  pass.activations.push_back(extract_patches(image, params.config.patch_size));
  for (std::size_t l = 0; l < params.num_hidden(); ++l) {
    RowMatrix z = affine(pass.activations.back(), params.layers[l]);
    pass.activations.push_back(z.cwiseMax(0.0));
  }
  const RowMatrix features = affine(pass.activations.back(), params.feature_layer());
  const RowMatrix logits = head_logits(features, params.head());

  const std::size_t h = image.height(), w = image.width();
  auto& pred = pass.prediction;
  pred.features = to_grid(features, h, w);
  pred.logits = to_grid(logits, h, w);
  pred.probs = Grid(h, w, params.num_outputs());
  for (std::size_t i = 0; i < pred.logits.pixels(); ++i)
    softmax_into(pred.logits.pixel(i), pred.probs.pixel(i));
  return pass;
}

ModelParams backward(const ModelParams& params, const ForwardPass& pass, const Grid& dfeatures,
                     const Grid& dlogits) {
  const auto& pred = pass.prediction;
  require(dfeatures.same_shape(pred.features), ErrorKind::Dimension,
          "feature gradient shape mismatch");
  require(dlogits.same_shape(pred.logits), ErrorKind::Dimension, "logit gradient shape mismatch");

  ModelParams grads = params.zeros_like();
  const auto dl = as_matrix(dlogits);
  const auto feats = as_matrix(pred.features);

  Dense& gh = grads.layers.back();
  gh.weight.noalias() = dl.transpose() * feats;
  gh.bias = dl.colwise().sum().transpose();

  RowMatrix delta = as_matrix(dfeatures);
  delta.noalias() += dl * params.head().weight;

  const std::size_t nh = params.num_hidden();
  for (std::size_t l = nh + 1; l-- > 0;) {
    const RowMatrix& input = pass.activations[l];
    Dense& g = grads.layers[l];
    g.weight.noalias() = delta.transpose() * input;
    g.bias = delta.colwise().sum().transpose();
    if (l == 0) break;
    RowMatrix upstream = delta * params.layers[l].weight;
    delta = upstream.cwiseProduct((input.array() > 0.0).cast<double>().matrix());
  }
  return grads;
}

GradSlot backward_slot(const ModelParams& params, const ForwardPass& pass,
                       const Grid& dfeatures, const Grid& dlogits) {
  GradSlot slot;
  for (auto& block : backward(params, pass, dfeatures, dlogits).to_blocks())
    slot.grads.emplace(block.name, std::move(block.values));
  return slot;
}

std::vector<std::uint16_t> argmax_labels(const Grid& probs) {
  std::vector<std::uint16_t> out(probs.pixels());
  for (std::size_t i = 0; i < probs.pixels(); ++i) {
    const auto p = probs.pixel(i);
    std::size_t best = 0;
    for (std::size_t k = 1; k < p.size(); ++k)
      if (p[k] > p[best]) best = k;
    out[i] = static_cast<std::uint16_t>(best);
  }
  return out;
}

}  // namespace fairseg
