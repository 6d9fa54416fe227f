#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "fairseg/error.hpp"
#include "fairseg/model.hpp"
#include "fairseg/verify.hpp"
#include "loss_fixtures.hpp"

using namespace fairseg;
using namespace fairseg::testing;

namespace {

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.patch_size = 3;
  cfg.feature_dim = 4;
  cfg.hidden = {8, 6};
  return cfg;
}

Grid random_image(Rng& rng, std::size_t h, std::size_t w) { return random_grid(rng, h, w, 3, 0, 1); }

}  // namespace

TEST_CASE("constant image gives identical predictions everywhere") {
  const ModelParams params = init_model(ModelConfig{}, 5, 3);
  const Grid image(12, 10, 3, 0.37);
  const auto pred = forward(params, image).prediction;
  for (std::size_t i = 1; i < pred.probs.pixels(); ++i) {
    for (std::size_t d = 0; d < pred.features.channels(); ++d)
      CHECK(pred.features.pixel(i)[d] == pred.features.pixel(0)[d]);
    for (std::size_t c = 0; c < 5; ++c) CHECK(pred.probs.pixel(i)[c] == pred.probs.pixel(0)[c]);
  }
}

TEST_CASE("zero parameters give uniform probabilities") {
  ModelParams params = init_model(ModelConfig{}, 7, 1);
  params = params.zeros_like();
  Rng rng(2);
  const auto pred = forward(params, random_image(rng, 8, 8)).prediction;
  for (double p : pred.probs.values()) CHECK(p == doctest::Approx(1.0 / 7).epsilon(1e-15));
}

TEST_CASE("probabilities are normalized and argmax is in range") {
  Rng rng(5);
  const ModelParams params = init_model(ModelConfig{}, 4, 11);
  const auto pred = forward(params, random_image(rng, 9, 7)).prediction;
  for (std::size_t i = 0; i < pred.probs.pixels(); ++i) {
    double s = 0;
    for (double p : pred.probs.pixel(i)) s += p;
    CHECK(std::abs(s - 1.0) <= 1e-9);
  }
  for (auto l : argmax_labels(pred.probs)) CHECK(l < 4);
}

TEST_CASE("a one-pixel change only reaches the patch neighbourhood") {
  Rng rng(8);
  for (std::size_t k : {3u, 5u}) {
    ModelConfig cfg;
    cfg.patch_size = k;
    const ModelParams params = init_model(cfg, 3, 4);
    const Grid image = random_image(rng, 11, 13);
    const auto base = forward(params, image).prediction;
    const std::size_t py = 5, px = 6;
    Grid changed = image;
    changed.at(py, px, 1) = 1.0 - changed.at(py, px, 1);
    const auto moved = forward(params, changed).prediction;
    const long r = static_cast<long>(k / 2);
    for (std::size_t y = 0; y < 11; ++y)
      for (std::size_t x = 0; x < 13; ++x) {
        const long cheb = std::max(std::abs(long(y) - long(py)), std::abs(long(x) - long(px)));
        bool same = true;
        for (std::size_t d = 0; d < cfg.feature_dim; ++d)
          same = same && base.features.at(y, x, d) == moved.features.at(y, x, d);
        if (cheb > r) CHECK(same);
        if (cheb == 0) CHECK_FALSE(same);
      }
  }
}

TEST_CASE("patch size must be odd and fit the image") {
  Rng rng(1);
  ModelConfig even;
  even.patch_size = 4;
  CHECK_THROWS_AS(even.validate(), Error);
  CHECK_THROWS_AS(extract_patches(random_image(rng, 8, 8), 4), Error);
  try {
    extract_patches(random_image(rng, 4, 8), 5);
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
  }
}

TEST_CASE("backward is linear in the upstream gradient") {
  Rng rng(13);
  const ModelParams params = init_model(small_config(), 4, 9);
  const Grid image = random_image(rng, 6, 6);
  const ForwardPass pass = forward(params, image);
  const Grid zf(6, 6, 4), zl(6, 6, 4);
  CHECK(backward(params, pass, zf, zl).squared_norm() == 0.0);

  const Grid df = random_grid(rng, 6, 6, 4, -1, 1), dl = random_grid(rng, 6, 6, 4, -1, 1);
  Grid df2 = df, dl2 = dl;
  for (double& v : df2.values()) v *= 2;
  for (double& v : dl2.values()) v *= 2;
  const auto g1 = backward(params, pass, df, dl).to_blocks();
  const auto g2 = backward(params, pass, df2, dl2).to_blocks();
  for (std::size_t b = 0; b < g1.size(); ++b)
    for (std::size_t i = 0; i < g1[b].values.size(); ++i)
      CHECK(g2[b].values[i] == doctest::Approx(2 * g1[b].values[i]).epsilon(1e-12));

  CHECK_THROWS_AS(backward(params, pass, Grid(6, 5, 4), dl), Error);
}

TEST_CASE("full loss stack passes the finite-difference check") {
  Rng rng(21);
  for (int trial = 0; trial < 3; ++trial) {
    const auto r = verify::gradcheck_model_stack(rng, small_config(), 8, 8, 4);
    INFO("worst block ", r.worst_block, " index ", r.worst_index);
    CHECK(r.max_rel_error <= 1e-5);
  }
}

TEST_CASE("head growth keeps existing rows and logits") {
  Rng rng(17);
  ModelParams params = init_model(ModelConfig{}, 6, 5);
  const Dense before = params.head();
  const Grid image = random_image(rng, 8, 8);
  const auto old_pred = forward(params, image).prediction;

  grow_head(params, 3, 99);
  CHECK(params.num_outputs() == 9);
  CHECK(params.head().weight.topRows(6) == before.weight);
  CHECK(params.head().bias.head(6) == before.bias);
  const auto new_pred = forward(params, image).prediction;
  for (std::size_t i = 0; i < image.pixels(); ++i)
    for (std::size_t c = 0; c < 6; ++c) CHECK(new_pred.logits.pixel(i)[c] == old_pred.logits.pixel(i)[c]);

  ModelParams again = init_model(ModelConfig{}, 6, 5);
  grow_head(again, 3, 99);
  CHECK(again == params);
  ModelParams other = init_model(ModelConfig{}, 6, 5);
  grow_head(other, 3, 100);
  CHECK_FALSE(other.head().weight.bottomRows(3) == params.head().weight.bottomRows(3));

  const double bound = std::sqrt(6.0 / (16 + 9));
  for (Eigen::Index r = 6; r < 9; ++r) {
    CHECK(params.head().bias[r] == 0.0);
    for (Eigen::Index c = 0; c < 16; ++c) CHECK(std::abs(params.head().weight(r, c)) <= bound);
  }
}

TEST_CASE("parameter blocks round-trip") {
  ModelParams params = init_model(ModelConfig{}, 4, 2);
  const auto blocks = params.to_blocks();
  CHECK(blocks.front().name == "encoder.0.weight");
  CHECK(blocks.back().name == "head.bias");
  ModelParams copy = params.zeros_like();
  copy.assign_blocks(blocks);
  CHECK(copy == params);
}
