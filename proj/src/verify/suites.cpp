#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>

#include "fairseg/error.hpp"
#include "fairseg/numerics.hpp"
#include "fairseg/verify.hpp"

namespace fairseg::verify {

namespace {

Grid grid_from(const ParamBlock& b, std::size_t h, std::size_t w, std::size_t c) {
  Grid g(h, w, c);
  g.values() = b.values;
  return g;
}

GradSlot scaled(GradSlot slot, bool corrupt) {
  if (corrupt)
    for (auto& [name, g] : slot.grads)
      for (double& v : g) v *= 1.001;
  return slot;
}

constexpr std::size_t kH = 8, kW = 8, kC = 4;

}  // namespace

Grid random_grid(Rng& rng, std::size_t h, std::size_t w, std::size_t c, double lo, double hi) {
  Grid g(h, w, c);
  for (double& v : g.values()) v = rng.uniform(lo, hi);
  return g;
}

CeInstance random_ce_instance(Rng& rng, std::size_t h, std::size_t w, std::size_t k) {
  CeInstance inst{random_grid(rng, h, w, k, -3, 3), LabelMap(h, w),
                  std::vector<std::uint8_t>(h * w), std::vector<double>(k)};
  for (std::size_t i = 0; i < h * w; ++i) {
    inst.labels.data[i] = rng.below(10) == 0
                              ? kIgnoreLabel
                              : static_cast<std::uint16_t>(rng.below(static_cast<std::uint32_t>(k)));
    inst.mask[i] = rng.below(5) != 0;
  }
  for (double& x : inst.weights) x = rng.uniform(0.1, 10.0);
  return inst;
}

ClusterInstance random_cluster_instance(Rng& rng, std::size_t h, std::size_t w, std::size_t dim,
                                        std::size_t classes) {
  ClusterInstance inst{random_grid(rng, h, w, dim, -2, 2), LabelMap(h, w), PrototypeBank(dim), {}};
  inst.cfg.margin = 2.5;
  for (std::uint16_t c = 0; c < classes; ++c) {
    std::vector<double> p(dim);
    for (double& v : p) v = rng.uniform(-2, 2);
    inst.protos.set(c, p);
  }
  for (auto& l : inst.labels.data)
    l = rng.below(8) == 0 ? kIgnoreLabel
                          : static_cast<std::uint16_t>(rng.below(static_cast<std::uint32_t>(classes)));
  return inst;
}

ConsInstance random_cons_instance(Rng& rng, std::size_t h, std::size_t w, std::size_t k) {
  ConsInstance inst{random_grid(rng, h, w, 3, 0, 1), Grid(h, w, k)};
  const Grid logits = random_grid(rng, h, w, k, -2, 2);
  for (std::size_t i = 0; i < h * w; ++i) softmax_into(logits.pixel(i), inst.probs.pixel(i));
  return inst;
}

const std::vector<std::string>& gradcheck_losses() {
  static const std::vector<std::string> names{"weighted_ce", "cluster_loss",  "cons_loss",
                                              "cons_loss_logits", "cons_loss_literal",
                                              "distill_loss"};
  return names;
}

GradCheckResult gradcheck_instance(const std::string& loss, Rng& rng, double eps, bool corrupt) {
  if (loss == "weighted_ce") {
    const auto inst = random_ce_instance(rng, kH, kW, kC);
    ParamSet params{ParamBlock{"logits", {kH, kW, kC}, inst.logits.values()}};
    return finite_diff_check(
        [&](const ParamSet& p) {
          return scaled(weighted_ce(grid_from(p[0], kH, kW, kC), inst.labels, inst.mask, inst.weights),
                        corrupt);
        },
        params, eps);
  }
  if (loss == "cluster_loss") {
    const auto inst = random_cluster_instance(rng, kH, kW, kC, kC);
    ParamSet params{ParamBlock{"features", {kH, kW, kC}, inst.features.values()}};
    return finite_diff_check(
        [&](const ParamSet& p) {
          return scaled(cluster_loss(grid_from(p[0], kH, kW, kC), inst.labels, inst.protos, inst.cfg).slot,
                        corrupt);
        },
        params, eps);
  }
  if (loss == "cons_loss" || loss == "cons_loss_literal") {
    const auto inst = random_cons_instance(rng, kH, kW, kC);
    ConsConfig cfg;
    cfg.sigma1 = 0.3;
    cfg.literal = loss == "cons_loss_literal";
    ParamSet params{ParamBlock{"probs", {kH, kW, kC}, inst.probs.values()}};
    return finite_diff_check(
        [&](const ParamSet& p) {
          return scaled(cons_loss(inst.image, grid_from(p[0], kH, kW, kC), cfg), corrupt);
        },
        params, eps);
  }
  if (loss == "cons_loss_logits") {
    const Grid image = random_grid(rng, kH, kW, 3, 0, 1);
    const Grid logits = random_grid(rng, kH, kW, kC, -2, 2);
    ConsConfig cfg;
    cfg.sigma1 = 0.3;
    ParamSet params{ParamBlock{"logits", {kH, kW, kC}, logits.values()}};
    return finite_diff_check(
        [&](const ParamSet& p) {
          return scaled(cons_loss_from_logits(image, grid_from(p[0], kH, kW, kC), cfg), corrupt);
        },
        params, eps);
  }
  if (loss == "distill_loss") {
    const Grid now = random_grid(rng, kH, kW, kC, -2, 2);
    const Grid prev = random_grid(rng, kH, kW, kC, -2, 2);
    ParamSet params{ParamBlock{"features", {kH, kW, kC}, now.values()}};
    return finite_diff_check(
        [&](const ParamSet& p) { return scaled(distill_loss(grid_from(p[0], kH, kW, kC), prev), corrupt); },
        params, eps);
  }
  fail(ErrorKind::Config, "unknown loss '" + loss + "'");
}

GradCheckResult gradcheck_model_stack(Rng& rng, const ModelConfig& cfg, std::size_t h,
                                      std::size_t w, std::size_t classes, double eps,
                                      bool corrupt) {
  const Grid image = random_grid(rng, h, w, 3, 0, 1);
  ModelParams params = init_model(cfg, classes, rng.next_u64());
  for (auto& layer : params.layers)
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = rng.uniform(-0.1, 0.1);

  LabelMap labels(h, w);
  std::vector<std::uint8_t> mask(h * w);
  for (std::size_t i = 0; i < h * w; ++i) {
    labels.data[i] = static_cast<std::uint16_t>(rng.below(static_cast<std::uint32_t>(classes)));
    mask[i] = rng.below(4) != 0;
  }
  std::vector<double> weights(classes);
  for (double& x : weights) x = rng.uniform(0.5, 2.0);

  PrototypeBank protos(cfg.feature_dim);
  ClusterConfig ccfg;
  ccfg.margin = 2.0;
  for (std::uint16_t c = 0; c < classes; ++c) {
    std::vector<double> p(cfg.feature_dim);
    for (double& v : p) v = rng.uniform(-1, 1);
    protos.set(c, p);
  }
  const Grid prev = random_grid(rng, h, w, cfg.feature_dim, -1, 1);
  ConsConfig cons;
  cons.sigma1 = 0.3;

  const auto op = [&](const ParamSet& blocks) {
    ModelParams local = params;
    local.assign_blocks(blocks);
    const ForwardPass pass = forward(local, image);
    const auto& pred = pass.prediction;
    const GradSlot ce = weighted_ce(pred.logits, labels, mask, weights);
    const GradSlot cl = cluster_loss(pred.features, labels, protos, ccfg).slot;
    const GradSlot co = cons_loss_from_logits(image, pred.logits, cons);
    const GradSlot di = distill_loss(pred.features, prev);

    Grid dlogits(h, w, classes), dfeatures(h, w, cfg.feature_dim);
    const auto& gce = ce.grads.at("logits");
    const auto& gco = co.grads.at("logits");
    for (std::size_t i = 0; i < dlogits.size(); ++i) dlogits.values()[i] = gce[i] + gco[i];
    const auto& gcl = cl.grads.at("features");
    const auto& gdi = di.grads.at("features");
    for (std::size_t i = 0; i < dfeatures.size(); ++i) dfeatures.values()[i] = gcl[i] + gdi[i];

    GradSlot slot = backward_slot(local, pass, dfeatures, dlogits);
    CompensatedSum total;
    for (const GradSlot* part : {&ce, &cl, &co, &di}) {
      total.add(part->value);
      total.add(part->value_residual);
    }
    std::tie(slot.value, slot.value_residual) = total.divided_by(1.0);
    return scaled(std::move(slot), corrupt);
  };
  return finite_diff_check(op, params.to_blocks(), eps);
}

std::vector<GradcheckRow> run_gradcheck_suite(const GradcheckOptions& options) {
  std::vector<std::string> names = gradcheck_losses();
  if (options.include_model) names.push_back("model_stack");
  if (options.corrupt)
    require(std::find(names.begin(), names.end(), *options.corrupt) != names.end(),
            ErrorKind::Config, "unknown loss to corrupt '" + *options.corrupt + "'");
  std::vector<GradcheckRow> rows;
  for (const auto& name : names) {
    Rng rng(derive_seed(options.seed, name));
    const bool corrupt = options.corrupt && *options.corrupt == name;
    GradcheckRow row{name, 0, 0.0, false};
    // The model stack runs the whole network per coordinate, so fewer draws.
    const std::size_t n = name == "model_stack" ? std::max<std::size_t>(1, options.instances / 10)
                                                : options.instances;
    ModelConfig small;
    small.patch_size = 3;
    small.feature_dim = 4;
    small.hidden = {8, 6};
    for (std::size_t i = 0; i < n; ++i) {
      const auto r = name == "model_stack"
                         ? gradcheck_model_stack(rng, small, kH, kW, kC, options.epsilon, corrupt)
                         : gradcheck_instance(name, rng, options.epsilon, corrupt);
      row.worst = std::max(row.worst, r.max_rel_error);
      ++row.instances;
    }
    row.pass = row.worst <= options.tolerance;
    rows.push_back(row);
  }
  return rows;
}

Prop1Report random_prop1_trial(Rng& rng, std::size_t dim, std::size_t num_protos) {
  const double scale = rng.uniform(0.01, 100.0);
  const Grid now = random_grid(rng, 4, 4, dim, -scale, scale);
  const Grid prev = random_grid(rng, 4, 4, dim, -scale, scale);
  std::vector<std::vector<double>> protos(num_protos, std::vector<double>(dim));
  for (auto& p : protos)
    for (double& v : p) v = rng.uniform(-scale, scale);
  return verify_proposition1(now, prev, protos);
}

Prop1Summary run_prop1_suite(std::size_t trials, const std::vector<std::size_t>& dims,
                             const std::vector<std::size_t>& classes, std::uint64_t seed) {
  require(!dims.empty() && !classes.empty(), ErrorKind::Config, "prop1 needs dims and classes");
  Rng rng(derive_seed(seed, "prop1"));
  Prop1Summary s;
  s.min_slack = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t combo = t % (dims.size() * classes.size());
    const auto r = random_prop1_trial(rng, dims[combo % dims.size()], classes[combo / dims.size()]);
    ++s.trials;
    if (r.holds) ++s.held;
    s.min_slack = std::min(s.min_slack, r.min_slack);
    s.mean_lhs += r.mean_lhs;
    s.mean_rhs += r.mean_rhs;
    s.max_lhs = std::max(s.max_lhs, r.max_lhs);
    s.max_rhs = std::max(s.max_rhs, r.max_rhs);
  }
  if (s.trials) {
    s.mean_lhs /= static_cast<double>(s.trials);
    s.mean_rhs /= static_cast<double>(s.trials);
  }
  return s;
}

}  // namespace fairseg::verify
