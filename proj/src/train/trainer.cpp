#include "fairseg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "fairseg/error.hpp"

namespace fairseg {

LossToggles ablation_toggles(const std::string& name) {
  LossToggles t;
  t.cluster = t.class_weighting = t.cons = t.distill = false;
  if (name == "fine-tune") return t;
  if (name == "distill") {
    t.distill = true;
    return t;
  }
  t.cluster = true;
  if (name == "cluster") return t;
  t.class_weighting = true;
  if (name == "cluster+class") return t;
  t.cons = true;
  if (name == "full") return t;
  fail(ErrorKind::Config, "unknown ablation '" + name +
                              "' (expected fine-tune, distill, cluster, cluster+class, full)");
}

void TrainConfig::validate() const {
  model.validate();
  cluster.validate();
  cons.validate();
  require(split.num_steps() >= 1, ErrorKind::Config, "train: split has no steps");
  require(batch_size >= 1, ErrorKind::Config, "train.batch_size must be >= 1");
  require(lr_initial > 0.0 && lr_continual > 0.0, ErrorKind::Config, "learning rates must be > 0");
  require(sgd_momentum >= 0.0 && sgd_momentum < 1.0, ErrorKind::Config,
          "train.momentum must lie in [0, 1)");
  require(weight_decay >= 0.0, ErrorKind::Config, "train.weight_decay must be >= 0");
  require(weights.lambda_cluster >= 0.0 && weights.lambda_cons >= 0.0 &&
              weights.lambda_distill >= 0.0,
          ErrorKind::Config, "loss weights must be >= 0");
  require(weight_min > 0.0 && weight_min <= weight_max, ErrorKind::Config,
          "class weight clamp must satisfy 0 < min <= max");
  require(threads >= 1, ErrorKind::Config, "threads must be >= 1");
  // Head row r must correspond to class id r.
  std::uint16_t next = 1;
  for (const auto& step : split.steps())
    for (auto c : step)
      require(c == next++, ErrorKind::Config,
              "task split must register class ids in ascending contiguous order");
}

void AccessTracker::begin_step(std::size_t step, const std::vector<std::size_t>& allowed) {
  require(step > step_, ErrorKind::Protocol, "access tracker steps must increase");
  step_ = step;
  current_ = allowed;
  for (auto i : allowed) {
    require(i < owner_.size(), ErrorKind::Protocol, "sample index out of range");
    owner_[i].insert(step);
  }
}

const SegSample& AccessTracker::read(std::size_t index) {
  require(index < owner_.size(), ErrorKind::Protocol, "sample index out of range");
  ++reads_;
  const auto& owners = owner_[index];
  if (!owners.count(step_)) {
    if (!owners.empty()) {
      ++prior_reads_;
      fail(ErrorKind::Protocol, "step " + std::to_string(step_) + " read training sample " +
                                    std::to_string(index) + " owned by an earlier step");
    }
    fail(ErrorKind::Protocol, "step " + std::to_string(step_) + " read unselected sample " +
                                  std::to_string(index));
  }
  return data_->samples[index];
}

EffectiveLabels build_effective_labels(const LabelMap& labels, const Grid& features,
                                       const PrototypeBank& protos, std::size_t step,
                                       BackgroundPolicy policy, bool ce_on_pseudo) {
  require(labels.pixels() == features.pixels(), ErrorKind::Dimension,
          "effective labels: feature shape mismatch");
  EffectiveLabels out{labels, std::vector<std::uint8_t>(labels.pixels(), 0)};
  const bool pseudo = step > 1 && policy == BackgroundPolicy::PseudoLabel;
  const bool have_protos = pseudo && protos.any_initialized();
  for (std::size_t i = 0; i < labels.pixels(); ++i) {
    const auto l = labels.data[i];
    if (l == kIgnoreLabel) continue;
    if (l != 0 || !pseudo) {
      out.ce_mask[i] = 1;
      continue;
    }
    if (have_protos) {
      out.labels.data[i] = protos.pseudo_label(features.pixel(i));
      out.ce_mask[i] = ce_on_pseudo ? 1 : 0;
    } else {
      out.labels.data[i] = kIgnoreLabel;
    }
  }
  return out;
}

void parallel_for(std::size_t n, std::size_t threads,
                  const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(std::max<std::size_t>(threads, 1), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

TrainerState initial_state(const TrainConfig& cfg) {
  cfg.validate();
  TrainerState s;
  s.params = init_model(cfg.model, 1, derive_seed(cfg.seed, "model"));
  s.velocity = s.params.zeros_like();
  s.protos = PrototypeBank(cfg.model.feature_dim);
  s.bank = FeatureBank(cfg.model.feature_dim, cfg.cluster.bank_capacity);
  s.rng = Rng(derive_seed(cfg.seed, "trainer"));
  return s;
}

namespace {

BackgroundPolicy policy_for(const TrainConfig& cfg) {
  return cfg.toggles.cluster ? BackgroundPolicy::PseudoLabel : BackgroundPolicy::Background;
}

// Classes whose pixels are CE-supervised at `step`.
std::vector<std::uint16_t> supervised_classes(const TrainConfig& cfg, std::size_t step) {
  std::vector<std::uint16_t> cs;
  if (step == 1 || policy_for(cfg) == BackgroundPolicy::Background) cs.push_back(0);
  const auto& st = cfg.split.classes(step);
  cs.insert(cs.end(), st.begin(), st.end());
  return cs;
}

struct ImageWork {
  ModelParams grads;
  double ce = 0.0, cluster = 0.0, cons = 0.0, distill = 0.0;
  Grid features;
  LabelMap deposit_labels;
};

}  // namespace

void begin_step(TrainerState& state, const TrainConfig& cfg, std::size_t step) {
  require(step == state.step + 1, ErrorKind::Protocol,
          "step " + std::to_string(step) + " cannot follow step " + std::to_string(state.step));
  require(state.step == 0 || state.step_complete(cfg), ErrorKind::Protocol,
          "previous step is not complete");
  const auto& classes = cfg.split.classes(step);
  require(state.params.num_outputs() == classes.front(), ErrorKind::Protocol,
          "head size does not match class registry");

  if (step > 1 && (cfg.toggles.distill || (cfg.toggles.cluster && cfg.toggles.pseudo_from_previous)))
    state.previous = state.params;
  grow_head(state.params, classes.size(), derive_seed(cfg.seed, "head", step));
  state.velocity = state.params.zeros_like();

  if (cfg.toggles.cluster && step > 1) {
    std::vector<std::uint16_t> old;
    for (auto c : cfg.split.classes_through(step - 1))
      if (state.protos.contains(c) && state.protos.at(c).initialized) old.push_back(c);
    state.protos.freeze(old);
  }
  state.bank = FeatureBank(cfg.model.feature_dim, cfg.cluster.bank_capacity);
  if (cfg.toggles.cluster) {
    state.protos.ensure(PrototypeBank::kUnknown);
    for (auto c : classes) state.protos.ensure(c);
  }
  state.step = step;
  state.epoch = 0;
  state.iteration = 0;
  state.rng = Rng(derive_seed(cfg.seed, "step", step));
  state.registry.push_back(classes);
  state.distribution = {};
}

void sgd_update(ModelParams& params, ModelParams& velocity, const ModelParams& grad, double lr,
                double momentum, double weight_decay) {
  for (std::size_t l = 0; l < grad.layers.size(); ++l) {
    auto& p = params.layers[l];
    auto& v = velocity.layers[l];
    v.weight = momentum * v.weight - lr * (grad.layers[l].weight + weight_decay * p.weight);
    v.bias = momentum * v.bias - lr * (grad.layers[l].bias + weight_decay * p.bias);
    p.weight += v.weight;
    p.bias += v.bias;
  }
}

StepOutcome run_step(TrainerState& state, AccessTracker& data, const TrainConfig& cfg,
                     const TrainHooks& hooks) {
  const std::size_t step = state.step;
  require(step >= 1, ErrorKind::Protocol, "run_step before begin_step");
  require(data.current_step() == step, ErrorKind::Protocol, "access tracker not on this step");

  const std::vector<std::size_t> images = data.current_indices();
  require(!images.empty(), ErrorKind::Protocol,
          "step " + std::to_string(step) + " has no training images");

  const BackgroundPolicy policy = policy_for(cfg);
  const double lr = cfg.lr_for_step(step);
  const std::size_t epochs = cfg.epochs_for_step(step);
  const std::size_t dim = cfg.model.feature_dim;

  // Class pixel counts over CE-supervised ground truth of this step.
  {
    ClassDistribution dist;
    dist.smoothing = cfg.weight_smoothing;
    dist.w_min = cfg.weight_min;
    dist.w_max = cfg.weight_max;
    for (auto c : supervised_classes(cfg, step)) dist.pixel_counts[c] = 0;
    for (auto idx : images) {
      const auto labels = collapse_labels(data.read(idx).labels, cfg.split, step);
      for (auto l : labels.data) {
        const auto it = dist.pixel_counts.find(l);
        if (it != dist.pixel_counts.end()) ++it->second;
      }
    }
    state.distribution = dist;
  }

  StepOutcome outcome;
  outcome.step = step;
  std::size_t total_epochs_done = 0;
  for (std::size_t t = 1; t < step; ++t) total_epochs_done += cfg.epochs_for_step(t);
  total_epochs_done += state.epoch;

  while (state.epoch < epochs) {
    if (hooks.stop_after_epochs && total_epochs_done >= *hooks.stop_after_epochs) break;

    std::vector<std::size_t> order = images;
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[state.rng.below(static_cast<std::uint32_t>(i))]);

    EpochTrace trace;
    trace.step = step;
    trace.epoch = state.epoch + 1;
    trace.lr = lr;
    std::size_t batches = 0;

    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, order.size() - begin);
      ++state.iteration;
      if (cfg.toggles.cluster)
        update_prototypes(state.protos, state.bank, cfg.cluster, state.iteration);

      const std::vector<double> weights =
          cfg.toggles.class_weighting ? state.distribution.weight_table(state.params.num_outputs())
                                      : std::vector<double>{};
      std::vector<const SegSample*> batch(count);
      for (std::size_t b = 0; b < count; ++b) batch[b] = &data.read(order[begin + b]);

      std::vector<ImageWork> work(count);
      const double inv_batch = 1.0 / static_cast<double>(count);
      parallel_for(count, cfg.threads, [&](std::size_t b) {
        const SegSample& sample = *batch[b];
        const LabelMap labels = collapse_labels(sample.labels, cfg.split, step);
        const ForwardPass pass = forward(state.params, sample.image);
        const auto& pred = pass.prediction;
        std::optional<ForwardPass> prev;
        if (state.previous) prev = forward(*state.previous, sample.image);
        const bool old_view = cfg.toggles.pseudo_from_previous && prev;
        const EffectiveLabels eff =
            build_effective_labels(labels, old_view ? prev->prediction.features : pred.features,
                                   state.protos, step, policy, cfg.toggles.ce_on_pseudo);

        ImageWork& w = work[b];
        Grid dlogits(pred.logits.height(), pred.logits.width(), pred.logits.channels());
        Grid dfeatures(pred.features.height(), pred.features.width(), dim);

        const GradSlot ce = weighted_ce(pred.logits, eff.labels, eff.ce_mask, weights);
        w.ce = ce.value;
        const auto& gce = ce.grads.at("logits");
        for (std::size_t i = 0; i < gce.size(); ++i) dlogits.data()[i] = gce[i] * inv_batch;

        if (cfg.toggles.cluster) {
          const ClusterLossResult cl = cluster_loss(pred.features, eff.labels, state.protos, cfg.cluster);
          w.cluster = cl.slot.value;
          const auto& g = cl.slot.grads.at("features");
          const double s = cfg.weights.lambda_cluster * inv_batch;
          for (std::size_t i = 0; i < g.size(); ++i) dfeatures.data()[i] += s * g[i];
        }
        if (cfg.toggles.cons) {
          const GradSlot cs = cons_loss_from_logits(sample.image, pred.logits, cfg.cons);
          w.cons = cs.value;
          const auto& g = cs.grads.at("logits");
          const double s = cfg.weights.lambda_cons * inv_batch;
          for (std::size_t i = 0; i < g.size(); ++i) dlogits.data()[i] += s * g[i];
        }
        if (cfg.toggles.distill && prev) {
          const GradSlot ds = distill_loss(pred.features, prev->prediction.features);
          w.distill = ds.value;
          const auto& g = ds.grads.at("features");
          const double s = cfg.weights.lambda_distill * inv_batch;
          for (std::size_t i = 0; i < g.size(); ++i) dfeatures.data()[i] += s * g[i];
        }
        w.grads = backward(state.params, pass, dfeatures, dlogits);
        w.features = pred.features;
        // Bank deposits: current-step classes and the unknown cluster only.
        w.deposit_labels = eff.labels;
        for (auto& l : w.deposit_labels.data)
          if (l != 0 && !cfg.split.in_step(l, step)) l = kIgnoreLabel;
      });

      // Fixed-order reduction and SGD with momentum and weight decay.
      ModelParams grad = std::move(work[0].grads);
      for (std::size_t b = 1; b < count; ++b)
        for (std::size_t l = 0; l < grad.layers.size(); ++l) {
          grad.layers[l].weight += work[b].grads.layers[l].weight;
          grad.layers[l].bias += work[b].grads.layers[l].bias;
        }
      sgd_update(state.params, state.velocity, grad, lr, cfg.sgd_momentum, cfg.weight_decay);

      double ce = 0, cl = 0, cs = 0, ds = 0;
      for (const auto& w : work) {
        ce += w.ce * inv_batch;
        cl += w.cluster * inv_batch;
        cs += w.cons * inv_batch;
        ds += w.distill * inv_batch;
      }
      trace.ce += ce;
      trace.cluster += cl;
      trace.cons += cs;
      trace.distill += ds;
      trace.total += ce + cfg.weights.lambda_cluster * cl + cfg.weights.lambda_cons * cs +
                     cfg.weights.lambda_distill * ds;
      ++batches;

      if (cfg.toggles.cluster) {
        for (const auto& w : work) {
          const auto& labs = w.deposit_labels;
          std::vector<std::uint16_t> present;
          for (auto l : labs.data)
            if (l != kIgnoreLabel) present.push_back(l);
          std::sort(present.begin(), present.end());
          present.erase(std::unique(present.begin(), present.end()), present.end());
          for (auto cls : present) {
            std::vector<std::size_t> pix;
            for (std::size_t i = 0; i < labs.data.size(); ++i)
              if (labs.data[i] == cls) pix.push_back(i);
            const std::size_t take = std::min(cfg.cluster.deposits_per_class, pix.size());
            for (std::size_t j = 0; j < take; ++j) {
              const std::size_t pick =
                  j + state.rng.below(static_cast<std::uint32_t>(pix.size() - j));
              std::swap(pix[j], pix[pick]);
              state.bank.deposit(cls, w.features.pixel(pix[j]));
            }
          }
        }
      }
    }

    const double inv = 1.0 / static_cast<double>(std::max<std::size_t>(batches, 1));
    trace.ce *= inv;
    trace.cluster *= inv;
    trace.cons *= inv;
    trace.distill *= inv;
    trace.total *= inv;
    trace.iteration = state.iteration;
    require(std::isfinite(trace.total) && state.params.all_finite(), ErrorKind::Protocol,
            "training diverged at step " + std::to_string(step) + " epoch " +
                std::to_string(trace.epoch));
    outcome.traces.push_back(trace);
    ++state.epoch;
    ++total_epochs_done;
    if (hooks.on_epoch_end) hooks.on_epoch_end(state, outcome.traces.back());
  }

  outcome.params = state.params;
  outcome.protos = state.protos;
  outcome.iterations = state.iteration;
  return outcome;
}

ContinualResult run_continual(const TrainConfig& cfg, const Dataset& train,
                              const TrainHooks& hooks, std::optional<TrainerState> resume) {
  cfg.validate();
  cfg.split.validate(train.num_classes);
  ContinualResult result;
  result.state = resume ? std::move(*resume) : initial_state(cfg);
  TrainerState& state = result.state;
  AccessTracker tracker(train);

  for (std::size_t t = 1; t <= cfg.split.num_steps(); ++t) {
    // Step-t data: images selected by the overlapped protocol. Completed steps
    // are registered too so a resumed run still tracks their ownership.
    tracker.begin_step(t, select_step_images(train.samples, cfg.split, t));
    if (state.step > t || (state.step == t && state.step_complete(cfg))) continue;
    if (state.step < t) begin_step(state, cfg, t);
    StepOutcome outcome = run_step(state, tracker, cfg, hooks);
    if (!state.step_complete(cfg)) {
      result.prior_step_reads = tracker.prior_step_reads();
      result.steps.push_back(std::move(outcome));
      return result;
    }
    if (hooks.on_step_end) hooks.on_step_end(state, outcome);
    result.steps.push_back(std::move(outcome));
  }
  result.prior_step_reads = tracker.prior_step_reads();
  result.finished = true;
  return result;
}

std::optional<double> EvalResult::miou() const {
  std::vector<double> v;
  for (std::size_t c = 0; c < cm.num_classes(); ++c)
    if (auto x = iou(cm, c)) v.push_back(*x);
  if (v.empty()) return std::nullopt;
  return mean_of(v);
}

EvalResult evaluate(const ModelParams& params, const Dataset& test, const TaskSplit& split,
                    std::size_t step, std::size_t threads) {
  const std::size_t k = params.num_outputs();
  struct PerImage {
    ConfusionMatrix cm;
    ClassErrorAccumulator errors{0};
    std::size_t isolated = 0;
  };
  std::vector<PerImage> per(test.samples.size());
  parallel_for(test.samples.size(), threads, [&](std::size_t i) {
    const auto& s = test.samples[i];
    const LabelMap truth = collapse_to_known(s.labels, split, step);
    const ForwardPass pass = forward(params, s.image);
    const auto pred = argmax_labels(pass.prediction.probs);
    PerImage& r = per[i];
    r.cm = ConfusionMatrix(k);
    r.cm.accumulate(pred, truth.data);
    r.errors = ClassErrorAccumulator(k);
    r.errors.accumulate(pass.prediction.probs, truth.data);
    r.isolated = count_isolated_pixels(pred, s.image.height(), s.image.width());
  });
  EvalResult out{ConfusionMatrix(k), {}, 0};
  ClassErrorAccumulator errors(k);
  for (const auto& r : per) {
    out.cm.merge(r.cm);
    errors.merge(r.errors);
    out.isolated_pixels += r.isolated;
  }
  out.class_errors = errors.error_rates();
  return out;
}

}  // namespace fairseg
