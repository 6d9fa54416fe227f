#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fairseg/dataset.hpp"
#include "fairseg/losses.hpp"
#include "fairseg/metrics.hpp"
#include "fairseg/model.hpp"
#include "fairseg/prototypes.hpp"
#include "fairseg/rng.hpp"

namespace fairseg {

struct LossToggles {
  bool cluster = true;
  bool class_weighting = true;
  bool cons = true;
  bool distill = false;
  // Also supervise pseudo-labeled background pixels with CE.
  bool ce_on_pseudo = false;
  // Pseudo-label from the frozen step t-1 model instead of the live one.
  bool pseudo_from_previous = false;
};

// Named ablation presets: fine-tune, cluster, cluster+class, full, distill.
LossToggles ablation_toggles(const std::string& name);

struct TrainConfig {
  TaskSplit split;
  ModelConfig model;
  std::size_t epochs_initial = 8;
  std::size_t epochs_continual = 4;
  std::size_t batch_size = 6;
  double lr_initial = 0.05;
  double lr_continual = 0.005;
  double sgd_momentum = 0.9;
  double weight_decay = 1e-4;
  LossToggles toggles;
  LossWeights weights;
  ClusterConfig cluster;
  ConsConfig cons;
  double weight_smoothing = 1.0;
  double weight_min = 0.1;
  double weight_max = 10.0;
  std::uint64_t seed = 1;
  std::size_t threads = 1;

  void validate() const;
  double lr_for_step(std::size_t step) const { return step == 1 ? lr_initial : lr_continual; }
  std::size_t epochs_for_step(std::size_t step) const {
    return step == 1 ? epochs_initial : epochs_continual;
  }
};

// Records which training samples each step may read; reading a sample that
// belonged to an earlier step but not to the current one is a protocol error.
class AccessTracker {
 public:
  explicit AccessTracker(const Dataset& data) : data_(&data), owner_(data.samples.size()) {}

  void begin_step(std::size_t step, const std::vector<std::size_t>& allowed);
  const SegSample& read(std::size_t index);

  std::size_t current_step() const noexcept { return step_; }
  const std::vector<std::size_t>& current_indices() const noexcept { return current_; }
  std::size_t reads() const noexcept { return reads_; }
  // Reads during step t of samples owned only by steps < t.
  std::size_t prior_step_reads() const noexcept { return prior_reads_; }
  const Dataset& data() const noexcept { return *data_; }

 private:
  const Dataset* data_;
  std::vector<std::set<std::size_t>> owner_;  // steps that selected each sample
  std::vector<std::size_t> current_;
  std::size_t step_ = 0;
  std::size_t reads_ = 0;
  std::size_t prior_reads_ = 0;
};

struct EffectiveLabels {
  LabelMap labels;                 // kIgnoreLabel = unlabeled
  std::vector<std::uint8_t> ce_mask;
};

enum class BackgroundPolicy {
  PseudoLabel,   // clustering on: background routed through prototypes
  Background,    // plain fine-tuning: background stays class 0 under CE
};

EffectiveLabels build_effective_labels(const LabelMap& labels, const Grid& features,
                                       const PrototypeBank& protos, std::size_t step,
                                       BackgroundPolicy policy,
                                       bool ce_on_pseudo = false);

struct EpochTrace {
  std::size_t step = 0;
  std::size_t epoch = 0;
  std::size_t iteration = 0;
  double ce = 0.0;
  double cluster = 0.0;
  double cons = 0.0;
  double distill = 0.0;
  double total = 0.0;
  double lr = 0.0;
};

struct TrainerState {
  ModelParams params;
  ModelParams velocity;
  std::optional<ModelParams> previous;  // frozen step t-1 model
  PrototypeBank protos{0};
  FeatureBank bank{0, 1};
  Rng rng;
  std::size_t step = 0;       // step in progress or last completed
  std::size_t epoch = 0;      // completed epochs within `step`
  std::size_t iteration = 0;  // step-local iteration counter
  std::vector<std::vector<std::uint16_t>> registry;  // classes registered per step
  ClassDistribution distribution;

  bool step_complete(const TrainConfig& cfg) const {
    return step > 0 && epoch >= cfg.epochs_for_step(step);
  }
};

struct StepOutcome {
  std::size_t step = 0;
  ModelParams params;
  std::vector<EpochTrace> traces;
  PrototypeBank protos{0};
  std::size_t iterations = 0;
};

struct TrainHooks {
  std::function<void(const TrainerState&, const EpochTrace&)> on_epoch_end;
  std::function<void(const TrainerState&, const StepOutcome&)> on_step_end;
  // Stop after this many completed epochs in total (resume tests).
  std::optional<std::size_t> stop_after_epochs;
};

TrainerState initial_state(const TrainConfig& cfg);

// Step boundary bookkeeping; no-op data-wise. Grows the head, freezes old
// prototypes, resets banks and momentum for step t.
void begin_step(TrainerState& state, const TrainConfig& cfg, std::size_t step);

// v <- mu v - lr (g + wd theta); theta <- theta + v
void sgd_update(ModelParams& params, ModelParams& velocity, const ModelParams& grad, double lr,
                double momentum, double weight_decay);

StepOutcome run_step(TrainerState& state, AccessTracker& data, const TrainConfig& cfg,
                     const TrainHooks& hooks = {});

struct ContinualResult {
  TrainerState state;
  std::vector<StepOutcome> steps;
  std::size_t prior_step_reads = 0;
  bool finished = false;
};

ContinualResult run_continual(const TrainConfig& cfg, const Dataset& train,
                              const TrainHooks& hooks = {},
                              std::optional<TrainerState> resume = std::nullopt);

struct EvalResult {
  ConfusionMatrix cm;
  std::map<std::uint16_t, double> class_errors;
  std::size_t isolated_pixels = 0;
  std::optional<double> miou() const;
};

// Evaluates with test labels collapsed to the classes known after `step`.
EvalResult evaluate(const ModelParams& params, const Dataset& test, const TaskSplit& split,
                    std::size_t step, std::size_t threads = 1);

// Runs fn(i) for i in [0, n) over up to `threads` workers.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace fairseg
