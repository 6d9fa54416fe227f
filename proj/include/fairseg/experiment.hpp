#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fairseg/metrics.hpp"
#include "fairseg/run_config.hpp"
#include "fairseg/trainer.hpp"

namespace fairseg {

struct ExperimentResult {
  ContinualResult run;
  std::vector<double> step_mious;      // test mIoU over known classes at each step end
  std::vector<std::size_t> head_sizes;  // head rows after each step
  EvalResult final_eval;
  MetricsReport report;
};

struct ExperimentOutput {
  std::filesystem::path dir;
  std::string label;        // ablation or run name recorded in the summary
  std::string config_text;  // resolved configuration dump
};

// Trains every step, evaluates after each one and builds the final grouped
// report. With `output`, writes step_<t>.fclk, latest.fclk, losses.csv,
// config.ini, report.csv and summary.json into output->dir. A resumed run
// reloads the step checkpoints it skipped from that directory.
ExperimentResult run_experiment(const TrainConfig& cfg, const Benchmark& data,
                                const std::optional<ExperimentOutput>& output = std::nullopt,
                                std::optional<TrainerState> resume = std::nullopt);

MetricsReport final_report(const TrainConfig& cfg, const EvalResult& eval,
                           const std::vector<double>& step_mious);

}  // namespace fairseg
