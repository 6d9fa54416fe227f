#include "fairseg/experiment.hpp"

#include <fstream>
#include <iomanip>

#include "json.hpp"

#include "fairseg/checkpoint.hpp"
#include "fairseg/error.hpp"

namespace fairseg {

namespace {

std::filesystem::path step_checkpoint(const std::filesystem::path& dir, std::size_t step) {
  return dir / ("step_" + std::to_string(step) + ".fclk");
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
  out << text;
}

}  // namespace

MetricsReport final_report(const TrainConfig& cfg, const EvalResult& eval,
                           const std::vector<double>& step_mious) {
  MetricsReport rep = grouped_report(eval.cm, cfg.split, eval.class_errors, step_mious);
  rep.isolated_pixels = eval.isolated_pixels;
  return rep;
}

ExperimentResult run_experiment(const TrainConfig& cfg, const Benchmark& data,
                                const std::optional<ExperimentOutput>& output,
                                std::optional<TrainerState> resume) {
  ExperimentResult result;
  const std::size_t steps = cfg.split.num_steps();
  result.step_mious.assign(steps, 0.0);
  result.head_sizes.assign(steps, 0);
  std::vector<bool> seen(steps, false);

  std::ofstream losses;
  if (output) {
    std::filesystem::create_directories(output->dir);
    write_text(output->dir / "config.ini", output->config_text);
    const auto path = output->dir / "losses.csv";
    const bool fresh = !resume || !std::filesystem::exists(path);
    losses.open(path, fresh ? std::ios::trunc : std::ios::app);
    require(static_cast<bool>(losses), ErrorKind::Io, "cannot write " + path.string());
    losses << std::setprecision(10);
    if (fresh) losses << "step,epoch,iteration,ce,cluster,cons,distill,total,lr\n";
  }

  auto record_step = [&](std::size_t step, const ModelParams& params) {
    const auto ev = evaluate(params, data.test, cfg.split, step, cfg.threads);
    result.step_mious[step - 1] = ev.miou().value_or(0.0);
    result.head_sizes[step - 1] = params.num_outputs();
    seen[step - 1] = true;
  };

  TrainHooks hooks;
  hooks.on_epoch_end = [&](const TrainerState& state, const EpochTrace& t) {
    if (!output) return;
    losses << t.step << "," << t.epoch << "," << t.iteration << "," << t.ce << "," << t.cluster
           << "," << t.cons << "," << t.distill << "," << t.total << "," << t.lr << "\n";
    losses.flush();
    save_checkpoint(output->dir / "latest.fclk", state);
  };
  hooks.on_step_end = [&](const TrainerState& state, const StepOutcome& outcome) {
    record_step(outcome.step, state.params);
    if (output) save_checkpoint(step_checkpoint(output->dir, outcome.step), state);
  };

  result.run = run_continual(cfg, data.train, hooks, std::move(resume));
  require(result.run.finished, ErrorKind::Protocol, "training stopped before the last step");

  for (std::size_t t = 1; t <= steps; ++t) {
    if (seen[t - 1]) continue;
    require(output.has_value(), ErrorKind::State,
            "step " + std::to_string(t) + " was completed before resuming but no run directory was given");
    record_step(t, load_checkpoint(step_checkpoint(output->dir, t)).params);
  }

  result.final_eval = evaluate(result.run.state.params, data.test, cfg.split, steps, cfg.threads);
  result.report = final_report(cfg, result.final_eval, result.step_mious);

  if (output) {
    write_report_csv(output->dir / "report.csv", result.report);
    nlohmann::json summary;
    summary["label"] = output->label;
    summary["seed"] = cfg.seed;
    summary["split"] = cfg.split.to_string();
    summary["head_sizes"] = result.head_sizes;
    summary["prior_step_reads"] = result.run.prior_step_reads;
    summary["config"] = output->config_text;
    summary["report"] = nlohmann::json::parse(report_json(result.report));
    write_text(output->dir / "summary.json", summary.dump(2) + "\n");
  }
  return result;
}

}  // namespace fairseg
