#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "fairseg/checkpoint.hpp"
#include "fairseg/error.hpp"
#include "fairseg/experiment.hpp"
#include "fairseg/run_config.hpp"
#include "fairseg/verify.hpp"

using namespace fairseg;
namespace fs = std::filesystem;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitVerification = 4;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config:
    case ErrorKind::Spec:
      return kExitConfig;
    case ErrorKind::Format:
    case ErrorKind::Io:
    case ErrorKind::Label:
    case ErrorKind::Dimension:
      return kExitData;
    case ErrorKind::Verification:
      return kExitVerification;
    default:
      return 1;
  }
}

// Shared options: config file plus a few command-line overrides.
struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::optional<std::string> ablation;
  std::optional<std::string> steps;
  bool print_config = false;

  RunConfig load() const {
    RunConfig cfg = config_path.empty() ? parse_run_config("") : load_run_config(config_path);
    if (seed) cfg.train.seed = *seed;
    if (threads) cfg.train.threads = *threads;
    if (ablation) {
      ablation_toggles(*ablation);
      cfg.ablation = *ablation;
    }
    if (steps) cfg.split = *steps;
    cfg.validate();
    return cfg;
  }
};

void add_common(CLI::App* cmd, Common& c, bool training) {
  cmd->add_option("-c,--config", c.config_path, "INI run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--threads", c.threads, "worker threads cap");
  cmd->add_flag("--print-config", c.print_config, "print the resolved configuration and exit");
  if (training) {
    cmd->add_option("--seed", c.seed, "training seed override");
    cmd->add_option("--ablation", c.ablation,
                    "loss preset: fine-tune, distill, cluster, cluster+class, full");
    cmd->add_option("--steps", c.steps, "task split override, e.g. 5-3");
  }
}

Benchmark load_benchmark(const fs::path& dir) {
  return {read_dataset(dir / "train.fcls"), read_dataset(dir / "test.fcls")};
}

int cmd_gen(const Common& common, const std::string& out, std::optional<std::uint64_t> data_seed) {
  RunConfig cfg = common.load();
  if (data_seed) cfg.benchmark.seed = *data_seed;
  if (common.print_config) {
    std::cout << dump_run_config(cfg);
    return 0;
  }
  const Benchmark bench = generate(cfg.benchmark);
  fs::create_directories(out);
  write_dataset(fs::path(out) / "train.fcls", bench.train);
  write_dataset(fs::path(out) / "test.fcls", bench.test);
  write_manifest(fs::path(out) / "manifest.txt", cfg.benchmark);

  const auto counts = pixel_class_counts(bench.train);
  std::uint64_t total = 0;
  for (auto n : counts) total += n;
  std::cout << "class,pixels,share\n" << std::fixed << std::setprecision(4);
  for (std::size_t c = 0; c < counts.size(); ++c)
    std::cout << c << "," << counts[c] << "," << static_cast<double>(counts[c]) / static_cast<double>(total) << "\n";
  std::vector<std::uint64_t> fg(counts.begin() + 1, counts.end());
  std::cout << "entropy(foreground)," << normalized_entropy(std::span<const std::uint64_t>(fg)) << "\n";
  return 0;
}

int cmd_train(const Common& common, const std::string& data_dir, const std::string& out_override,
              const std::string& resume_path) {
  const RunConfig cfg = common.load();
  if (common.print_config) {
    std::cout << dump_run_config(cfg);
    return 0;
  }
  const TrainConfig train = cfg.resolved_train();
  const Benchmark bench = load_benchmark(data_dir);
  require(bench.train.num_classes == cfg.benchmark.num_classes, ErrorKind::Config,
          "dataset has " + std::to_string(bench.train.num_classes) + " classes, config says " +
              std::to_string(cfg.benchmark.num_classes));

  std::optional<TrainerState> resume;
  if (!resume_path.empty()) resume = load_checkpoint(resume_path);

  ExperimentOutput output;
  output.dir = out_override.empty() ? cfg.output_dir : fs::path(out_override);
  output.label = cfg.ablation.value_or("custom");
  output.config_text = dump_run_config(cfg);

  ExperimentResult r;
  try {
    r = run_experiment(train, bench, output, std::move(resume));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Protocol) std::cerr << "training protocol violation\n";
    throw;
  }
  for (std::size_t t = 0; t < r.head_sizes.size(); ++t)
    std::cout << "step " << t + 1 << ": head size " << r.head_sizes[t] << ", mIoU(known) "
              << std::fixed << std::setprecision(4) << r.step_mious[t] << "\n";
  const auto& rep = r.report;
  std::cout << "final: mIoU(initial) " << rep.initial.miou.value_or(0) << ", mIoU(later) "
            << rep.later.miou.value_or(0) << ", mIoU(all) " << rep.all.miou.value_or(0)
            << ", avg " << rep.miou_avg.value_or(0) << ", STD " << rep.std_iou << "\n";
  std::cout << "prior-step reads: " << r.run.prior_step_reads << "\n";
  std::cout << "wrote " << output.dir.string() << "\n";
  return 0;
}

int cmd_eval(const Common& common, const std::string& checkpoint, const std::string& data_dir,
             const std::string& out_dir) {
  const RunConfig cfg = common.load();
  if (common.print_config) {
    std::cout << dump_run_config(cfg);
    return 0;
  }
  const TrainConfig train = cfg.resolved_train();
  const TrainerState state = load_checkpoint(checkpoint);
  const Dataset test = read_dataset(fs::path(data_dir) / "test.fcls");

  require(state.step >= 1, ErrorKind::Format, "checkpoint holds no completed step");
  for (std::size_t t = 1; t <= state.registry.size(); ++t)
    require(t <= train.split.num_steps() && state.registry[t - 1] == train.split.classes(t),
            ErrorKind::Config, "checkpoint class registry does not match split " + cfg.split);
  require(test.num_classes == cfg.benchmark.num_classes, ErrorKind::Config,
          "dataset class count does not match the configuration");

  const EvalResult ev = evaluate(state.params, test, train.split, state.step, train.threads);
  MetricsReport rep = final_report(train, ev, {});
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_report_csv(fs::path(out_dir) / "report.csv", rep);
    std::ofstream(fs::path(out_dir) / "report.json") << report_json(rep) << "\n";
  }
  std::cout << report_json(rep) << "\n";
  return 0;
}

int cmd_gradcheck(const verify::GradcheckOptions& options) {
  const auto rows = verify::run_gradcheck_suite(options);
  bool ok = true;
  std::cout << std::left << std::setw(20) << "loss" << std::setw(11) << "instances" << std::setw(14)
            << "max_rel_err" << "result\n";
  for (const auto& r : rows) {
    std::cout << std::setw(20) << r.loss << std::setw(11) << r.instances << std::setw(14)
              << std::scientific << std::setprecision(3) << r.worst << (r.pass ? "PASS" : "FAIL")
              << "\n";
    ok = ok && r.pass;
  }
  return ok ? 0 : kExitVerification;
}

std::vector<std::size_t> parse_sizes(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoul(item));
    } catch (const std::exception&) {
      fail(ErrorKind::Config, "expected a comma-separated list of sizes, got '" + text + "'");
    }
  }
  return out;
}

int cmd_prop1(std::size_t trials, const std::string& dims, const std::string& classes,
              std::uint64_t seed) {
  const auto s = verify::run_prop1_suite(trials, parse_sizes(dims), parse_sizes(classes), seed);
  std::cout << std::setprecision(6) << "trials," << s.trials << "\nheld," << s.held
            << "\nmin_slack," << s.min_slack << "\nmean_lhs," << s.mean_lhs << "\nmean_rhs,"
            << s.mean_rhs << "\nmax_lhs," << s.max_lhs << "\nmax_rhs," << s.max_rhs << "\nresult,"
            << (s.all_hold() ? "PASS" : "FAIL") << "\n";
  return s.all_hold() ? 0 : kExitVerification;
}

struct RunRow {
  std::string name;
  MetricsReport report;
};

int cmd_report(const std::vector<std::string>& dirs, const std::string& csv_path) {
  std::vector<RunRow> rows;
  for (const auto& d : dirs) {
    const fs::path summary = fs::path(d) / "summary.json";
    require(fs::exists(summary), ErrorKind::Io, "missing run directory or summary: " + d);
    std::ifstream in(summary);
    std::stringstream ss;
    ss << in.rdbuf();
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(ss.str());
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Format, summary.string() + ": " + e.what());
    }
    rows.push_back({j.value("label", fs::path(d).filename().string()),
                    report_from_json(j.at("report").dump())});
  }

  const std::vector<std::string> cols{"miou_initial", "std_initial", "miou_later", "std_later",
                                      "miou_all",     "std_all",     "miou_avg",   "miou_major",
                                      "miou_minor",   "fairness_gap", "isolated"};
  auto values = [](const MetricsReport& r) {
    return std::vector<std::optional<double>>{
        r.initial.miou, r.initial.std_iou, r.later.miou, r.later.std_iou, r.all.miou,
        r.all.std_iou,  r.miou_avg,        r.major.miou, r.minor.miou,    r.fairness_gap,
        static_cast<double>(r.isolated_pixels)};
  };

  std::vector<std::pair<std::string, std::vector<std::optional<double>>>> table;
  for (const auto& r : rows) table.emplace_back(r.name, values(r.report));
  const RunRow* base = nullptr;
  const RunRow* full = nullptr;
  for (const auto& r : rows) {
    if (r.name == "fine-tune") base = &r;
    if (r.name == "full") full = &r;
  }
  if (base && full) {
    std::vector<std::optional<double>> delta;
    const auto a = values(full->report), b = values(base->report);
    for (std::size_t i = 0; i < a.size(); ++i)
      delta.push_back(a[i] && b[i] ? std::optional<double>(*a[i] - *b[i]) : std::nullopt);
    table.emplace_back("delta(full-fine-tune)", delta);
  }

  auto cell = [](const std::optional<double>& v) {
    if (!v) return std::string("-");
    std::ostringstream os;
    os << std::fixed << std::setprecision(4) << *v;
    return os.str();
  };
  std::cout << std::left << std::setw(24) << "config";
  for (const auto& c : cols) std::cout << std::setw(14) << c;
  std::cout << "\n";
  for (const auto& [name, vals] : table) {
    std::cout << std::setw(24) << name;
    for (const auto& v : vals) std::cout << std::setw(14) << cell(v);
    std::cout << "\n";
  }
  if (!csv_path.empty()) {
    std::ofstream out(csv_path, std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + csv_path);
    out << "config";
    for (const auto& c : cols) out << "," << c;
    out << "\n";
    for (const auto& [name, vals] : table) {
      out << name;
      for (const auto& v : vals) out << "," << (v ? cell(v) : "");
      out << "\n";
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fairness-aware continual segmentation toolkit"};
  app.require_subcommand(1);

  Common gen_common, train_common, eval_common;
  std::string gen_out = "data";
  std::optional<std::uint64_t> gen_seed;
  auto* gen = app.add_subcommand("gen", "generate a synthetic benchmark");
  add_common(gen, gen_common, false);
  gen->add_option("-o,--out", gen_out, "output directory");
  gen->add_option("--seed", gen_seed, "benchmark seed override");

  std::string train_data = "data", train_out, resume;
  auto* train = app.add_subcommand("train", "run continual training");
  add_common(train, train_common, true);
  train->add_option("-d,--data", train_data, "benchmark directory");
  train->add_option("-o,--out", train_out, "run directory (default: [output] dir)");
  train->add_option("--resume", resume, "checkpoint to resume from")->check(CLI::ExistingFile);

  std::string eval_ckpt, eval_data = "data", eval_out;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  add_common(eval, eval_common, false);
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("-d,--data", eval_data, "benchmark directory");
  eval->add_option("-o,--out", eval_out, "write report.csv/report.json here");

  verify::GradcheckOptions gc;
  std::string corrupt;
  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of every loss");
  grad->add_option("--instances", gc.instances, "random instances per loss")->capture_default_str();
  grad->add_option("--seed", gc.seed, "instance seed")->capture_default_str();
  grad->add_option("--epsilon", gc.epsilon, "central difference step")->capture_default_str();
  grad->add_option("--tolerance", gc.tolerance, "largest accepted relative error")->capture_default_str();
  grad->add_option("--corrupt", corrupt, "perturb one loss's analytic gradient (mutant check)");
  grad->add_flag("!--no-model", gc.include_model, "skip the full model stack");

  std::size_t trials = 1000;
  std::string dims = "4,16,32", classes = "2,8,20";
  std::uint64_t prop_seed = 1;
  auto* prop = app.add_subcommand("prop1", "check the distillation upper bound on random trials");
  prop->add_option("--trials", trials, "random trials")->capture_default_str();
  prop->add_option("--dims", dims, "feature dimensions, comma separated")->capture_default_str();
  prop->add_option("--classes", classes, "prototype counts, comma separated")->capture_default_str();
  prop->add_option("--seed", prop_seed, "trial seed")->capture_default_str();

  std::vector<std::string> run_dirs;
  std::string report_csv;
  auto* report = app.add_subcommand("report", "ablation table from run directories");
  report->add_option("runs", run_dirs, "run directories")->required();
  report->add_option("--csv", report_csv, "also write the table as CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*gen) return cmd_gen(gen_common, gen_out, gen_seed);
    if (*train) return cmd_train(train_common, train_data, train_out, resume);
    if (*eval) return cmd_eval(eval_common, eval_ckpt, eval_data, eval_out);
    if (*grad) {
      if (!corrupt.empty()) gc.corrupt = corrupt;
      return cmd_gradcheck(gc);
    }
    if (*prop) return cmd_prop1(trials, dims, classes, prop_seed);
    if (*report) return cmd_report(run_dirs, report_csv);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
