#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "fairseg/dataset.hpp"
#include "fairseg/trainer.hpp"

namespace fairseg {

// Everything one experiment needs, loaded from an INI file with sections
// [benchmark] [split] [model] [train] [losses] [cluster] [cons] [output].
struct RunConfig {
  BenchmarkSpec benchmark = shapes8_spec();
  // Used when [benchmark] class_frequencies is not given.
  double frequency_exponent = 1.5;
  std::string split = "5-3";
  TrainConfig train;
  std::optional<std::string> ablation;  // preset overriding the loss toggles
  std::filesystem::path output_dir = "runs/default";

  TrainConfig resolved_train() const;
  void validate() const;
};

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
// INI text that parse_run_config maps back to the same configuration.
std::string dump_run_config(const RunConfig& cfg);

}  // namespace fairseg
