#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fairseg/grid.hpp"

namespace fairseg {

struct SegSample {
  Grid image;       // H x W x 3, values in [0, 1]
  LabelMap labels;  // 0 = background, kIgnoreLabel = void

  friend bool operator==(const SegSample&, const SegSample&) = default;
};

enum class ShapeKind : std::uint8_t { Rectangle = 0, Circle = 1, RightTriangle = 2 };

const char* to_string(ShapeKind kind);

struct ClassStyle {
  ShapeKind shape = ShapeKind::Rectangle;
  std::array<double, 3> color{};
};

struct BenchmarkSpec {
  std::uint16_t num_classes = 8;
  std::size_t height = 32;
  std::size_t width = 32;
  // Probability of drawing class c+1 for each painted shape.
  std::vector<double> class_frequencies;
  // One entry per foreground class; empty means the default palette.
  std::vector<ClassStyle> palette;
  std::array<double, 3> background_color{0.5, 0.5, 0.5};
  double color_jitter = 0.1;
  double noise_sigma = 0.05;
  std::size_t train_count = 200;
  std::size_t test_count = 50;
  std::uint64_t seed = 7;

  void validate() const;
  // Resolved palette: explicit one if set, else evenly spaced hues cycling
  // through the three shape kinds.
  std::vector<ClassStyle> resolved_palette() const;
};

// Frequencies proportional to rank^(-exponent), normalized.
std::vector<double> power_law_frequencies(std::size_t num_classes, double exponent);

// Default desk benchmark: 8 classes, 32x32, rank^-1.5 frequencies.
BenchmarkSpec shapes8_spec();

struct Dataset {
  std::uint16_t num_classes = 0;
  std::vector<SegSample> samples;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct Benchmark {
  Dataset train;
  Dataset test;
};

enum class Split : std::uint8_t { Train = 0, Test = 1 };

SegSample generate_sample(const BenchmarkSpec& spec, Split split, std::size_t index);
Benchmark generate(const BenchmarkSpec& spec);

// Ordered, pairwise-disjoint class sets per continual step (steps are 1-based
// in the public API).
class TaskSplit {
 public:
  TaskSplit() = default;
  explicit TaskSplit(std::vector<std::vector<std::uint16_t>> steps);

  // "5-3" over 8 classes -> {1..5}, {6..8}.
  static TaskSplit parse(const std::string& text, std::uint16_t num_classes);

  std::size_t num_steps() const noexcept { return steps_.size(); }
  const std::vector<std::uint16_t>& classes(std::size_t step) const;
  // Union of steps 1..step.
  std::vector<std::uint16_t> classes_through(std::size_t step) const;
  bool in_step(std::uint16_t cls, std::size_t step) const;
  // Step that introduces `cls`, or 0 when no step covers it.
  std::size_t step_of(std::uint16_t cls) const;
  void validate(std::uint16_t num_classes) const;
  std::string to_string() const;

  const std::vector<std::vector<std::uint16_t>>& steps() const noexcept { return steps_; }

 private:
  std::vector<std::vector<std::uint16_t>> steps_;
};

LabelMap collapse_labels(const LabelMap& labels, const TaskSplit& split, std::size_t step);
SegSample collapse_labels(const SegSample& sample, const TaskSplit& split, std::size_t step);

// Collapses to the classes known after `step` (used for per-step evaluation).
LabelMap collapse_to_known(const LabelMap& labels, const TaskSplit& split, std::size_t step);

// Overlapped protocol: indices of samples with at least one pixel of a step class.
std::vector<std::size_t> select_step_images(const std::vector<SegSample>& samples,
                                            const TaskSplit& split, std::size_t step);

// Pixel count per class id 0..num_classes (ignore pixels skipped).
std::vector<std::uint64_t> pixel_class_counts(const Dataset& data);

std::vector<std::uint8_t> encode_dataset(const Dataset& data);
Dataset decode_dataset(const std::vector<std::uint8_t>& bytes);
void write_dataset(const std::filesystem::path& path, const Dataset& data);
Dataset read_dataset(const std::filesystem::path& path);

void write_manifest(const std::filesystem::path& path, const BenchmarkSpec& spec);

}  // namespace fairseg
