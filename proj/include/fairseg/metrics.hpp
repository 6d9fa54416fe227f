#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fairseg/dataset.hpp"
#include "fairseg/grid.hpp"

namespace fairseg {

// counts[true * K + pred]; ignore pixels are never counted.
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::size_t num_classes)
      : k_(num_classes), counts_(num_classes * num_classes, 0) {}

  void accumulate(std::span<const std::uint16_t> predicted, std::span<const std::uint16_t> truth);
  void merge(const ConfusionMatrix& other);

  std::size_t num_classes() const noexcept { return k_; }
  std::uint64_t at(std::size_t truth, std::size_t pred) const { return counts_[truth * k_ + pred]; }
  std::uint64_t total() const;
  std::uint64_t true_count(std::size_t c) const;
  std::uint64_t predicted_count(std::size_t c) const;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t k_ = 0;
  std::vector<std::uint64_t> counts_;
};

// tp / (tp + fp + fn); nullopt when the class never occurs in truth or prediction.
std::optional<double> iou(const ConfusionMatrix& cm, std::size_t cls);

// Max pairwise difference of per-class error rates; Unavailable with < 2 classes.
double fairness_gap(const std::map<std::uint16_t, double>& error_rates);

// -sum p log p / log C over `counts.size()` classes.
double normalized_entropy(std::span<const std::uint64_t> counts);
double normalized_entropy(std::span<const double> distribution);

// Per-class mean cross-entropy of the true class.
class ClassErrorAccumulator {
 public:
  explicit ClassErrorAccumulator(std::size_t num_classes)
      : sum_(num_classes, 0.0), count_(num_classes, 0) {}
  void accumulate(const Grid& probs, std::span<const std::uint16_t> truth);
  void merge(const ClassErrorAccumulator& other);
  std::map<std::uint16_t, double> error_rates() const;

 private:
  std::vector<double> sum_;
  std::vector<std::uint64_t> count_;
};

// Pixels whose eight neighbours all carry a different label.
std::size_t count_isolated_pixels(std::span<const std::uint16_t> labels, std::size_t height,
                                  std::size_t width);

double mean_of(const std::vector<double>& values);
double population_std(const std::vector<double>& values);

struct GroupStats {
  std::optional<double> miou;
  double std_iou = 0.0;
  std::vector<std::uint16_t> classes;
};

struct MetricsReport {
  std::vector<std::optional<double>> class_iou;  // by class id 0..K-1
  std::vector<std::uint64_t> class_pixels;       // ground-truth pixels
  std::map<std::uint16_t, double> class_error;   // mean CE per class
  GroupStats initial;  // classes of step 1
  GroupStats later;    // classes of steps 2..T
  GroupStats all;      // every class including background
  GroupStats major;    // foreground classes above the pixel-share quantile
  GroupStats minor;
  std::optional<double> miou_avg;  // mean of per-step mIoUs
  std::vector<double> step_mious;
  double std_iou = 0.0;
  std::optional<double> fairness_gap;      // over per-class CE
  std::optional<double> fairness_gap_iou;  // over 1 - IoU
  double entropy = 0.0;                    // foreground pixel distribution
  std::size_t isolated_pixels = 0;
};

struct GroupOptions {
  double major_quantile = 0.5;
};

MetricsReport grouped_report(const ConfusionMatrix& cm, const TaskSplit& split,
                             const std::map<std::uint16_t, double>& class_errors,
                             const std::vector<double>& step_mious,
                             const GroupOptions& options = {});

GroupStats group_stats(const std::vector<std::optional<double>>& ious,
                       const std::vector<std::uint16_t>& classes);

void write_report_csv(const std::filesystem::path& path, const MetricsReport& report);
std::string report_json(const MetricsReport& report);
MetricsReport report_from_json(const std::string& text);

}  // namespace fairseg
