#include <algorithm>
#include <set>
#include <sstream>

#include "fairseg/dataset.hpp"
#include "fairseg/error.hpp"

namespace fairseg {

TaskSplit::TaskSplit(std::vector<std::vector<std::uint16_t>> steps) : steps_(std::move(steps)) {
  std::set<std::uint16_t> seen;
  for (auto& step : steps_) {
    require(!step.empty(), ErrorKind::Config, "task split has an empty step");
    std::sort(step.begin(), step.end());
    for (auto c : step) {
      require(c != 0 && c != kIgnoreLabel, ErrorKind::Config,
              "task split may not contain background or ignore ids");
      require(seen.insert(c).second, ErrorKind::Config,
              "task split steps must be disjoint (class " + std::to_string(c) + ")");
    }
  }
}

TaskSplit TaskSplit::parse(const std::string& text, std::uint16_t num_classes) {
  std::vector<std::vector<std::uint16_t>> steps;
  std::stringstream ss(text);
  std::string part;
  std::uint16_t next = 1;
  while (std::getline(ss, part, '-')) {
    std::size_t used = 0;
    int n = 0;
    try {
      n = std::stoi(part, &used);
    } catch (const std::exception&) {
      fail(ErrorKind::Config, "bad task split '" + text + "'");
    }
    require(used == part.size() && n > 0, ErrorKind::Config, "bad task split '" + text + "'");
    std::vector<std::uint16_t> step;
    for (int i = 0; i < n; ++i) step.push_back(next++);
    steps.push_back(std::move(step));
  }
  require(!steps.empty(), ErrorKind::Config, "empty task split");
  TaskSplit split(std::move(steps));
  split.validate(num_classes);
  return split;
}

const std::vector<std::uint16_t>& TaskSplit::classes(std::size_t step) const {
  require(step >= 1 && step <= steps_.size(), ErrorKind::Protocol,
          "step " + std::to_string(step) + " out of range 1.." + std::to_string(steps_.size()));
  return steps_[step - 1];
}

std::vector<std::uint16_t> TaskSplit::classes_through(std::size_t step) const {
  std::vector<std::uint16_t> out;
  for (std::size_t t = 1; t <= step; ++t) {
    const auto& cs = classes(t);
    out.insert(out.end(), cs.begin(), cs.end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

bool TaskSplit::in_step(std::uint16_t cls, std::size_t step) const {
  const auto& cs = classes(step);
  return std::binary_search(cs.begin(), cs.end(), cls);
}

std::size_t TaskSplit::step_of(std::uint16_t cls) const {
  for (std::size_t t = 0; t < steps_.size(); ++t)
    if (std::binary_search(steps_[t].begin(), steps_[t].end(), cls)) return t + 1;
  return 0;
}

void TaskSplit::validate(std::uint16_t num_classes) const {
  require(!steps_.empty(), ErrorKind::Config, "task split has no steps");
  for (const auto& step : steps_)
    for (auto c : step)
      require(c >= 1 && c <= num_classes, ErrorKind::Config,
              "task split class " + std::to_string(c) + " outside 1.." +
                  std::to_string(num_classes));
}

std::string TaskSplit::to_string() const {
  std::string out;
  for (std::size_t t = 0; t < steps_.size(); ++t) {
    if (t) out += '-';
    out += std::to_string(steps_[t].size());
  }
  return out;
}

LabelMap collapse_labels(const LabelMap& labels, const TaskSplit& split, std::size_t step) {
  const auto& keep = split.classes(step);
  LabelMap out = labels;
  for (auto& l : out.data)
    if (l != kIgnoreLabel && !std::binary_search(keep.begin(), keep.end(), l)) l = 0;
  return out;
}

SegSample collapse_labels(const SegSample& sample, const TaskSplit& split, std::size_t step) {
  return {sample.image, collapse_labels(sample.labels, split, step)};
}

LabelMap collapse_to_known(const LabelMap& labels, const TaskSplit& split, std::size_t step) {
  const auto known = split.classes_through(step);
  LabelMap out = labels;
  for (auto& l : out.data)
    if (l != kIgnoreLabel && !std::binary_search(known.begin(), known.end(), l)) l = 0;
  return out;
}

std::vector<std::size_t> select_step_images(const std::vector<SegSample>& samples,
                                            const TaskSplit& split, std::size_t step) {
  const auto& want = split.classes(step);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& d = samples[i].labels.data;
    if (std::any_of(d.begin(), d.end(), [&](std::uint16_t l) {
          return std::binary_search(want.begin(), want.end(), l);
        }))
      out.push_back(i);
  }
  return out;
}

}  // namespace fairseg
