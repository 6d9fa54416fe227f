#include "fairseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>

#include "json.hpp"

#include "fairseg/error.hpp"

namespace fairseg {

void ConfusionMatrix::accumulate(std::span<const std::uint16_t> predicted,
                                 std::span<const std::uint16_t> truth) {
  require(predicted.size() == truth.size(), ErrorKind::Dimension,
          "confusion accumulate: shapes differ");
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] == kIgnoreLabel) continue;
    require(truth[i] < k_ && predicted[i] < k_, ErrorKind::Label,
            "class id outside registry of " + std::to_string(k_));
    ++counts_[truth[i] * k_ + predicted[i]];
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  require(other.k_ == k_, ErrorKind::Dimension, "confusion merge: class counts differ");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

std::uint64_t ConfusionMatrix::true_count(std::size_t c) const {
  std::uint64_t n = 0;
  for (std::size_t p = 0; p < k_; ++p) n += at(c, p);
  return n;
}

std::uint64_t ConfusionMatrix::predicted_count(std::size_t c) const {
  std::uint64_t n = 0;
  for (std::size_t t = 0; t < k_; ++t) n += at(t, c);
  return n;
}

std::optional<double> iou(const ConfusionMatrix& cm, std::size_t cls) {
  if (cls >= cm.num_classes()) return std::nullopt;
  const std::uint64_t tp = cm.at(cls, cls);
  const std::uint64_t fn = cm.true_count(cls) - tp;
  const std::uint64_t fp = cm.predicted_count(cls) - tp;
  const std::uint64_t denom = tp + fp + fn;
  if (denom == 0) return std::nullopt;
  return static_cast<double>(tp) / static_cast<double>(denom);
}

double fairness_gap(const std::map<std::uint16_t, double>& error_rates) {
  require(error_rates.size() >= 2, ErrorKind::Unavailable,
          "fairness gap needs at least two evaluated classes");
  double lo = error_rates.begin()->second, hi = lo;
  for (const auto& [c, e] : error_rates) {
    lo = std::min(lo, e);
    hi = std::max(hi, e);
  }
  return hi - lo;
}

double normalized_entropy(std::span<const double> dist) {
  require(!dist.empty(), ErrorKind::Dimension, "entropy of empty distribution");
  double total = 0.0;
  for (double v : dist) {
    require(v >= 0.0, ErrorKind::Dimension, "negative mass in distribution");
    total += v;
  }
  require(total > 0.0, ErrorKind::Unavailable, "entropy of all-zero counts");
  if (dist.size() == 1) return 0.0;
  double h = 0.0;
  for (double v : dist) {
    if (v <= 0.0) continue;
    const double p = v / total;
    h -= p * std::log(p);
  }
  return std::clamp(h / std::log(static_cast<double>(dist.size())), 0.0, 1.0);
}

double normalized_entropy(std::span<const std::uint64_t> counts) {
  std::vector<double> d(counts.begin(), counts.end());
  return normalized_entropy(std::span<const double>(d));
}

void ClassErrorAccumulator::accumulate(const Grid& probs, std::span<const std::uint16_t> truth) {
  require(truth.size() == probs.pixels(), ErrorKind::Dimension, "class error: shapes differ");
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto t = truth[i];
    if (t == kIgnoreLabel) continue;
    require(t < sum_.size(), ErrorKind::Label, "class id outside registry");
    const double p = t < probs.channels() ? probs.pixel(i)[t] : 0.0;
    sum_[t] += -std::log(std::max(p, 1e-300));
    ++count_[t];
  }
}

void ClassErrorAccumulator::merge(const ClassErrorAccumulator& other) {
  for (std::size_t c = 0; c < sum_.size(); ++c) {
    sum_[c] += other.sum_[c];
    count_[c] += other.count_[c];
  }
}

std::map<std::uint16_t, double> ClassErrorAccumulator::error_rates() const {
  std::map<std::uint16_t, double> out;
  for (std::size_t c = 0; c < sum_.size(); ++c)
    if (count_[c]) out[static_cast<std::uint16_t>(c)] = sum_[c] / static_cast<double>(count_[c]);
  return out;
}

std::size_t count_isolated_pixels(std::span<const std::uint16_t> labels, std::size_t h,
                                  std::size_t w) {
  require(labels.size() == h * w, ErrorKind::Dimension, "isolated pixels: shape mismatch");
  std::size_t n = 0;
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const auto l = labels[y * w + x];
      bool alone = true;
      for (int dy = -1; dy <= 1 && alone; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (dy == 0 && dx == 0) continue;
          const auto ny = static_cast<std::ptrdiff_t>(y) + dy;
          const auto nx = static_cast<std::ptrdiff_t>(x) + dx;
          if (ny < 0 || nx < 0 || ny >= static_cast<std::ptrdiff_t>(h) ||
              nx >= static_cast<std::ptrdiff_t>(w))
            continue;
          if (labels[static_cast<std::size_t>(ny) * w + static_cast<std::size_t>(nx)] == l) {
            alone = false;
            break;
          }
        }
      if (alone) ++n;
    }
  return n;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double population_std(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double m = mean_of(v);
  double drift = 0.0;
  for (double x : v) drift += x - m;
  m += drift / static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

GroupStats group_stats(const std::vector<std::optional<double>>& ious,
                       const std::vector<std::uint16_t>& classes) {
  GroupStats g;
  g.classes = classes;
  std::vector<double> present;
  for (auto c : classes)
    if (c < ious.size() && ious[c]) present.push_back(*ious[c]);
  if (!present.empty()) g.miou = mean_of(present);
  g.std_iou = population_std(present);
  return g;
}

MetricsReport grouped_report(const ConfusionMatrix& cm, const TaskSplit& split,
                             const std::map<std::uint16_t, double>& class_errors,
                             const std::vector<double>& step_mious,
                             const GroupOptions& options) {
  const std::size_t k = cm.num_classes();
  MetricsReport rep;
  rep.class_error = class_errors;
  rep.step_mious = step_mious;
  for (std::size_t c = 0; c < k; ++c) {
    rep.class_iou.push_back(iou(cm, c));
    rep.class_pixels.push_back(cm.true_count(c));
  }

  std::vector<std::uint16_t> all(k), later;
  std::iota(all.begin(), all.end(), std::uint16_t{0});
  for (std::size_t t = 2; t <= split.num_steps(); ++t) {
    const auto& cs = split.classes(t);
    later.insert(later.end(), cs.begin(), cs.end());
  }
  rep.initial = group_stats(rep.class_iou, split.classes(1));
  rep.later = group_stats(rep.class_iou, later);
  rep.all = group_stats(rep.class_iou, all);
  rep.std_iou = rep.all.std_iou;

  // Major/minor by ground-truth pixel share among foreground classes.
  std::vector<std::uint16_t> fg;
  std::vector<double> shares;
  for (std::size_t c = 1; c < k; ++c)
    if (rep.class_pixels[c] > 0) {
      fg.push_back(static_cast<std::uint16_t>(c));
      shares.push_back(static_cast<double>(rep.class_pixels[c]));
    }
  if (!shares.empty()) {
    std::vector<double> sorted = shares;
    std::sort(sorted.begin(), sorted.end());
    const double pos = options.major_quantile * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = static_cast<std::size_t>(std::ceil(pos));
    const double threshold = sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
    std::vector<std::uint16_t> major, minor;
    for (std::size_t i = 0; i < fg.size(); ++i)
      (shares[i] > threshold ? major : minor).push_back(fg[i]);
    rep.major = group_stats(rep.class_iou, major);
    rep.minor = group_stats(rep.class_iou, minor);
  }

  if (!step_mious.empty()) rep.miou_avg = mean_of(step_mious);
  if (class_errors.size() >= 2) rep.fairness_gap = fairness_gap(class_errors);
  std::map<std::uint16_t, double> iou_errors;
  for (std::size_t c = 0; c < k; ++c)
    if (rep.class_iou[c]) iou_errors[static_cast<std::uint16_t>(c)] = 1.0 - *rep.class_iou[c];
  if (iou_errors.size() >= 2) rep.fairness_gap_iou = fairness_gap(iou_errors);

  std::vector<std::uint64_t> fg_counts(rep.class_pixels.begin() + (k > 1 ? 1 : 0),
                                       rep.class_pixels.end());
  const bool any = std::any_of(fg_counts.begin(), fg_counts.end(), [](auto n) { return n > 0; });
  rep.entropy = any ? normalized_entropy(std::span<const std::uint64_t>(fg_counts)) : 0.0;
  return rep;
}

namespace {

nlohmann::json opt(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

nlohmann::json group_json(const GroupStats& g) {
  return {{"miou", opt(g.miou)}, {"std_iou", g.std_iou}, {"classes", g.classes}};
}

std::optional<double> read_opt(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

GroupStats group_from(const nlohmann::json& j) {
  GroupStats g;
  g.miou = read_opt(j.at("miou"));
  g.std_iou = j.at("std_iou").get<double>();
  g.classes = j.at("classes").get<std::vector<std::uint16_t>>();
  return g;
}

}  // namespace

std::string report_json(const MetricsReport& r) {
  nlohmann::json j;
  nlohmann::json classes = nlohmann::json::array();
  for (std::size_t c = 0; c < r.class_iou.size(); ++c) {
    const auto err = r.class_error.find(static_cast<std::uint16_t>(c));
    classes.push_back({{"id", c},
                       {"pixels", r.class_pixels[c]},
                       {"iou", opt(r.class_iou[c])},
                       {"ce_error", err == r.class_error.end() ? nlohmann::json(nullptr)
                                                               : nlohmann::json(err->second)}});
  }
  j["classes"] = classes;
  j["initial"] = group_json(r.initial);
  j["later"] = group_json(r.later);
  j["all"] = group_json(r.all);
  j["major"] = group_json(r.major);
  j["minor"] = group_json(r.minor);
  j["miou_avg"] = opt(r.miou_avg);
  j["step_mious"] = r.step_mious;
  j["std_iou"] = r.std_iou;
  j["fairness_gap"] = opt(r.fairness_gap);
  j["fairness_gap_iou"] = opt(r.fairness_gap_iou);
  j["entropy"] = r.entropy;
  j["isolated_pixels"] = r.isolated_pixels;
  return j.dump(2);
}

MetricsReport report_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("bad report summary: ") + e.what());
  }
  MetricsReport r;
  try {
    for (const auto& c : j.at("classes")) {
      r.class_iou.push_back(read_opt(c.at("iou")));
      r.class_pixels.push_back(c.at("pixels").get<std::uint64_t>());
      if (!c.at("ce_error").is_null())
        r.class_error[c.at("id").get<std::uint16_t>()] = c.at("ce_error").get<double>();
    }
    r.initial = group_from(j.at("initial"));
    r.later = group_from(j.at("later"));
    r.all = group_from(j.at("all"));
    r.major = group_from(j.at("major"));
    r.minor = group_from(j.at("minor"));
    r.miou_avg = read_opt(j.at("miou_avg"));
    r.step_mious = j.at("step_mious").get<std::vector<double>>();
    r.std_iou = j.at("std_iou").get<double>();
    r.fairness_gap = read_opt(j.at("fairness_gap"));
    r.fairness_gap_iou = read_opt(j.at("fairness_gap_iou"));
    r.entropy = j.at("entropy").get<double>();
    r.isolated_pixels = j.at("isolated_pixels").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("report summary missing fields: ") + e.what());
  }
  return r;
}

void write_report_csv(const std::filesystem::path& path, const MetricsReport& r) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << std::setprecision(10);
  out << "class,pixels,iou,ce_error\n";
  for (std::size_t c = 0; c < r.class_iou.size(); ++c) {
    out << c << "," << r.class_pixels[c] << ",";
    if (r.class_iou[c]) out << *r.class_iou[c];
    out << ",";
    const auto err = r.class_error.find(static_cast<std::uint16_t>(c));
    if (err != r.class_error.end()) out << err->second;
    out << "\n";
  }
  auto row = [&](const char* key, const std::optional<double>& v) {
    out << key << ",";
    if (v) out << *v;
    out << "\n";
  };
  out << "\nmetric,value\n";
  row("miou_initial", r.initial.miou);
  row("std_initial", r.initial.std_iou);
  row("miou_later", r.later.miou);
  row("std_later", r.later.std_iou);
  row("miou_all", r.all.miou);
  row("std_all", r.all.std_iou);
  row("miou_avg", r.miou_avg);
  row("miou_major", r.major.miou);
  row("std_major", r.major.std_iou);
  row("miou_minor", r.minor.miou);
  row("std_minor", r.minor.std_iou);
  row("fairness_gap", r.fairness_gap);
  row("fairness_gap_iou", r.fairness_gap_iou);
  row("entropy", r.entropy);
  row("isolated_pixels", static_cast<double>(r.isolated_pixels));
}

}  // namespace fairseg
