#include <algorithm>
#include <cmath>
#include <numeric>

#include "fairseg/dataset.hpp"
#include "fairseg/error.hpp"
#include "fairseg/rng.hpp"

namespace fairseg {

const char* to_string(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::Rectangle: return "rectangle";
    case ShapeKind::Circle: return "circle";
    case ShapeKind::RightTriangle: return "triangle";
  }
  return "?";
}

std::vector<double> power_law_frequencies(std::size_t num_classes, double exponent) {
  std::vector<double> freq(num_classes);
  for (std::size_t r = 0; r < num_classes; ++r)
    freq[r] = std::pow(static_cast<double>(r + 1), -exponent);
  const double total = std::accumulate(freq.begin(), freq.end(), 0.0);
  for (double& f : freq) f /= total;
  return freq;
}

BenchmarkSpec shapes8_spec() {
  BenchmarkSpec spec;
  spec.num_classes = 8;
  spec.height = 32;
  spec.width = 32;
  spec.class_frequencies = power_law_frequencies(8, 1.5);
  return spec;
}

void BenchmarkSpec::validate() const {
  require(height > 0 && width > 0, ErrorKind::Spec, "image_size must be non-zero");
  require(num_classes >= 1 && num_classes < kIgnoreLabel, ErrorKind::Spec,
          "num_classes out of range");
  require(class_frequencies.size() == num_classes, ErrorKind::Spec,
          "class_frequencies must have num_classes entries");
  double total = 0.0;
  for (double f : class_frequencies) {
    require(std::isfinite(f) && f > 0.0, ErrorKind::Spec,
            "class_frequencies entries must be positive");
    total += f;
  }
  require(std::abs(total - 1.0) <= 1e-9, ErrorKind::Spec, "class_frequencies must sum to 1");
  require(palette.empty() || palette.size() == num_classes, ErrorKind::Spec,
          "palette must list one style per class");
  require(noise_sigma >= 0.0 && color_jitter >= 0.0, ErrorKind::Spec,
          "noise_sigma and color_jitter must be non-negative");
}

std::vector<ClassStyle> BenchmarkSpec::resolved_palette() const {
  if (!palette.empty()) return palette;
  std::vector<ClassStyle> out(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) {
    // HSV with s=0.85, v=0.9 at evenly spaced hues.
    const double hue = 6.0 * static_cast<double>(c) / num_classes;
    const double v = 0.9, s = 0.85;
    const double chroma = v * s;
    const double x = chroma * (1.0 - std::abs(std::fmod(hue, 2.0) - 1.0));
    const double m = v - chroma;
    std::array<double, 3> rgb{};
    switch (static_cast<int>(hue)) {
      case 0: rgb = {chroma, x, 0}; break;
      case 1: rgb = {x, chroma, 0}; break;
      case 2: rgb = {0, chroma, x}; break;
      case 3: rgb = {0, x, chroma}; break;
      case 4: rgb = {x, 0, chroma}; break;
      default: rgb = {chroma, 0, x}; break;
    }
    for (double& ch : rgb) ch += m;
    out[c] = {static_cast<ShapeKind>(c % 3), rgb};
  }
  return out;
}

namespace {

std::uint16_t sample_class(Rng& rng, const std::vector<double>& freq) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t c = 0; c < freq.size(); ++c) {
    acc += freq[c];
    if (u < acc) return static_cast<std::uint16_t>(c + 1);
  }
  return static_cast<std::uint16_t>(freq.size());
}

struct Shape {
  ShapeKind kind;
  double cx, cy;    // rectangle/circle centre or triangle right-angle corner
  double a, b;      // half extents, radius, or leg lengths
  double sx, sy;    // triangle orientation
  bool covers(double x, double y) const {
    switch (kind) {
      case ShapeKind::Rectangle:
        return std::abs(x - cx) <= a && std::abs(y - cy) <= b;
      case ShapeKind::Circle:
        return (x - cx) * (x - cx) + (y - cy) * (y - cy) <= a * a;
      case ShapeKind::RightTriangle: {
        const double u = (x - cx) * sx, v = (y - cy) * sy;
        return u >= 0 && v >= 0 && u / a + v / b <= 1.0;
      }
    }
    return false;
  }
};

Shape sample_shape(Rng& rng, ShapeKind kind, const BenchmarkSpec& spec) {
  const double scale = std::min(spec.height, spec.width) / 32.0;
  Shape s{kind, rng.uniform(0.0, static_cast<double>(spec.width)),
          rng.uniform(0.0, static_cast<double>(spec.height)), 0, 0, 1, 1};
  switch (kind) {
    case ShapeKind::Rectangle:
      s.a = scale * rng.uniform(3.0, 7.0);
      s.b = scale * rng.uniform(3.0, 7.0);
      break;
    case ShapeKind::Circle:
      s.a = scale * rng.uniform(3.0, 7.0);
      break;
    case ShapeKind::RightTriangle:
      s.a = scale * rng.uniform(7.0, 15.0);
      s.b = scale * rng.uniform(7.0, 15.0);
      s.sx = rng.below(2) ? 1.0 : -1.0;
      s.sy = rng.below(2) ? 1.0 : -1.0;
      break;
  }
  return s;
}

}  // namespace

SegSample generate_sample(const BenchmarkSpec& spec, Split split, std::size_t index) {
  Rng rng(derive_seed(spec.seed, split == Split::Train ? "train" : "test", index));
  const auto palette = spec.resolved_palette();
  const std::size_t h = spec.height, w = spec.width;

  SegSample sample{Grid(h, w, 3), LabelMap(h, w, 0)};
  std::array<double, 3> bg{};
  for (std::size_t ch = 0; ch < 3; ++ch)
    bg[ch] = spec.background_color[ch] + rng.uniform(-spec.color_jitter, spec.color_jitter);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t ch = 0; ch < 3; ++ch) sample.image.at(y, x, ch) = bg[ch];

  // Painted back to front; later shapes occlude earlier ones.
  const std::uint32_t shapes = 1 + rng.below(4);
  for (std::uint32_t n = 0; n < shapes; ++n) {
    const std::uint16_t cls = sample_class(rng, spec.class_frequencies);
    const ClassStyle& style = palette[cls - 1];
    std::array<double, 3> color{};
    for (std::size_t ch = 0; ch < 3; ++ch)
      color[ch] = style.color[ch] + rng.uniform(-spec.color_jitter, spec.color_jitter);
    const Shape shape = sample_shape(rng, style.shape, spec);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        if (!shape.covers(static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5)) continue;
        sample.labels.at(y, x) = cls;
        for (std::size_t ch = 0; ch < 3; ++ch) sample.image.at(y, x, ch) = color[ch];
      }
  }

  // Noise, clamp, and round to float32 so file round-trips are exact.
  for (double& v : sample.image.values()) {
    const double noisy = v + spec.noise_sigma * rng.normal();
    v = static_cast<double>(static_cast<float>(std::clamp(noisy, 0.0, 1.0)));
  }
  return sample;
}

Benchmark generate(const BenchmarkSpec& spec) {
  spec.validate();
  Benchmark out;
  out.train.num_classes = out.test.num_classes = spec.num_classes;
  out.train.samples.reserve(spec.train_count);
  out.test.samples.reserve(spec.test_count);
  for (std::size_t i = 0; i < spec.train_count; ++i)
    out.train.samples.push_back(generate_sample(spec, Split::Train, i));
  for (std::size_t i = 0; i < spec.test_count; ++i)
    out.test.samples.push_back(generate_sample(spec, Split::Test, i));
  return out;
}

std::vector<std::uint64_t> pixel_class_counts(const Dataset& data) {
  std::vector<std::uint64_t> counts(data.num_classes + 1u, 0);
  for (const auto& s : data.samples)
    for (std::uint16_t l : s.labels.data)
      if (l != kIgnoreLabel && l < counts.size()) ++counts[l];
  return counts;
}

}  // namespace fairseg
