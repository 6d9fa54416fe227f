#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace fairseg {

// Dense row-major H x W x C array of doubles.
class Grid {
 public:
  Grid() = default;
  Grid(std::size_t height, std::size_t width, std::size_t channels, double fill = 0.0)
      : height_(height), width_(width), channels_(channels),
        data_(height * width * channels, fill) {}

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t channels() const noexcept { return channels_; }
  std::size_t pixels() const noexcept { return height_ * width_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& at(std::size_t y, std::size_t x, std::size_t c) {
    return data_[(y * width_ + x) * channels_ + c];
  }
  double at(std::size_t y, std::size_t x, std::size_t c) const {
    return data_[(y * width_ + x) * channels_ + c];
  }

  std::span<double> pixel(std::size_t index) {
    return {data_.data() + index * channels_, channels_};
  }
  std::span<const double> pixel(std::size_t index) const {
    return {data_.data() + index * channels_, channels_};
  }

  std::vector<double>& values() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  bool same_shape(const Grid& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }
  bool all_finite() const noexcept;

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t channels_ = 0;
  std::vector<double> data_;
};

inline constexpr std::uint16_t kIgnoreLabel = 65535;

// Per-pixel integer class ids; 0 is background, kIgnoreLabel marks void pixels.
struct LabelMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint16_t> data;

  LabelMap() = default;
  LabelMap(std::size_t h, std::size_t w, std::uint16_t fill = 0)
      : height(h), width(w), data(h * w, fill) {}

  std::size_t pixels() const noexcept { return height * width; }
  std::uint16_t& at(std::size_t y, std::size_t x) { return data[y * width + x]; }
  std::uint16_t at(std::size_t y, std::size_t x) const { return data[y * width + x]; }

  friend bool operator==(const LabelMap&, const LabelMap&) = default;
};

}  // namespace fairseg
