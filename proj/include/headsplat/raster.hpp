#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "headsplat/error.hpp"

namespace headsplat {

/// Axis-aligned texel rectangle [x, x+width) x [y, y+height).
struct Rect {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;

  bool contains(int px, int py) const {
    return px >= x && px < x + width && py >= y && py < y + height;
  }
  bool operator==(const Rect&) const = default;
};

/// Row-major multi-channel raster with a per-texel validity flag. Values are
/// held in double precision; on-disk containers store f32.
class Raster {
 public:
  Raster() = default;
  Raster(int width, int height, int channels, double fill = 0.0)
      : width_(width), height_(height), channels_(channels),
        data_(static_cast<std::size_t>(width) * height * channels, fill),
        valid_(static_cast<std::size_t>(width) * height, 1) {
    if (width < 0 || height < 0 || channels < 1)
      throw ValidationError("raster dimensions must be non-negative with >= 1 channel");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  std::size_t texel_count() const { return valid_.size(); }

  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width_ + x; }

  double& at(int x, int y, int c) { return data_[index(x, y) * channels_ + c]; }
  double at(int x, int y, int c) const { return data_[index(x, y) * channels_ + c]; }

  std::span<double> texel(int x, int y) {
    return {data_.data() + index(x, y) * channels_, static_cast<std::size_t>(channels_)};
  }
  std::span<const double> texel(int x, int y) const {
    return {data_.data() + index(x, y) * channels_, static_cast<std::size_t>(channels_)};
  }

  bool valid(int x, int y) const { return valid_[index(x, y)] != 0; }
  void set_valid(int x, int y, bool v) { valid_[index(x, y)] = v ? 1 : 0; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }
  std::vector<std::uint8_t>& validity() { return valid_; }
  const std::vector<std::uint8_t>& validity() const { return valid_; }

  bool same_size(const Raster& o) const { return width_ == o.width_ && height_ == o.height_; }
  bool same_shape(const Raster& o) const { return same_size(o) && channels_ == o.channels_; }
  Rect bounds() const { return {0, 0, width_, height_}; }

  bool operator==(const Raster&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 1;
  std::vector<double> data_;
  std::vector<std::uint8_t> valid_;
};

/// Copies the texels of `roi` out of `full` into a new raster.
Raster extract_region(const Raster& full, const Rect& roi);

/// Bilinear lookup at texture coordinates (u, v) in [0,1]^2 with texel
/// centers at (i + 0.5) / size. Coordinates are clamped to the raster.
void sample_bilinear(const Raster& r, double u, double v, std::span<double> out);

}  // namespace headsplat
