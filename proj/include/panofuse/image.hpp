// Copyright (C) 2026 The Panofuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "panofuse/error.hpp"

namespace panofuse {

/// Dense row-major image with interleaved channels.
///
/// Pixel (x, y) has linear index y * width + x; channel c of that pixel is
/// stored at data()[index * channels + c].
template <typename T>
class Image {
 public:
  using value_type = T;

  Image() = default;

  Image(int width, int height, int channels = 1, T fill = T{})
      : width_(width), height_(height), channels_(channels) {
    if (width < 0 || height < 0 || channels < 1) {
      throw DimensionError("Image: invalid extents " + std::to_string(width) + "x" +
                           std::to_string(height) + "x" + std::to_string(channels));
    }
    data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(width_) * height_;
  }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(int x, int y, int c = 0) noexcept {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  const T& operator()(int x, int y, int c = 0) const noexcept {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }

  std::span<T> pixel(std::size_t index) noexcept {
    return {data_.data() + index * channels_, static_cast<std::size_t>(channels_)};
  }
  std::span<const T> pixel(std::size_t index) const noexcept {
    return {data_.data() + index * channels_, static_cast<std::size_t>(channels_)};
  }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }

  template <typename U>
  bool same_extent(const Image<U>& other) const noexcept {
    return width_ == other.width() && height_ == other.height();
  }
  template <typename U>
  bool same_shape(const Image<U>& other) const noexcept {
    return same_extent(other) && channels_ == other.channels();
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  friend bool operator==(const Image& a, const Image& b) {
    return a.width_ == b.width_ && a.height_ == b.height_ &&
           a.channels_ == b.channels_ && a.data_ == b.data_;
  }

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 1;
  std::vector<T> data_;
};

using ImageF = Image<float>;
using ImageD = Image<double>;
using Mask = Image<std::uint8_t>;

struct Rect {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;

  bool contains(int px, int py) const noexcept {
    return px >= x && px < x + width && py >= y && py < y + height;
  }
  bool fits(int canvas_width, int canvas_height) const noexcept {
    return x >= 0 && y >= 0 && width > 0 && height > 0 && x + width <= canvas_width &&
           y + height <= canvas_height;
  }
  friend bool operator==(const Rect&, const Rect&) = default;
};

template <typename T, typename U>
Image<T> convert(const Image<U>& src) {
  Image<T> out(src.width(), src.height(), src.channels());
  auto in = src.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < in.size(); ++i) dst[i] = static_cast<T>(in[i]);
  return out;
}

template <typename T>
bool all_finite(const Image<T>& img) {
  for (const T v : img.data()) {
    if (!std::isfinite(static_cast<double>(v))) return false;
  }
  return true;
}

/// Copy of the rect region of src.
template <typename T>
Image<T> crop_rect(const Image<T>& src, const Rect& r) {
  if (!r.fits(src.width(), src.height())) throw DimensionError("crop_rect: rect outside image");
  Image<T> out(r.width, r.height, src.channels());
  for (int y = 0; y < r.height; ++y)
    for (int x = 0; x < r.width; ++x)
      for (int c = 0; c < src.channels(); ++c) out(x, y, c) = src(r.x + x, r.y + y, c);
  return out;
}

/// Writes patch into dst at rect r, bit for bit.
template <typename T>
void stamp(Image<T>& dst, const Image<T>& patch, const Rect& r) {
  if (patch.width() != r.width || patch.height() != r.height ||
      patch.channels() != dst.channels() || !r.fits(dst.width(), dst.height())) {
    throw DimensionError("stamp: patch does not match rect/canvas");
  }
  for (int y = 0; y < r.height; ++y)
    for (int x = 0; x < r.width; ++x)
      for (int c = 0; c < dst.channels(); ++c) dst(r.x + x, r.y + y, c) = patch(x, y, c);
}

/// Root-mean-square difference over pixels where mask != 0 (all pixels when
/// mask is empty), averaged over channels.
template <typename T, typename U>
double rmse(const Image<T>& a, const Image<U>& b, const Mask* mask = nullptr) {
  if (!a.same_shape(b)) throw DimensionError("rmse: shape mismatch");
  double sum = 0.0;
  std::size_t count = 0;
  const int ch = a.channels();
  for (std::size_t i = 0; i < a.pixel_count(); ++i) {
    if (mask != nullptr && mask->data()[i] == 0) continue;
    for (int c = 0; c < ch; ++c) {
      const double d = static_cast<double>(a.data()[i * ch + c]) -
                       static_cast<double>(b.data()[i * ch + c]);
      sum += d * d;
    }
    count += static_cast<std::size_t>(ch);
  }
  return count == 0 ? 0.0 : std::sqrt(sum / static_cast<double>(count));
}

}  // namespace panofuse
