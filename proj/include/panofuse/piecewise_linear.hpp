// Copyright (C) 2026 The Panofuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "panofuse/error.hpp"
#include "panofuse/image.hpp"

namespace panofuse {

/// Continuous piecewise-linear function y = G(x) with knots x_0 < ... < x_K.
///
/// Stored as the function values at the knots, which makes continuity hold
/// by construction; segment k has scale (y_{k+1} - y_k) / (x_{k+1} - x_k) and
/// shift y_k - scale * x_k. Inputs outside [x_0, x_K] follow the end segment.
class PiecewiseLinearMap {
 public:
  PiecewiseLinearMap() = default;

  PiecewiseLinearMap(std::vector<double> knots, std::vector<double> values)
      : knots_(std::move(knots)), values_(std::move(values)) {
    if (knots_.size() < 2 || knots_.size() != values_.size()) {
      throw ConfigError("piecewise-linear map needs >= 2 knots and one value per knot");
    }
    for (std::size_t k = 0; k + 1 < knots_.size(); ++k) {
      if (!(knots_[k] < knots_[k + 1])) {
        throw ConfigError("piecewise-linear knots must be strictly increasing");
      }
    }
    for (std::size_t k = 0; k < knots_.size(); ++k) {
      if (!std::isfinite(knots_[k]) || !std::isfinite(values_[k])) {
        throw NumericError("piecewise-linear map has non-finite knots or values");
      }
    }
  }

  /// K equal-width segments over [lo, hi] with G(x) = x.
  static PiecewiseLinearMap identity(double lo, double hi, int segments) {
    return PiecewiseLinearMap(uniform_knots(lo, hi, segments), uniform_knots(lo, hi, segments));
  }

  static std::vector<double> uniform_knots(double lo, double hi, int segments) {
    if (segments < 1) throw ConfigError("piecewise-linear map needs >= 1 segment");
    if (!(hi > lo)) throw ConfigError("piecewise-linear knot range must have hi > lo");
    std::vector<double> k(static_cast<std::size_t>(segments) + 1);
    for (int i = 0; i <= segments; ++i) k[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / segments;
    k.back() = hi;
    return k;
  }

  /// Builds the map from its first value and per-segment slopes.
  static PiecewiseLinearMap from_slopes(std::vector<double> knots, double first_value,
                                        std::span<const double> slopes) {
    if (slopes.size() + 1 != knots.size()) {
      throw ConfigError("piecewise-linear map: need one slope per segment");
    }
    std::vector<double> values(knots.size());
    values[0] = first_value;
    for (std::size_t k = 0; k < slopes.size(); ++k) {
      values[k + 1] = values[k] + slopes[k] * (knots[k + 1] - knots[k]);
    }
    return PiecewiseLinearMap(std::move(knots), std::move(values));
  }

  int segments() const noexcept { return static_cast<int>(knots_.size()) - 1; }
  std::span<const double> knots() const noexcept { return knots_; }
  std::span<const double> values() const noexcept { return values_; }

  double scale(int k) const {
    const auto i = static_cast<std::size_t>(k);
    return (values_[i + 1] - values_[i]) / (knots_[i + 1] - knots_[i]);
  }
  double shift(int k) const { return values_[static_cast<std::size_t>(k)] - scale(k) * knots_[static_cast<std::size_t>(k)]; }

  /// Index of the segment that evaluates x (end segments extend outward).
  int segment_of(double x) const noexcept {
    const auto it = std::upper_bound(knots_.begin() + 1, knots_.end() - 1, x);
    return static_cast<int>(it - (knots_.begin() + 1));
  }

  double operator()(double x) const noexcept {
    const auto k = static_cast<std::size_t>(segment_of(x));
    const double s = (values_[k + 1] - values_[k]) / (knots_[k + 1] - knots_[k]);
    return values_[k] + s * (x - knots_[k]);
  }

  bool is_monotone(double min_slope) const {
    for (int k = 0; k < segments(); ++k) {
      if (scale(k) < min_slope) return false;
    }
    return true;
  }

  bool is_identity() const noexcept { return knots_ == values_; }

  /// G^-1(y) for a strictly increasing map.
  double inverse(double y) const {
    if (!is_monotone(0.0) || !strictly_increasing()) {
      throw NumericError("piecewise-linear map is not invertible (non-increasing segment)");
    }
    const auto it = std::upper_bound(values_.begin() + 1, values_.end() - 1, y);
    const auto k = static_cast<std::size_t>(it - (values_.begin() + 1));
    const double s = (values_[k + 1] - values_[k]) / (knots_[k + 1] - knots_[k]);
    return knots_[k] + (y - values_[k]) / s;
  }

  friend bool operator==(const PiecewiseLinearMap&, const PiecewiseLinearMap&) = default;

 private:
  bool strictly_increasing() const noexcept {
    for (std::size_t k = 0; k + 1 < values_.size(); ++k) {
      if (!(values_[k] < values_[k + 1])) return false;
    }
    return true;
  }

  std::vector<double> knots_;
  std::vector<double> values_;
};

/// G applied pixelwise to a single-channel depth patch.
template <typename T>
ImageD apply_plmap(const PiecewiseLinearMap& map, const Image<T>& depth) {
  ImageD out(depth.width(), depth.height(), depth.channels());
  auto src = depth.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double x = static_cast<double>(src[i]);
    if (!std::isfinite(x)) throw NumericError("apply_plmap: non-finite input depth");
    dst[i] = map(x);
  }
  return out;
}

}  // namespace panofuse
