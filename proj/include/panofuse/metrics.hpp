// Copyright (C) 2026 The Panofuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <vector>

#include "panofuse/geometry.hpp"
#include "panofuse/image.hpp"

namespace panofuse {

/// Mean absolute horizontal gradient across crop-boundary column pairs versus
/// all other column pairs.
struct SeamMetric {
  double boundary = 0.0;
  double interior = 0.0;

  double ratio() const noexcept { return interior > 0.0 ? boundary / interior : 0.0; }
};

template <typename T>
SeamMetric seam_metric(const Image<T>& img, const CropLayout& layout) {
  if (img.width() != layout.canvas_width || img.height() != layout.canvas_height) {
    throw DimensionError("seam_metric: image does not match layout canvas");
  }
  const int w = img.width();
  const int pairs = layout.cyclic ? w : w - 1;
  std::vector<std::uint8_t> is_boundary(static_cast<std::size_t>(w), 0);
  for (const int g : layout.boundary_columns()) is_boundary[static_cast<std::size_t>(g)] = 1;

  double sum_b = 0.0;
  double sum_i = 0.0;
  std::size_t n_b = 0;
  std::size_t n_i = 0;
  for (int y = 0; y < img.height(); ++y) {
    for (int g = 0; g < pairs; ++g) {
      const int g1 = (g + 1) % w;
      double d = 0.0;
      for (int c = 0; c < img.channels(); ++c) {
        d += std::abs(static_cast<double>(img(g1, y, c)) - static_cast<double>(img(g, y, c)));
      }
      d /= img.channels();
      if (is_boundary[static_cast<std::size_t>(g)]) {
        sum_b += d;
        ++n_b;
      } else {
        sum_i += d;
        ++n_i;
      }
    }
  }
  return {n_b ? sum_b / static_cast<double>(n_b) : 0.0,
          n_i ? sum_i / static_cast<double>(n_i) : 0.0};
}

}  // namespace panofuse
