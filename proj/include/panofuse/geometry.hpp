// Copyright (C) 2026 The Panofuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include "panofuse/error.hpp"
#include "panofuse/image.hpp"

namespace panofuse {

/// Index stored for pixels that have no counterpart in the other domain.
inline constexpr std::int32_t kUnmapped = -1;

/// Nearest-neighbor rounding used by every map: floor(x + 0.5).
inline std::int64_t round_nearest(double x) noexcept {
  return static_cast<std::int64_t>(std::floor(x + 0.5));
}

/// Pinhole camera looking along +z after a rotation of `yaw` radians about
/// the vertical axis. Horizontal and vertical focal lengths are equal.
struct PerspectiveCamera {
  double fov_deg = 45.0;
  int width = 512;
  int height = 512;
  double yaw = 0.0;

  double focal_px() const noexcept {
    return (width / 2.0) / std::tan(fov_deg * std::numbers::pi / 360.0);
  }

  void validate() const {
    if (!(fov_deg > 0.0 && fov_deg < 180.0)) {
      throw ConfigError("camera fov_deg must be in (0, 180), got " + std::to_string(fov_deg));
    }
    if (width < 8 || height < 8) {
      throw ConfigError("camera must be at least 8x8 pixels, got " + std::to_string(width) +
                        "x" + std::to_string(height));
    }
  }
};

/// Cylindrical canvas spanning the full 360 degrees of azimuth.
///
/// Column u looks at azimuth (u - width/2) * 2pi / width; row v sits at height
/// (v - (height-1)/2) on a cylinder of radius focal_px.
struct CylinderSpec {
  int width = 0;
  int height = 0;
  double focal_px = 0.0;

  double center_column() const noexcept { return static_cast<double>(width / 2); }
  double center_row() const noexcept { return (height - 1) / 2.0; }
  double azimuth(double u) const noexcept {
    return (u - center_column()) * 2.0 * std::numbers::pi / width;
  }
  /// Angle subtended by one column.
  double pixel_angle() const noexcept { return 2.0 * std::numbers::pi / width; }

  void validate() const {
    if (width < 8 || height < 1 || !(focal_px > 0.0)) {
      throw ConfigError("cylinder spec must have width >= 8, height >= 1 and focal > 0");
    }
    const auto expected = static_cast<int>(std::floor(2.0 * std::numbers::pi * focal_px));
    if (width != expected) {
      throw ConfigError("cylinder width " + std::to_string(width) +
                        " breaks one-to-one azimuth sampling; expected floor(2*pi*focal) = " +
                        std::to_string(expected));
    }
  }

  /// Cylinder matched to `cam` for an n-crop ring.
  ///
  /// Width is floor(2*pi*focal), so columns are never denser than crop pixels
  /// at the crop centre and nearest-neighbor sampling skips none. A cylinder
  /// pixel at azimuth offset a from a crop centre lands on crop row offset
  /// (v - cv) / cos(a), so the height is capped at crop_height * cos(a_worst)
  /// to keep every pixel inside the crops that should see it: a_worst is the
  /// yaw step when each column lies in two crops' fields of view, half the
  /// step otherwise. The height keeps the crop's parity so the central column
  /// maps rows without rounding ties.
  static CylinderSpec for_camera(const PerspectiveCamera& cam, int n) {
    cam.validate();
    if (n < 1) throw ConfigError("crop count must be >= 1");
    const double f = cam.focal_px();
    const double step = 2.0 * std::numbers::pi / n;
    const double half_fov = cam.fov_deg * std::numbers::pi / 360.0;
    const double worst = half_fov >= step ? step : step / 2.0;
    int h = worst < std::numbers::pi / 2.0
                ? static_cast<int>(std::floor(cam.height * std::cos(worst)))
                : 1;
    if ((h - cam.height) % 2 != 0) --h;
    h = std::max(h, 1);
    return CylinderSpec{static_cast<int>(std::floor(2.0 * std::numbers::pi * f)), h, f};
  }
};

/// Pixel index maps between one crop and the canvas.
///
/// forward[p] is the canvas pixel that crop pixel p samples (F_i); backward[q]
/// is the crop pixel that canvas pixel q projects to (the nearest-neighbor
/// inverse projection). Both hold kUnmapped where the other domain has no
/// pixel. bijective_mask[p] is set when backward[forward[p]] == p.
struct ProjectionMap {
  int crop_index = 0;
  int crop_width = 0;
  int crop_height = 0;
  int canvas_width = 0;
  int canvas_height = 0;
  std::vector<std::int32_t> forward;
  std::vector<std::int32_t> backward;
  std::vector<std::uint8_t> bijective_mask;
  /// Source used by project_forward: forward[p], or for unmapped pixels the
  /// nearest mapped pixel of the same crop column (crop-edge fill).
  std::vector<std::int32_t> gather;

  std::size_t crop_pixels() const noexcept {
    return static_cast<std::size_t>(crop_width) * crop_height;
  }
  std::size_t canvas_pixels() const noexcept {
    return static_cast<std::size_t>(canvas_width) * canvas_height;
  }

  std::size_t mapped_count() const noexcept {
    return static_cast<std::size_t>(
        std::count_if(forward.begin(), forward.end(), [](auto v) { return v != kUnmapped; }));
  }

  /// Number of distinct canvas pixels that some crop pixel maps onto.
  std::size_t footprint_size() const {
    std::vector<std::uint8_t> hit(canvas_pixels(), 0);
    std::size_t count = 0;
    for (const auto q : forward) {
      if (q != kUnmapped && !hit[static_cast<std::size_t>(q)]) {
        hit[static_cast<std::size_t>(q)] = 1;
        ++count;
      }
    }
    return count;
  }

  /// Fills `gather` from `forward` and `bijective_mask` from both maps.
  void finalize() {
    gather = forward;
    for (int x = 0; x < crop_width; ++x) {
      int first = -1;
      int last = -1;
      for (int y = 0; y < crop_height; ++y) {
        if (forward[idx(x, y)] != kUnmapped) {
          if (first < 0) first = y;
          last = y;
        }
      }
      if (first < 0) continue;
      for (int y = 0; y < first; ++y) gather[idx(x, y)] = forward[idx(x, first)];
      for (int y = last + 1; y < crop_height; ++y) gather[idx(x, y)] = forward[idx(x, last)];
    }
    bijective_mask.assign(crop_pixels(), 0);
    for (std::size_t p = 0; p < crop_pixels(); ++p) {
      const auto q = forward[p];
      bijective_mask[p] =
          q != kUnmapped && backward[static_cast<std::size_t>(q)] == static_cast<std::int32_t>(p);
    }
  }

 private:
  std::size_t idx(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * crop_width + x;
  }
};

/// A set of crops covering the canvas.
struct CropLayout {
  int canvas_width = 0;
  int canvas_height = 0;
  /// True for a 360 degree cylinder whose first and last columns are adjacent.
  bool cyclic = false;
  CylinderSpec cylinder;                  // zero-initialized for planar layouts
  std::vector<PerspectiveCamera> cameras; // one per crop (cylindrical layouts)
  std::vector<int> offsets;               // crop x offsets (planar layouts)
  std::vector<ProjectionMap> maps;
  /// Per canvas pixel: number of crops whose forward map hits it.
  std::vector<std::int32_t> coverage;

  int n() const noexcept { return static_cast<int>(maps.size()); }
  int crop_width() const noexcept { return maps.empty() ? 0 : maps.front().crop_width; }
  int crop_height() const noexcept { return maps.empty() ? 0 : maps.front().crop_height; }
  std::size_t canvas_pixels() const noexcept {
    return static_cast<std::size_t>(canvas_width) * canvas_height;
  }

  /// Columns g such that the pixel pair (g, g+1) straddles the left or right
  /// edge of some crop footprint along the canvas centre row.
  std::vector<int> boundary_columns() const {
    std::set<int> cols;
    const int row = canvas_height / 2;
    for (const auto& m : maps) {
      int lo = -1;
      int hi = -1;
      // Footprint of the crop on the centre row, walked from the crop's left
      // edge so cyclic footprints that wrap the seam stay contiguous.
      for (int x = 0; x < m.crop_width; ++x) {
        for (int y = 0; y < m.crop_height; ++y) {
          const auto q = m.forward[static_cast<std::size_t>(y) * m.crop_width + x];
          if (q == kUnmapped || q / canvas_width != row) continue;
          const int u = q % canvas_width;
          if (lo < 0) lo = u;
          hi = u;
        }
      }
      if (lo < 0) continue;
      if (cyclic) {
        cols.insert((lo - 1 + canvas_width) % canvas_width);
        cols.insert(hi);
      } else {
        if (lo > 0) cols.insert(lo - 1);
        if (hi < canvas_width - 1) cols.insert(hi);
      }
    }
    return {cols.begin(), cols.end()};
  }
};

namespace detail {

inline std::int32_t wrap_column(std::int64_t u, int width) noexcept {
  const std::int64_t w = width;
  return static_cast<std::int32_t>(((u % w) + w) % w);
}

inline ProjectionMap build_cylinder_map(const CylinderSpec& cyl, const PerspectiveCamera& cam,
                                        int index) {
  constexpr double kPi = std::numbers::pi;
  ProjectionMap m;
  m.crop_index = index;
  m.crop_width = cam.width;
  m.crop_height = cam.height;
  m.canvas_width = cyl.width;
  m.canvas_height = cyl.height;
  m.forward.assign(m.crop_pixels(), kUnmapped);
  m.backward.assign(m.canvas_pixels(), kUnmapped);

  const double f = cam.focal_px();
  const double cx = (cam.width - 1) / 2.0;
  const double cy = (cam.height - 1) / 2.0;
  const double cu = cyl.center_column();
  const double cv = cyl.center_row();
  const double cols_per_radian = cyl.width / (2.0 * kPi);

  for (int x = 0; x < cam.width; ++x) {
    const double a = std::atan((x - cx) / f);
    const double c = std::cos(a);
    const auto u = wrap_column(round_nearest(cu + (cam.yaw + a) * cols_per_radian), cyl.width);
    for (int y = 0; y < cam.height; ++y) {
      const auto v = round_nearest(cv + (y - cy) * c);
      if (v < 0 || v >= cyl.height) continue;
      m.forward[static_cast<std::size_t>(y) * cam.width + x] =
          static_cast<std::int32_t>(v * cyl.width + u);
    }
  }

  for (int u = 0; u < cyl.width; ++u) {
    double a = cyl.azimuth(u) - cam.yaw;
    a -= 2.0 * kPi * std::floor((a + kPi) / (2.0 * kPi));
    if (std::abs(a) >= kPi / 2.0) continue;
    const auto x = round_nearest(cx + f * std::tan(a));
    if (x < 0 || x >= cam.width) continue;
    const double c = std::cos(a);
    for (int v = 0; v < cyl.height; ++v) {
      const auto y = round_nearest(cy + (v - cv) / c);
      if (y < 0 || y >= cam.height) continue;
      m.backward[static_cast<std::size_t>(v) * cyl.width + u] =
          static_cast<std::int32_t>(y * cam.width + x);
    }
  }
  m.finalize();
  return m;
}

inline void compute_coverage(CropLayout& layout) {
  layout.coverage.assign(layout.canvas_pixels(), 0);
  std::vector<std::uint8_t> hit(layout.canvas_pixels());
  for (const auto& m : layout.maps) {
    std::fill(hit.begin(), hit.end(), 0);
    for (const auto q : m.forward) {
      if (q != kUnmapped) hit[static_cast<std::size_t>(q)] = 1;
    }
    for (std::size_t q = 0; q < hit.size(); ++q) layout.coverage[q] += hit[q];
  }
  for (int u = 0; u < layout.canvas_width; ++u) {
    for (int v = 0; v < layout.canvas_height; ++v) {
      if (layout.coverage[static_cast<std::size_t>(v) * layout.canvas_width + u] == 0) {
        throw CoverageError("crop layout leaves canvas column " + std::to_string(u) +
                            " uncovered (first gap at row " + std::to_string(v) + ")");
      }
    }
  }
}

}  // namespace detail

/// n perspective crops at yaws 2*pi*k/n around the cylinder.
inline CropLayout build_layout(const CylinderSpec& cyl, const PerspectiveCamera& cam, int n) {
  cam.validate();
  if (n < 1) throw ConfigError("crop count must be >= 1, got " + std::to_string(n));
  if (cam.fov_deg * n < 360.0) {
    throw ConfigError("crops do not span 360 degrees: fov " + std::to_string(cam.fov_deg) +
                      " x " + std::to_string(n) + " crops");
  }
  cyl.validate();
  const double f = cam.focal_px();
  if (std::abs(cyl.focal_px - f) > 1e-9 * f) {
    throw ConfigError("cylinder focal " + std::to_string(cyl.focal_px) +
                      " differs from camera focal " + std::to_string(f));
  }
  CropLayout layout;
  layout.canvas_width = cyl.width;
  layout.canvas_height = cyl.height;
  layout.cyclic = true;
  layout.cylinder = cyl;
  for (int k = 0; k < n; ++k) {
    PerspectiveCamera c = cam;
    c.yaw = 2.0 * std::numbers::pi * k / n;
    layout.cameras.push_back(c);
    layout.maps.push_back(detail::build_cylinder_map(cyl, c, k));
  }
  detail::compute_coverage(layout);
  return layout;
}

/// Convenience: cylinder fitted by CylinderSpec::for_camera plus its layout.
inline CropLayout build_cylinder_layout(const PerspectiveCamera& cam, int n) {
  return build_layout(CylinderSpec::for_camera(cam, n), cam, n);
}

/// Non-cyclic layout for wide images: n full-height crops of crop_width
/// columns, evenly spaced from the left to the right edge. F_i is a plain crop.
inline CropLayout build_planar_layout(int canvas_width, int canvas_height, int crop_width,
                                      int n) {
  if (n < 1 || crop_width < 1 || canvas_height < 1 || crop_width > canvas_width) {
    throw ConfigError("planar layout needs n >= 1 and 1 <= crop_width <= canvas_width");
  }
  CropLayout layout;
  layout.canvas_width = canvas_width;
  layout.canvas_height = canvas_height;
  layout.cyclic = false;
  const int span = canvas_width - crop_width;
  for (int k = 0; k < n; ++k) {
    const int off = n == 1 ? 0 : (k * span + (n - 1) / 2) / (n - 1);
    layout.offsets.push_back(off);
    ProjectionMap m;
    m.crop_index = k;
    m.crop_width = crop_width;
    m.crop_height = canvas_height;
    m.canvas_width = canvas_width;
    m.canvas_height = canvas_height;
    m.forward.assign(m.crop_pixels(), kUnmapped);
    m.backward.assign(m.canvas_pixels(), kUnmapped);
    for (int y = 0; y < canvas_height; ++y) {
      for (int x = 0; x < crop_width; ++x) {
        const auto p = static_cast<std::int32_t>(y * crop_width + x);
        const auto q = static_cast<std::int32_t>(y * canvas_width + off + x);
        m.forward[static_cast<std::size_t>(p)] = q;
        m.backward[static_cast<std::size_t>(q)] = p;
      }
    }
    m.finalize();
    layout.maps.push_back(std::move(m));
  }
  detail::compute_coverage(layout);
  return layout;
}

/// F_i: gathers the crop from the canvas through precomputed indices.
template <typename T>
Image<T> project_forward(const ProjectionMap& map, const Image<T>& canvas) {
  if (canvas.width() != map.canvas_width || canvas.height() != map.canvas_height) {
    throw DimensionError("project_forward: canvas is " + std::to_string(canvas.width()) + "x" +
                         std::to_string(canvas.height()) + ", layout expects " +
                         std::to_string(map.canvas_width) + "x" +
                         std::to_string(map.canvas_height));
  }
  const int ch = canvas.channels();
  Image<T> crop(map.crop_width, map.crop_height, ch);
  auto src = canvas.data();
  auto dst = crop.data();
  for (std::size_t p = 0; p < map.crop_pixels(); ++p) {
    const auto q = map.gather[p];
    if (q == kUnmapped) continue;
    for (int c = 0; c < ch; ++c) {
      dst[p * ch + c] = src[static_cast<std::size_t>(q) * ch + c];
    }
  }
  return crop;
}

/// Canvas-sized sums of weighted values and of weights.
struct Accumulator {
  ImageD value;
  ImageD weight;

  Accumulator() = default;
  Accumulator(int width, int height, int channels)
      : value(width, height, channels, 0.0), weight(width, height, 1, 0.0) {}
};

/// F_i^-1 as the adjoint of F_i: scatter-adds weight * crop and weight onto
/// the canvas pixels the crop samples. Unmapped crop pixels contribute nothing.
template <typename T, typename W>
void project_backward(const ProjectionMap& map, const Image<T>& crop, const Image<W>& weight,
                      Accumulator& acc) {
  if (crop.width() != map.crop_width || crop.height() != map.crop_height ||
      !weight.same_extent(crop) || weight.channels() != 1) {
    throw DimensionError("project_backward: crop/weight do not match the camera (" +
                         std::to_string(map.crop_width) + "x" +
                         std::to_string(map.crop_height) + ")");
  }
  if (acc.value.width() != map.canvas_width || acc.value.height() != map.canvas_height ||
      acc.value.channels() != crop.channels()) {
    throw DimensionError("project_backward: accumulator does not match the canvas");
  }
  const int ch = crop.channels();
  auto src = crop.data();
  auto wts = weight.data();
  auto val = acc.value.data();
  auto wsum = acc.weight.data();
  for (std::size_t p = 0; p < map.crop_pixels(); ++p) {
    const auto q = map.forward[p];
    const double w = static_cast<double>(wts[p]);
    if (q == kUnmapped || w == 0.0) continue;
    const auto qi = static_cast<std::size_t>(q);
    for (int c = 0; c < ch; ++c) val[qi * ch + c] += w * static_cast<double>(src[p * ch + c]);
    wsum[qi] += w;
  }
}

/// Per-pixel value / weight; pixels with zero weight are set to zero and
/// flagged in the returned mask.
inline ImageD normalize(const Accumulator& acc, Mask* zero_weight = nullptr) {
  ImageD out(acc.value.width(), acc.value.height(), acc.value.channels(), 0.0);
  if (zero_weight != nullptr) *zero_weight = Mask(out.width(), out.height(), 1, 0);
  const int ch = out.channels();
  for (std::size_t q = 0; q < out.pixel_count(); ++q) {
    const double w = acc.weight.data()[q];
    if (w == 0.0) {
      if (zero_weight != nullptr) zero_weight->data()[q] = 1;
      continue;
    }
    for (int c = 0; c < ch; ++c) out.data()[q * ch + c] = acc.value.data()[q * ch + c] / w;
  }
  return out;
}

}  // namespace panofuse
