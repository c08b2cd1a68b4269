// Copyright (C) 2026 The Panofuse Authors
// SPDX-License-Identifier: Apache-2.0

// Test-only helpers: independent geometry checks and synthetic fixtures.

#pragma once

#include <atomic>
#include <cmath>
#include <numbers>
#include <vector>

#include "panofuse/geometry.hpp"
#include "panofuse/image.hpp"
#include "panofuse/rng.hpp"

namespace panofuse::testing_support {

/// Coverage counted by projecting each cylinder pixel centre into every
/// camera with the pinhole equations (no precomputed maps involved).
inline std::vector<int> analytic_coverage(const CropLayout& layout) {
  constexpr double kPi = std::numbers::pi;
  const auto& cyl = layout.cylinder;
  std::vector<int> count(layout.canvas_pixels(), 0);
  for (const auto& cam : layout.cameras) {
    const double f = cam.focal_px();
    const double cx = (cam.width - 1) / 2.0;
    const double cy = (cam.height - 1) / 2.0;
    for (int u = 0; u < cyl.width; ++u) {
      const double a = std::remainder(cyl.azimuth(u) - cam.yaw, 2.0 * kPi);
      if (std::abs(a) >= kPi / 2.0) continue;
      const double x = cx + f * std::tan(a);
      if (x < -0.5 || x >= cam.width - 0.5) continue;
      for (int v = 0; v < cyl.height; ++v) {
        const double y = cy + (v - cyl.center_row()) / std::cos(a);
        if (y >= -0.5 && y < cam.height - 0.5) ++count[static_cast<std::size_t>(v) * cyl.width + u];
      }
    }
  }
  return count;
}

/// Fraction of bijective pixels in the crop's own yaw sector: mapped crop
/// pixels whose viewing azimuth is within half a yaw step of the crop axis.
inline double interior_bijective_fraction(const CropLayout& layout, int index) {
  const auto& m = layout.maps[static_cast<std::size_t>(index)];
  const auto& cam = layout.cameras[static_cast<std::size_t>(index)];
  const double half_step = std::numbers::pi / layout.n();
  const double f = cam.focal_px();
  const double cx = (cam.width - 1) / 2.0;
  std::size_t interior = 0;
  std::size_t bijective = 0;
  for (int y = 0; y < m.crop_height; ++y) {
    for (int x = 0; x < m.crop_width; ++x) {
      const auto p = static_cast<std::size_t>(y) * m.crop_width + x;
      if (m.forward[p] == kUnmapped || std::abs(std::atan((x - cx) / f)) > half_step) continue;
      ++interior;
      bijective += m.bijective_mask[p];
    }
  }
  return interior == 0 ? 0.0 : static_cast<double>(bijective) / static_cast<double>(interior);
}

/// 90-degree, 32x32 crops on an 8-crop ring: a 100x22 canvas.
inline const CropLayout& small_ring() {
  static const CropLayout layout = build_cylinder_layout(PerspectiveCamera{90.0, 32, 32}, 8);
  return layout;
}

/// Smooth canvas, periodic in x: 0.5 + amp * (sin(2 pi x / W + c) + 0.5 cos(pi y / H)).
inline ImageF smooth_canvas(int width, int height, int channels, float amp = 0.3f) {
  ImageF img(width, height, channels);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < channels; ++c) {
        const double a = 2.0 * std::numbers::pi * x / width + c;
        img(x, y, c) = static_cast<float>(
            0.5 + amp * (std::sin(a) + 0.5 * std::cos(std::numbers::pi * y / height)));
      }
  return img;
}

/// Image of uniform values in [lo, hi) drawn from key.
inline ImageF uniform_image(int width, int height, int channels, std::uint64_t key,
                            float lo = 0.0f, float hi = 1.0f) {
  ImageF img(width, height, channels);
  auto d = img.data();
  for (std::size_t k = 0; k < d.size(); ++k) d[k] = lo + (hi - lo) * rng::uniform(key, k);
  return img;
}

}  // namespace panofuse::testing_support

#include "panofuse/depthfusion.hpp"
#include "panofuse/piecewise_linear.hpp"

namespace panofuse::testing_support {

/// Smooth ground-truth disparity in roughly [0.2, 1.85], periodic in x.
inline ImageD disparity_fixture(int width, int height) {
  ImageD d(width, height, 1);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double a = 2.0 * std::numbers::pi * x / width;
      d(x, y) = 1.0 + 0.5 * std::sin(a) + 0.25 * std::cos(3.0 * a + 0.5) +
                0.1 * std::sin(std::numbers::pi * y / height);
    }
  return d;
}

/// Random increasing piecewise-linear distortion with `segments` pieces over
/// [0, 2.5] (jittered interior knots), slopes in [1 - delta, 1 + delta] and
/// offset in [-delta / 2, delta / 2]. With segments == 1 it is affine.
inline PiecewiseLinearMap random_distortion(std::uint64_t key, double delta, int segments) {
  constexpr double kHi = 2.5;
  std::vector<double> knots{0.0};
  for (int k = 1; k < segments; ++k) {
    knots.push_back(kHi * (k + 0.6 * (rng::uniform(key, 100 + k) - 0.5)) / segments);
  }
  knots.push_back(kHi);
  std::vector<double> slopes;
  for (int k = 0; k < segments; ++k) {
    slopes.push_back(1.0 - delta + 2.0 * delta * rng::uniform(key, static_cast<std::uint64_t>(k)));
  }
  return PiecewiseLinearMap::from_slopes(knots, delta * (rng::uniform(key, 50) - 0.5), slopes);
}

/// Depth oracle returning g_i(F_i(D)) + sigma * n, with g_i per crop index
/// and n a fixed normal field per crop. Ignores the crop image.
class ProjectedDepthOracle final : public DepthOracle {
 public:
  ProjectedDepthOracle(ImageD truth, const CropLayout& layout,
                       std::vector<PiecewiseLinearMap> distortions, double sigma,
                       std::uint64_t seed)
      : layout_(layout), truth_(std::move(truth)), distortions_(std::move(distortions)),
        sigma_(sigma), seed_(seed) {}

  ImageF estimate(const ImageF&, int crop_index) const override {
    ++calls;
    const auto& map = layout_.maps[static_cast<std::size_t>(crop_index)];
    const auto patch = project_forward(map, truth_);
    const auto& g = distortions_[static_cast<std::size_t>(crop_index)];
    ImageF out(patch.width(), patch.height(), 1);
    const auto key = rng::derive_key(seed_, {static_cast<std::uint64_t>(crop_index)});
    for (std::size_t p = 0; p < patch.pixel_count(); ++p) {
      out.data()[p] = static_cast<float>(g(patch.data()[p]) + sigma_ * rng::normal(key, p));
    }
    return out;
  }

  mutable std::atomic<int> calls{0};

 private:
  const CropLayout& layout_;
  ImageD truth_;
  std::vector<PiecewiseLinearMap> distortions_;
  double sigma_;
  std::uint64_t seed_;
};

/// Distortions for a recovery fixture: the anchor gets an affine map (only
/// the affine gauge is unidentifiable), every other patch a random
/// `segments`-piece monotone map.
inline std::vector<PiecewiseLinearMap> recovery_distortions(int patches, int anchor,
                                                            std::uint64_t seed,
                                                            double delta = 0.05,
                                                            int segments = 3) {
  std::vector<PiecewiseLinearMap> g;
  for (int i = 0; i < patches; ++i) {
    g.push_back(random_distortion(rng::derive_key(seed, {static_cast<std::uint64_t>(i)}), delta,
                                  i == anchor ? 1 : segments));
  }
  return g;
}

}  // namespace panofuse::testing_support

namespace panofuse::testing_support {

inline constexpr double kPlateaus[4] = {1.6, 0.9, 0.5, 0.2};

/// Four vertical bands of constant disparity (plus a +-0.01 ripple), nearest
/// first; band b covers columns [b * W / 4, (b + 1) * W / 4).
inline ImageD plateau_disparity(int width, int height) {
  ImageD d(width, height, 1);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const int band = 4 * x / width;
      d(x, y) = kPlateaus[band] + 0.01 * std::sin(0.7 * x + 1.3 * y);
    }
  return d;
}

}  // namespace panofuse::testing_support
