// Copyright (C) 2026 The Panofuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "panofuse/depthfusion.hpp"
#include "panofuse/error.hpp"
#include "panofuse/geometry.hpp"
#include "panofuse/image.hpp"
#include "panofuse/rng.hpp"
#include "panofuse/sampler.hpp"

// Deterministic stand-ins for the model oracles. Every formula is plain f32
// arithmetic plus sqrt (correctly rounded), so a remote service can reproduce
// the outputs bit for bit.

namespace panofuse::synthetic {

/// denoise_step returns its input; renoise returns the clean content.
class IdentityDenoiser final : public DenoiserOracle {
 public:
  explicit IdentityDenoiser(int steps) : steps_(steps) {
    if (steps < 1) throw ConfigError("synthetic oracle needs >= 1 step");
  }
  int steps() const override { return steps_; }
  ImageF denoise_step(const ImageF& state, int, const DenoiseCondition&,
                      std::uint64_t) const override {
    return state;
  }
  ImageF renoise(const ImageF& clean, int, std::uint64_t) const override { return clean; }

 private:
  int steps_;
};

/// Per step: x <- x + rate * (target - x), with target the crop of a fixed
/// canvas P when one is supplied (keyed by crop index) and the condition's
/// known crop otherwise. renoise is the identity.
class ContractiveDenoiser final : public DenoiserOracle {
 public:
  ContractiveDenoiser(int steps, float rate) : steps_(steps), rate_(rate) {
    if (steps < 1) throw ConfigError("synthetic oracle needs >= 1 step");
    if (!(rate > 0.0f && rate <= 1.0f)) throw ConfigError("contraction rate must be in (0, 1]");
  }
  ContractiveDenoiser(int steps, float rate, const ImageF& fixed_point, const CropLayout& layout)
      : ContractiveDenoiser(steps, rate) {
    for (const auto& map : layout.maps) targets_.push_back(project_forward(map, fixed_point));
  }

  int steps() const override { return steps_; }

  ImageF denoise_step(const ImageF& state, int, const DenoiseCondition& cond,
                      std::uint64_t) const override {
    const ImageF& target = target_for(cond);
    if (!target.same_shape(state)) throw DimensionError("contractive oracle: target shape mismatch");
    ImageF out(state.width(), state.height(), state.channels());
    auto x = state.data();
    auto g = target.data();
    auto o = out.data();
    for (std::size_t k = 0; k < x.size(); ++k) o[k] = x[k] + rate_ * (g[k] - x[k]);
    return out;
  }

  ImageF renoise(const ImageF& clean, int, std::uint64_t) const override { return clean; }

 private:
  const ImageF& target_for(const DenoiseCondition& cond) const {
    if (targets_.empty()) return cond.known;
    if (cond.crop_index < 0 || cond.crop_index >= static_cast<int>(targets_.size())) {
      throw OracleError("contractive oracle: crop index " + std::to_string(cond.crop_index) +
                        " has no fixture");
    }
    return targets_[static_cast<std::size_t>(cond.crop_index)];
  }

  int steps_;
  float rate_;
  std::vector<ImageF> targets_;
};

/// Deterministic DDIM (eta = 0) around a clean-image predictor x0(cond).
///
///   abar_t  = 1 - (t / T) * (1 - 0.001)             (f32)
///   eps     = (x_t - sqrt(abar_t) x0) / sqrt(1 - abar_t)
///   x_{t-1} = sqrt(abar_{t-1}) x0 + sqrt(1 - abar_{t-1}) eps
///   renoise(c, t) = sqrt(abar_t) c + sqrt(1 - abar_t) n,  n = rng::normal(seed, k)
///
/// abar_0 = 1, so the last step returns x0 exactly.
class DdimDenoiser : public DenoiserOracle {
 public:
  explicit DdimDenoiser(int steps) : steps_(steps) {
    if (steps < 1) throw ConfigError("synthetic oracle needs >= 1 step");
  }

  int steps() const override { return steps_; }

  float alpha_bar(int t) const noexcept {
    if (t <= 0) return 1.0f;
    const float frac = static_cast<float>(t) / static_cast<float>(steps_);
    return 1.0f - frac * (1.0f - 0.001f);
  }

  ImageF denoise_step(const ImageF& state, int t, const DenoiseCondition& cond,
                      std::uint64_t) const override {
    if (t < 1 || t > steps_) throw OracleError("denoise_step: t out of range");
    const ImageF x0 = predict_x0(state, t, cond);
    if (!x0.same_shape(state)) throw DimensionError("ddim oracle: prediction shape mismatch");
    const float a_t = alpha_bar(t);
    const float a_prev = alpha_bar(t - 1);
    const float s_t = std::sqrt(a_t);
    const float n_t = std::sqrt(1.0f - a_t);
    const float s_prev = std::sqrt(a_prev);
    const float n_prev = std::sqrt(1.0f - a_prev);
    ImageF out(state.width(), state.height(), state.channels());
    auto x = state.data();
    auto p = x0.data();
    auto o = out.data();
    for (std::size_t k = 0; k < x.size(); ++k) {
      const float eps = (x[k] - s_t * p[k]) / n_t;
      o[k] = s_prev * p[k] + n_prev * eps;
    }
    return out;
  }

  ImageF renoise(const ImageF& clean, int t, std::uint64_t seed) const override {
    if (t <= 0) return clean;
    const float a = alpha_bar(t);
    const float s = std::sqrt(a);
    const float n = std::sqrt(1.0f - a);
    ImageF out(clean.width(), clean.height(), clean.channels());
    auto c = clean.data();
    auto o = out.data();
    for (std::size_t k = 0; k < c.size(); ++k) o[k] = s * c[k] + n * rng::normal(seed, k);
    return out;
  }

 protected:
  virtual ImageF predict_x0(const ImageF& state, int t, const DenoiseCondition& cond) const = 0;

 private:
  int steps_;
};

/// x0 = (1 - beta) F_i(P) + beta F_i(L): the sampler's outer loop then moves
/// L toward P by a factor beta per iteration, so P is its fixed point.
class FixedPointDenoiser final : public DdimDenoiser {
 public:
  FixedPointDenoiser(int steps, float beta, const ImageF& fixed_point, const CropLayout& layout)
      : DdimDenoiser(steps), beta_(beta) {
    if (!(beta >= 0.0f && beta < 1.0f)) throw ConfigError("fixed-point blend must be in [0, 1)");
    for (const auto& map : layout.maps) targets_.push_back(project_forward(map, fixed_point));
  }

  float beta() const noexcept { return beta_; }

 protected:
  ImageF predict_x0(const ImageF&, int, const DenoiseCondition& cond) const override {
    if (cond.crop_index < 0 || cond.crop_index >= static_cast<int>(targets_.size())) {
      throw OracleError("fixed-point oracle: crop index " + std::to_string(cond.crop_index) +
                        " has no fixture");
    }
    const auto& target = targets_[static_cast<std::size_t>(cond.crop_index)];
    if (!target.same_shape(cond.known)) throw DimensionError("fixed-point oracle: shape mismatch");
    ImageF out(target.width(), target.height(), target.channels());
    auto g = target.data();
    auto l = cond.known.data();
    auto o = out.data();
    for (std::size_t k = 0; k < g.size(); ++k) o[k] = (1.0f - beta_) * g[k] + beta_ * l[k];
    return out;
  }

 private:
  float beta_;
  std::vector<ImageF> targets_;
};

/// x0 = b + 0.05 * (x_t - sqrt(abar_t) b) / sqrt(1 - abar_t), where b is a
/// horizontal box blur (radius r, clamped at crop edges) of F_i(L): known
/// content spreads across the canvas over the outer iterations, and the
/// noise-estimate term keeps the result dependent on the seed. Needs no
/// fixture; used for smoke runs.
class PropagateDenoiser final : public DdimDenoiser {
 public:
  PropagateDenoiser(int steps, int radius) : DdimDenoiser(steps), radius_(radius) {
    if (radius < 1) throw ConfigError("propagate oracle radius must be >= 1");
  }

 protected:
  ImageF predict_x0(const ImageF& state, int t, const DenoiseCondition& cond) const override {
    const ImageF& src = cond.known;
    ImageF out(src.width(), src.height(), src.channels());
    for (int y = 0; y < src.height(); ++y) {
      for (int x = 0; x < src.width(); ++x) {
        for (int c = 0; c < src.channels(); ++c) {
          float sum = 0.0f;
          for (int d = -radius_; d <= radius_; ++d) {
            const int xx = std::clamp(x + d, 0, src.width() - 1);
            sum += src(xx, y, c);
          }
          out(x, y, c) = sum / static_cast<float>(2 * radius_ + 1);
        }
      }
    }
    const float a = alpha_bar(t);
    const float s_t = std::sqrt(a);
    const float n_t = std::sqrt(1.0f - a);
    auto b = out.data();
    auto x = state.data();
    for (std::size_t k = 0; k < b.size(); ++k) b[k] += 0.05f * ((x[k] - s_t * b[k]) / n_t);
    return out;
  }

 private:
  int radius_;
};

/// Rec. 709 luma of an RGB (or the single channel of a gray) pixel.
inline float luma(const ImageF& img, int x, int y) {
  if (img.channels() >= 3) {
    return 0.2126f * img(x, y, 0) + 0.7152f * img(x, y, 1) + 0.0722f * img(x, y, 2);
  }
  return img(x, y, 0);
}

/// Every pixel at one value.
class ConstantDepthOracle final : public DepthOracle {
 public:
  explicit ConstantDepthOracle(float value) : value_(value) {}
  ImageF estimate(const ImageF& crop, int) const override {
    return ImageF(crop.width(), crop.height(), 1, value_);
  }

 private:
  float value_;
};

/// depth = a_i * (0.1 + 0.9 * luma) + b_i, with (a_i, b_i) per crop index
/// (identity for indices without an entry): bright pixels read as near, and
/// each patch carries its own affine distortion.
class LumaDepthOracle final : public DepthOracle {
 public:
  LumaDepthOracle() = default;
  explicit LumaDepthOracle(std::vector<std::pair<float, float>> affine)
      : affine_(std::move(affine)) {}

  /// a_i = 1 + 0.25 * ((i mod 3) - 1), b_i = 0.05 * ((i mod 5) - 2).
  static LumaDepthOracle distorted(int patches) {
    std::vector<std::pair<float, float>> affine;
    for (int i = 0; i < patches; ++i) {
      affine.emplace_back(1.0f + 0.25f * static_cast<float>(i % 3 - 1),
                          0.05f * static_cast<float>(i % 5 - 2));
    }
    return LumaDepthOracle(std::move(affine));
  }

  ImageF estimate(const ImageF& crop, int crop_index) const override {
    float a = 1.0f;
    float b = 0.0f;
    if (crop_index >= 0 && crop_index < static_cast<int>(affine_.size())) {
      std::tie(a, b) = affine_[static_cast<std::size_t>(crop_index)];
    }
    ImageF out(crop.width(), crop.height(), 1);
    for (int y = 0; y < crop.height(); ++y) {
      for (int x = 0; x < crop.width(); ++x) {
        const float l = std::clamp(luma(crop, x, y), 0.0f, 1.0f);
        out(x, y) = a * (0.1f + 0.9f * l) + b;
      }
    }
    return out;
  }

 private:
  std::vector<std::pair<float, float>> affine_;
};

}  // namespace panofuse::synthetic
