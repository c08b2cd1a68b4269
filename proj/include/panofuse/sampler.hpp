// Copyright (C) 2026 The Panofuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "panofuse/error.hpp"
#include "panofuse/geometry.hpp"
#include "panofuse/image.hpp"
#include "panofuse/metrics.hpp"
#include "panofuse/parallel.hpp"
#include "panofuse/rng.hpp"

namespace panofuse {

/// Conditioning for one crop: M_i (1 = synthesize) and the crop of the
/// condition canvas.
struct DenoiseCondition {
  std::string prompt;
  Mask mask;
  ImageF known;
  /// Position of the crop in its layout, or -1 when not applicable. Real
  /// models ignore it; synthetic oracles may key fixtures on it.
  int crop_index = -1;
};

/// Inpainting diffusion model used as a black box, one scheduler step at a
/// time. Implementations must be deterministic for a given seed and safe to
/// call concurrently.
class DenoiserOracle {
 public:
  virtual ~DenoiserOracle() = default;

  /// Length T of the noise schedule.
  virtual int steps() const = 0;

  /// State at t-1 from the state at t, same extents as `state`.
  virtual ImageF denoise_step(const ImageF& state, int t, const DenoiseCondition& condition,
                              std::uint64_t seed) const = 0;

  /// Clean content noised to schedule level t (t = 0 returns it unchanged).
  virtual ImageF renoise(const ImageF& clean, int t, std::uint64_t seed) const = 0;
};

/// J_t together with what the user provided.
struct CanvasState {
  ImageF J;
  int t = 0;
  Mask unknown;  // U: 1 where the user gave no content
  Rect input_rect;
};

/// The condition canvas L. Restricted to input_rect it always equals the
/// user's input image.
struct ConditionCanvas {
  ImageF L;
  Rect input_rect;
  int generation = 0;
};

struct SamplerConfig {
  int outer_iters = 20;
  int inner_steps = 50;
  std::uint64_t seed = 0;
  /// Weight of the ||L - J_0||^2 term in the final blend; 0 ignores it.
  double second_term_weight = 0.0;
  std::string prompt;
  bool early_stop = false;
  double early_stop_rmse = 1e-5;
  /// Worker threads for per-crop oracle calls (0 = hardware concurrency).
  int threads = 1;

  void validate() const {
    if (outer_iters < 1) throw ConfigError("outer_iters must be >= 1");
    if (inner_steps < 1) throw ConfigError("inner_steps must be >= 1");
    if (!(second_term_weight >= 0.0 && second_term_weight <= 1.0)) {
      throw ConfigError("second_term_weight must be in [0, 1]");
    }
  }
};

struct AggregateResult {
  ImageF image;
  /// Sum of F_i^-1(M_i) per canvas pixel.
  ImageD weight;
  /// Pixels no crop wrote to; their value is left at zero.
  Mask zero_weight;
};

/// Closed-form minimizer of sum_i ||M_i . (F_i(J) - output_i)||^2: the
/// F_i^-1(M_i)-weighted mean of the back-projected outputs. Summation runs in
/// crop order so the result does not depend on how outputs were produced.
/// Throws CoverageError when a pixel flagged in `unknown` gets zero weight.
inline AggregateResult aggregate_crops(std::span<const ImageF> outputs,
                                       std::span<const Mask> masks, const CropLayout& layout,
                                       const Mask* unknown = nullptr) {
  if (outputs.size() != static_cast<std::size_t>(layout.n()) || masks.size() != outputs.size()) {
    throw DimensionError("aggregate_crops: expected " + std::to_string(layout.n()) +
                         " outputs and masks, got " + std::to_string(outputs.size()) + " and " +
                         std::to_string(masks.size()));
  }
  if (outputs.empty()) throw DimensionError("aggregate_crops: empty layout");
  const int ch = outputs.front().channels();
  Accumulator acc(layout.canvas_width, layout.canvas_height, ch);
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    if (!masks[i].same_extent(outputs[i]) || masks[i].channels() != 1 ||
        outputs[i].channels() != ch) {
      throw DimensionError("aggregate_crops: mask/output shape mismatch for crop " +
                           std::to_string(i));
    }
    project_backward(layout.maps[i], outputs[i], masks[i], acc);
  }
  AggregateResult result;
  result.image = convert<float>(normalize(acc, &result.zero_weight));
  result.weight = std::move(acc.weight);
  if (unknown != nullptr) {
    for (std::size_t q = 0; q < result.zero_weight.pixel_count(); ++q) {
      if (result.zero_weight.data()[q] && unknown->data()[q]) {
        throw CoverageError("aggregate_crops: unknown pixel (" +
                            std::to_string(q % layout.canvas_width) + ", " +
                            std::to_string(q / layout.canvas_width) +
                            ") received zero total weight");
      }
    }
  }
  return result;
}

namespace detail {

inline constexpr std::uint64_t kNoiseStream = 0x4E4F495345ULL;    // initial J_T
inline constexpr std::uint64_t kRenoiseStream = 0x52454E4FULL;   // known-region renoise

inline std::uint64_t step_seed(std::uint64_t seed, int outer, int t, int crop) {
  return rng::derive_key(seed, {static_cast<std::uint64_t>(outer), static_cast<std::uint64_t>(t),
                                static_cast<std::uint64_t>(crop)});
}

inline void check_rect(const Rect& r, int width, int height) {
  if (!r.fits(width, height)) {
    throw ConfigError("input placement (" + std::to_string(r.x) + ", " + std::to_string(r.y) +
                      ", " + std::to_string(r.width) + "x" + std::to_string(r.height) +
                      ") does not fit the " + std::to_string(width) + "x" +
                      std::to_string(height) + " canvas");
  }
}

}  // namespace detail

/// U: 1 everywhere except the input rectangle.
inline Mask make_unknown_mask(int width, int height, const Rect& input_rect) {
  detail::check_rect(input_rect, width, height);
  Mask u(width, height, 1, 1);
  for (int y = input_rect.y; y < input_rect.y + input_rect.height; ++y)
    for (int x = input_rect.x; x < input_rect.x + input_rect.width; ++x) u(x, y) = 0;
  return u;
}

/// L at generation 0: the input image placed on a black canvas.
inline ConditionCanvas make_condition(const ImageF& input, const Rect& placement,
                                      const CropLayout& layout) {
  detail::check_rect(placement, layout.canvas_width, layout.canvas_height);
  if (input.width() != placement.width || input.height() != placement.height) {
    throw DimensionError("input image does not match its placement rectangle");
  }
  ConditionCanvas cond{ImageF(layout.canvas_width, layout.canvas_height, input.channels(), 0.0f),
                       placement, 0};
  stamp(cond.L, input, placement);
  return cond;
}

/// J_T: Gaussian noise drawn from (seed, outer iteration), with the input
/// region noised to level T by the oracle.
inline CanvasState make_initial_state(const ConditionCanvas& cond, const DenoiserOracle& oracle,
                                      const SamplerConfig& config, int outer_iter) {
  CanvasState state;
  const auto& L = cond.L;
  state.J = rng::normal_image(L.width(), L.height(), L.channels(),
                              rng::derive_key(config.seed, {detail::kNoiseStream,
                                                            static_cast<std::uint64_t>(outer_iter)}));
  state.t = config.inner_steps;
  state.unknown = make_unknown_mask(L.width(), L.height(), cond.input_rect);
  state.input_rect = cond.input_rect;
  const auto noised = oracle.renoise(
      crop_rect(L, cond.input_rect), state.t,
      rng::derive_key(config.seed, {detail::kRenoiseStream, static_cast<std::uint64_t>(outer_iter),
                                    static_cast<std::uint64_t>(state.t)}));
  stamp(state.J, noised, cond.input_rect);
  return state;
}

/// Stage 1: with L fixed, denoise J_T to J*_0 by aggregating the oracle's
/// per-crop outputs at every step. Known pixels are replaced by the input
/// renoised to the current level; at t = 0 they are the input bit for bit.
/// `state` is not modified.
inline ImageF stage1_denoise(const CanvasState& state, const ConditionCanvas& cond,
                             const DenoiserOracle& oracle, const CropLayout& layout,
                             const SamplerConfig& config, int outer_iter = 0) {
  config.validate();
  if (state.t != config.inner_steps) {
    throw ConfigError("stage1_denoise: state must start at t = T = " +
                      std::to_string(config.inner_steps));
  }
  if (oracle.steps() != config.inner_steps) {
    throw ConfigError("sampler inner_steps " + std::to_string(config.inner_steps) +
                      " does not match the oracle schedule length " +
                      std::to_string(oracle.steps()));
  }
  if (!state.J.same_shape(cond.L) || state.J.width() != layout.canvas_width ||
      state.J.height() != layout.canvas_height) {
    throw DimensionError("stage1_denoise: canvas, condition and layout disagree");
  }
  const int n = layout.n();
  const ImageF input = crop_rect(cond.L, state.input_rect);

  std::vector<DenoiseCondition> conditions(static_cast<std::size_t>(n));
  std::vector<Mask> masks(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto& map = layout.maps[static_cast<std::size_t>(i)];
    masks[static_cast<std::size_t>(i)] = project_forward(map, state.unknown);
    conditions[static_cast<std::size_t>(i)] =
        DenoiseCondition{config.prompt, masks[static_cast<std::size_t>(i)],
                         project_forward(map, cond.L), i};
  }

  ImageF J = state.J;
  std::vector<ImageF> outputs(static_cast<std::size_t>(n));
  for (int t = state.t; t >= 1; --t) {
    parallel_for(n, config.threads, [&](int i) {
      const auto idx = static_cast<std::size_t>(i);
      const auto crop = project_forward(layout.maps[idx], J);
      try {
        outputs[idx] = oracle.denoise_step(crop, t, conditions[idx],
                                           detail::step_seed(config.seed, outer_iter, t, i));
      } catch (const std::exception& e) {
        throw OracleError("denoise_step failed for crop " + std::to_string(i) + " at t=" +
                          std::to_string(t) + ": " + e.what());
      }
      if (!outputs[idx].same_shape(crop)) {
        throw OracleError("denoise_step for crop " + std::to_string(i) + " at t=" +
                          std::to_string(t) + " returned a tensor of the wrong shape");
      }
    });
    auto agg = aggregate_crops(outputs, masks, layout, &state.unknown);
    if (t - 1 == 0) {
      stamp(agg.image, input, state.input_rect);
    } else {
      const auto known = oracle.renoise(
          input, t - 1,
          rng::derive_key(config.seed, {detail::kRenoiseStream,
                                        static_cast<std::uint64_t>(outer_iter),
                                        static_cast<std::uint64_t>(t - 1)}));
      if (!known.same_shape(input)) {
        throw OracleError("renoise returned a tensor of the wrong shape at t=" +
                          std::to_string(t - 1));
      }
      stamp(agg.image, known, state.input_rect);
    }
    J = std::move(agg.image);
  }

  if (config.second_term_weight > 0.0) {
    const auto w = static_cast<float>(config.second_term_weight);
    auto dst = J.data();
    auto src = cond.L.data();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = (1.0f - w) * dst[k] + w * src[k];
    stamp(J, input, state.input_rect);
  }
  return J;
}

/// Stage 2: L <- J_0 everywhere except the input rectangle, which keeps the
/// user's pixels.
inline ConditionCanvas stage2_update(const ConditionCanvas& cond, const ImageF& J0) {
  if (!J0.same_shape(cond.L)) throw DimensionError("stage2_update: J0 does not match L");
  if (!all_finite(J0)) throw NumericError("stage2_update: J0 contains non-finite values");
  ConditionCanvas next{J0, cond.input_rect, cond.generation + 1};
  stamp(next.L, crop_rect(cond.L, cond.input_rect), cond.input_rect);
  return next;
}

struct IterationDiagnostics {
  int iteration = 0;
  /// RMSE between L before and after this iteration.
  double l_change_rmse = 0.0;
  SeamMetric seam;
};

struct PanoramaResult {
  /// Final condition canvas L~ (equals J~_0 outside the input rectangle).
  ImageF panorama;
  std::vector<IterationDiagnostics> iterations;
  int generation = 0;
};

/// MultiConDiffusion: alternate stage 1 and stage 2 for config.outer_iters
/// iterations starting from L = input on a black canvas.
inline PanoramaResult run(const ImageF& input, const Rect& placement,
                          const DenoiserOracle& oracle, const CropLayout& layout,
                          const SamplerConfig& config) {
  config.validate();
  if (!all_finite(input)) throw NumericError("input image contains non-finite values");
  auto cond = make_condition(input, placement, layout);
  PanoramaResult result;
  for (int k = 0; k < config.outer_iters; ++k) {
    const auto state = make_initial_state(cond, oracle, config, k);
    const auto J0 = stage1_denoise(state, cond, oracle, layout, config, k);
    if (!all_finite(J0)) {
      throw NumericError("non-finite values in J_0 at outer iteration " + std::to_string(k));
    }
    auto next = stage2_update(cond, J0);
    IterationDiagnostics diag;
    diag.iteration = k;
    diag.l_change_rmse = rmse(next.L, cond.L);
    diag.seam = seam_metric(next.L, layout);
    result.iterations.push_back(diag);
    cond = std::move(next);
    if (config.early_stop && diag.l_change_rmse < config.early_stop_rmse) break;
  }
  result.panorama = std::move(cond.L);
  result.generation = cond.generation;
  return result;
}

/// MultiDiffusion with an inpainting model conditioned on the black canvas:
/// a single stage 1 pass, i.e. run() with one outer iteration.
inline ImageF multidiffusion(const ImageF& input, const Rect& placement,
                             const DenoiserOracle& oracle, const CropLayout& layout,
                             const SamplerConfig& config) {
  const auto cond = make_condition(input, placement, layout);
  const auto state = make_initial_state(cond, oracle, config, 0);
  return stage1_denoise(state, cond, oracle, layout, config, 0);
}

}  // namespace panofuse
