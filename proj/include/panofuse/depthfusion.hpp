// Copyright (C) 2026 The Panofuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "panofuse/error.hpp"
#include "panofuse/geometry.hpp"
#include "panofuse/image.hpp"
#include "panofuse/metrics.hpp"
#include "panofuse/parallel.hpp"
#include "panofuse/piecewise_linear.hpp"

namespace panofuse {

/// Monocular relative-depth estimator used as a black box. Output is
/// disparity-like (larger = nearer), one channel, same extent as the crop.
class DepthOracle {
 public:
  virtual ~DepthOracle() = default;

  virtual ImageF estimate(const ImageF& crop, int crop_index) const = 0;

  /// Range the oracle promises its outputs fall into.
  virtual std::pair<double, double> range() const {
    return {-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  }
};

struct FusionConfig {
  int iters = 4;
  int segments = 8;
  /// Patch whose map stays the identity (fixes the global affine gauge).
  int anchor_index = 0;
  bool monotone = true;
  double min_slope = 1e-3;
  int threads = 1;
  /// Allowed increase of the objective after a half-step, relative to
  /// max(1, previous objective).
  double monotonicity_tolerance = 1e-9;

  void validate(int patches) const {
    if (iters < 1) throw ConfigError("depth fusion iters must be >= 1");
    if (segments < 1) throw ConfigError("depth fusion segments must be >= 1");
    if (anchor_index < 0 || anchor_index >= patches) {
      throw ConfigError("anchor index " + std::to_string(anchor_index) + " outside [0, " +
                        std::to_string(patches) + ")");
    }
    if (monotone && !(min_slope > 0.0 && min_slope <= 1.0)) {
      throw ConfigError("min_slope must be in (0, 1] for monotone fitting");
    }
  }
};

/// Fused panoramic depth (relative disparity).
struct PanoDepth {
  ImageD depth;
  Mask valid;
};

/// One oracle call per crop, in parallel; results in crop order.
inline std::vector<ImageD> estimate_patches(const ImageF& pano, const CropLayout& layout,
                                            const DepthOracle& oracle, int threads = 1) {
  if (pano.width() != layout.canvas_width || pano.height() != layout.canvas_height) {
    throw DimensionError("estimate_patches: panorama does not match the layout canvas");
  }
  const auto [lo, hi] = oracle.range();
  std::vector<ImageD> patches(static_cast<std::size_t>(layout.n()));
  parallel_for(layout.n(), threads, [&](int i) {
    const auto& map = layout.maps[static_cast<std::size_t>(i)];
    const auto crop = project_forward(map, pano);
    ImageF depth;
    try {
      depth = oracle.estimate(crop, i);
    } catch (const std::exception& e) {
      throw OracleError("depth estimate failed for crop " + std::to_string(i) + ": " + e.what());
    }
    if (depth.width() != crop.width() || depth.height() != crop.height() ||
        depth.channels() != 1) {
      throw OracleError("depth oracle returned a wrongly shaped patch for crop " +
                        std::to_string(i));
    }
    for (const float v : depth.data()) {
      if (!std::isfinite(v) || v < lo || v > hi) {
        throw OracleError("depth oracle returned an out-of-range value for crop " +
                          std::to_string(i));
      }
    }
    patches[static_cast<std::size_t>(i)] = convert<double>(depth);
  });
  return patches;
}

/// Stage 1: with the maps fixed, D is the unweighted mean of every aligned
/// patch pixel that samples it (the exact minimizer of the objective in D).
inline PanoDepth solve_depth_stage(std::span<const ImageD> aligned, const CropLayout& layout) {
  if (aligned.size() != static_cast<std::size_t>(layout.n())) {
    throw DimensionError("solve_depth_stage: one aligned patch per crop required");
  }
  Accumulator acc(layout.canvas_width, layout.canvas_height, 1);
  for (std::size_t i = 0; i < aligned.size(); ++i) {
    const auto& map = layout.maps[i];
    if (!all_finite(aligned[i])) {
      throw NumericError("solve_depth_stage: patch " + std::to_string(i) + " is not finite");
    }
    project_backward(map, aligned[i], ImageD(map.crop_width, map.crop_height, 1, 1.0), acc);
  }
  PanoDepth out;
  Mask zero;
  out.depth = normalize(acc, &zero);
  for (std::size_t q = 0; q < zero.pixel_count(); ++q) {
    if (zero.data()[q]) {
      throw CoverageError("solve_depth_stage: canvas pixel (" +
                          std::to_string(q % layout.canvas_width) + ", " +
                          std::to_string(q / layout.canvas_width) + ") is covered by no patch");
    }
  }
  out.valid = Mask(layout.canvas_width, layout.canvas_height, 1, 1);
  return out;
}

/// sum_i sum_p (D[F_i(p)] - G_i(raw_i[p]))^2 over mapped crop pixels.
inline double fusion_objective(const ImageD& depth, std::span<const ImageD> raw,
                               std::span<const PiecewiseLinearMap> maps,
                               const CropLayout& layout) {
  double total = 0.0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const auto& m = layout.maps[i];
    double patch = 0.0;
    for (std::size_t p = 0; p < m.crop_pixels(); ++p) {
      const auto q = m.forward[p];
      if (q == kUnmapped) continue;
      const double r = depth.data()[static_cast<std::size_t>(q)] - maps[i](raw[i].data()[p]);
      patch += r * r;
    }
    total += patch;
  }
  return total;
}

namespace detail {

/// Minimizes 0.5 z'Gz - c'z subject to z_j >= lower_j for j in `bounded`,
/// by the primal active-set method starting from the feasible point z.
inline Eigen::VectorXd bound_constrained_qp(const Eigen::MatrixXd& G, const Eigen::VectorXd& c,
                                            const std::vector<int>& bounded,
                                            const Eigen::VectorXd& lower, Eigen::VectorXd z) {
  const int dim = static_cast<int>(G.rows());
  std::vector<char> is_bounded(static_cast<std::size_t>(dim), 0);
  std::vector<char> active(static_cast<std::size_t>(dim), 0);
  for (const int j : bounded) {
    is_bounded[static_cast<std::size_t>(j)] = 1;
    if (z[j] <= lower[j]) {
      z[j] = lower[j];
      active[static_cast<std::size_t>(j)] = 1;
    }
  }
  const double scale = 1.0 + c.cwiseAbs().maxCoeff() + G.cwiseAbs().maxCoeff();
  for (int iter = 0; iter < 50 * (dim + 1); ++iter) {
    std::vector<int> free;
    for (int j = 0; j < dim; ++j) {
      if (!active[static_cast<std::size_t>(j)]) free.push_back(j);
    }
    Eigen::VectorXd target = z;
    if (!free.empty()) {
      const int nf = static_cast<int>(free.size());
      Eigen::MatrixXd Gff(nf, nf);
      Eigen::VectorXd rhs(nf);
      for (int a = 0; a < nf; ++a) {
        rhs[a] = c[free[a]];
        for (int j = 0; j < dim; ++j) {
          if (active[static_cast<std::size_t>(j)]) rhs[a] -= G(free[a], j) * z[j];
        }
        for (int b = 0; b < nf; ++b) Gff(a, b) = G(free[a], free[b]);
      }
      const Eigen::VectorXd sol = Gff.ldlt().solve(rhs);
      for (int a = 0; a < nf; ++a) target[free[a]] = sol[a];
    }
    const Eigen::VectorXd step = target - z;
    if (step.cwiseAbs().maxCoeff() <= 1e-15 * (1.0 + z.cwiseAbs().maxCoeff())) {
      const Eigen::VectorXd grad = G * z - c;
      int worst = -1;
      double worst_value = -1e-12 * scale;
      for (int j = 0; j < dim; ++j) {
        if (active[static_cast<std::size_t>(j)] && grad[j] < worst_value) {
          worst = j;
          worst_value = grad[j];
        }
      }
      if (worst < 0) return z;
      active[static_cast<std::size_t>(worst)] = 0;
      continue;
    }
    double alpha = 1.0;
    int blocking = -1;
    for (int j = 0; j < dim; ++j) {
      if (!is_bounded[static_cast<std::size_t>(j)] || active[static_cast<std::size_t>(j)] ||
          step[j] >= 0.0) {
        continue;
      }
      const double a = (lower[j] - z[j]) / step[j];
      if (a < alpha) {
        alpha = a;
        blocking = j;
      }
    }
    z += alpha * step;
    if (blocking >= 0) {
      z[blocking] = lower[blocking];
      active[static_cast<std::size_t>(blocking)] = 1;
    }
  }
  throw NumericError("active-set solver did not converge");
}

/// Per-segment sufficient statistics of (raw x, target d) samples.
struct SegmentStats {
  double n = 0, sx = 0, sxx = 0, sd = 0, sdx = 0;  // x measured from segment start
  std::vector<double> values;                      // raw values, for distinct counts
};

}  // namespace detail

/// Result of fitting one patch map.
struct PatchFit {
  PiecewiseLinearMap map;
  std::vector<std::string> warnings;
};

/// Knots for a patch: `segments` equal-width segments over [min, max] of its
/// mapped raw depth (widened by +-0.5 when the patch is constant).
inline std::vector<double> patch_knots(const ImageD& raw, const ProjectionMap& map,
                                       int segments) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t p = 0; p < map.crop_pixels(); ++p) {
    if (map.forward[p] == kUnmapped) continue;
    lo = std::min(lo, raw.data()[p]);
    hi = std::max(hi, raw.data()[p]);
  }
  if (!std::isfinite(lo)) throw CoverageError("patch " + std::to_string(map.crop_index) + " maps no pixels");
  if (!(hi - lo > 1e-12 * std::max(1.0, std::abs(lo)))) {
    lo -= 0.5;
    hi += 0.5;
  }
  return PiecewiseLinearMap::uniform_knots(lo, hi, segments);
}

/// argmin_theta ||F_i(D) - G_theta(raw)||^2 over continuous piecewise-linear
/// maps on the given knots; slopes >= min_slope when monotone. Segments with
/// fewer than two distinct raw values are merged with a neighbour.
inline PatchFit fit_patch_map(const ImageD& depth, const ImageD& raw, const ProjectionMap& map,
                              std::vector<double> knots, bool monotone, double min_slope) {
  PatchFit fit;
  const int K = static_cast<int>(knots.size()) - 1;
  const PiecewiseLinearMap locate(knots, knots);
  std::vector<detail::SegmentStats> seg(static_cast<std::size_t>(K));
  for (std::size_t p = 0; p < map.crop_pixels(); ++p) {
    const auto q = map.forward[p];
    if (q == kUnmapped) continue;
    const double x = raw.data()[p];
    seg[static_cast<std::size_t>(locate.segment_of(x))].values.push_back(x);
  }
  std::vector<int> distinct(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    auto& v = seg[static_cast<std::size_t>(k)].values;
    std::sort(v.begin(), v.end());
    distinct[static_cast<std::size_t>(k)] =
        static_cast<int>(std::unique(v.begin(), v.end()) - v.begin());
  }

  // Active knots: indices into `knots`; merge under-determined segments.
  std::vector<int> active(static_cast<std::size_t>(K) + 1);
  for (int k = 0; k <= K; ++k) active[static_cast<std::size_t>(k)] = k;
  auto merged_distinct = [&](std::size_t j) {
    int d = 0;
    for (int k = active[j]; k < active[j + 1]; ++k) d += distinct[static_cast<std::size_t>(k)];
    return d;
  };
  bool merged_any = false;
  for (;;) {
    const std::size_t segs = active.size() - 1;
    if (segs <= 1) break;
    std::size_t bad = segs;
    for (std::size_t j = 0; j < segs; ++j) {
      if (merged_distinct(j) < 2) {
        bad = j;
        break;
      }
    }
    if (bad == segs) break;
    const std::size_t drop = bad + 1 < segs ? bad + 1 : bad;  // knot between bad and neighbour
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(drop));
    merged_any = true;
  }
  if (merged_any) {
    fit.warnings.push_back("patch " + std::to_string(map.crop_index) + ": merged " +
                           std::to_string(K - static_cast<int>(active.size() - 1)) +
                           " segment(s) with fewer than 2 distinct depth values");
  }

  const std::size_t m = active.size() - 1;
  std::vector<double> ak(active.size());
  for (std::size_t j = 0; j < active.size(); ++j) ak[j] = knots[static_cast<std::size_t>(active[j])];

  // Parameters z = [G(ak_0), slope_0, ..., slope_{m-1}].
  const PiecewiseLinearMap reduced(ak, ak);
  std::vector<detail::SegmentStats> stats(m);
  for (std::size_t p = 0; p < map.crop_pixels(); ++p) {
    const auto q = map.forward[p];
    if (q == kUnmapped) continue;
    const double x = raw.data()[p];
    const double d = depth.data()[static_cast<std::size_t>(q)];
    const auto j = static_cast<std::size_t>(reduced.segment_of(x));
    const double xr = x - ak[j];
    auto& s = stats[j];
    s.n += 1;
    s.sx += xr;
    s.sxx += xr * xr;
    s.sd += d;
    s.sdx += d * xr;
  }

  if (m == 1 && merged_distinct(0) < 2) {
    // A single distinct value: only the offset is identifiable; keep slope 1.
    fit.warnings.push_back("patch " + std::to_string(map.crop_index) +
                           ": constant raw depth, fitted shift only");
    const auto& s = stats[0];
    const double first = s.sd / s.n - s.sx / s.n;
    std::vector<double> values(knots.size());
    for (std::size_t k = 0; k < knots.size(); ++k) values[k] = first + (knots[k] - ak[0]);
    fit.map = PiecewiseLinearMap(std::move(knots), std::move(values));
    return fit;
  }

  const int dim = static_cast<int>(m) + 1;
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(dim);
  for (std::size_t j = 0; j < m; ++j) {
    // Row for a sample in segment j: u_j + xr * e_{1+j}, with
    // u_j = [1, h_0, ..., h_{j-1}, 0, ...].
    Eigen::VectorXd u = Eigen::VectorXd::Zero(dim);
    u[0] = 1.0;
    for (std::size_t k = 0; k < j; ++k) u[static_cast<int>(k) + 1] = ak[k + 1] - ak[k];
    const int e = static_cast<int>(j) + 1;
    const auto& s = stats[j];
    G += s.n * u * u.transpose();
    G.col(e) += s.sx * u;
    G.row(e) += s.sx * u.transpose();
    G(e, e) += s.sxx;
    c += s.sd * u;
    c[e] += s.sdx;
  }

  Eigen::VectorXd z;
  if (monotone) {
    Eigen::VectorXd start(dim);
    start[0] = ak[0];
    start.tail(dim - 1).setConstant(1.0);
    Eigen::VectorXd lower = Eigen::VectorXd::Constant(dim, -std::numeric_limits<double>::infinity());
    std::vector<int> bounded;
    for (int j = 1; j < dim; ++j) {
      bounded.push_back(j);
      lower[j] = min_slope;
    }
    z = detail::bound_constrained_qp(G, c, bounded, lower, start);
  } else {
    z = G.ldlt().solve(c);
  }
  if (!z.allFinite()) throw NumericError("patch map fit produced non-finite parameters");

  const std::vector<double> slopes(z.data() + 1, z.data() + dim);
  const auto reduced_fit = PiecewiseLinearMap::from_slopes(ak, z[0], slopes);
  std::vector<double> values(knots.size());
  for (std::size_t k = 0; k < knots.size(); ++k) values[k] = reduced_fit(knots[k]);
  fit.map = PiecewiseLinearMap(std::move(knots), std::move(values));
  return fit;
}

struct ThetaStageResult {
  std::vector<PiecewiseLinearMap> maps;
  std::vector<std::string> warnings;
};

/// Stage 2: with D fixed, fit every patch map independently (the objective
/// separates per patch). The anchor patch keeps the identity.
inline ThetaStageResult solve_theta_stage(const PanoDepth& D, std::span<const ImageD> raw,
                                          const CropLayout& layout, const FusionConfig& config) {
  config.validate(layout.n());
  if (raw.size() != static_cast<std::size_t>(layout.n())) {
    throw DimensionError("solve_theta_stage: one raw patch per crop required");
  }
  if (D.depth.width() != layout.canvas_width || D.depth.height() != layout.canvas_height) {
    throw DimensionError("solve_theta_stage: depth does not match the layout canvas");
  }
  std::vector<PatchFit> fits(raw.size());
  parallel_for(layout.n(), config.threads, [&](int i) {
    const auto idx = static_cast<std::size_t>(i);
    auto knots = patch_knots(raw[idx], layout.maps[idx], config.segments);
    if (i == config.anchor_index) {
      fits[idx].map = PiecewiseLinearMap(knots, knots);
      return;
    }
    fits[idx] = fit_patch_map(D.depth, raw[idx], layout.maps[idx], std::move(knots),
                              config.monotone, config.min_slope);
  });
  ThetaStageResult result;
  for (auto& f : fits) {
    result.maps.push_back(std::move(f.map));
    for (auto& w : f.warnings) result.warnings.push_back(std::move(w));
  }
  return result;
}

struct FusionResult {
  PanoDepth depth;
  std::vector<PiecewiseLinearMap> maps;
  std::vector<ImageD> raw;
  /// Objective after every half-step: D, theta, D, theta, ..., final D.
  std::vector<double> objective;
  /// Seam metric of D after every depth half-step.
  std::vector<SeamMetric> seams;
  std::vector<std::string> warnings;
};

/// Alternating minimization from identity maps on precomputed raw patches.
/// A final depth half-step makes the returned D consistent with the maps.
inline FusionResult fuse_patches(std::vector<ImageD> raw, const CropLayout& layout,
                                 const FusionConfig& config) {
  config.validate(layout.n());
  if (raw.size() != static_cast<std::size_t>(layout.n())) {
    throw DimensionError("fuse: one raw patch per crop required");
  }
  FusionResult result;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    auto knots = patch_knots(raw[i], layout.maps[i], config.segments);
    result.maps.emplace_back(knots, knots);
  }

  auto record = [&](const char* stage, int iteration) {
    const double value =
        fusion_objective(result.depth.depth, raw, result.maps, layout);
    if (!std::isfinite(value)) throw NumericError("depth fusion objective is not finite");
    if (!result.objective.empty()) {
      const double prev = result.objective.back();
      if (value > prev + config.monotonicity_tolerance * std::max(1.0, prev)) {
        throw NumericError(std::string("depth fusion objective increased after the ") + stage +
                           " step of iteration " + std::to_string(iteration) + ": " +
                           std::to_string(prev) + " -> " + std::to_string(value));
      }
    }
    result.objective.push_back(value);
  };
  auto depth_step = [&](int iteration) {
    std::vector<ImageD> aligned;
    aligned.reserve(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) aligned.push_back(apply_plmap(result.maps[i], raw[i]));
    result.depth = solve_depth_stage(aligned, layout);
    result.seams.push_back(seam_metric(result.depth.depth, layout));
    record("depth", iteration);
  };

  for (int it = 0; it < config.iters; ++it) {
    depth_step(it);
    auto theta = solve_theta_stage(result.depth, raw, layout, config);
    result.maps = std::move(theta.maps);
    if (it == 0) result.warnings = std::move(theta.warnings);
    record("theta", it);
  }
  depth_step(config.iters);
  result.raw = std::move(raw);
  return result;
}

/// PanoDepthFusion on a panorama: patch estimates, then fuse_patches.
inline FusionResult fuse(const ImageF& pano, const CropLayout& layout, const DepthOracle& oracle,
                         const FusionConfig& config) {
  config.validate(layout.n());
  return fuse_patches(estimate_patches(pano, layout, oracle, config.threads), layout, config);
}

}  // namespace panofuse
