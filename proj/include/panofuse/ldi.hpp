// Copyright (C) 2026 The Panofuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <string>
#include <vector>

#include "panofuse/error.hpp"
#include "panofuse/geometry.hpp"
#include "panofuse/image.hpp"
#include "panofuse/parallel.hpp"

namespace panofuse {

struct ClusterConfig {
  int k = 4;
  int bins = 256;
  /// Clusters holding less than this fraction of the pixels are merged into
  /// their nearest neighbour.
  double min_cluster_frac = 0.0;

  void validate() const {
    if (k < 1) throw ConfigError("ldi: layer count must be >= 1");
    if (bins < k) throw ConfigError("ldi: need at least as many histogram bins as layers");
    if (!(min_cluster_frac >= 0.0 && min_cluster_frac < 1.0)) {
      throw ConfigError("ldi: min_cluster_frac must be in [0, 1)");
    }
  }
};

struct LdiLayer {
  ImageF color;
  ImageD depth;  // disparity
  Mask occupancy;
  /// Pixels completed by fill_holes (disjoint from occupancy).
  Mask filled;
  double mean_disparity = 0.0;
  std::size_t occupied_count = 0;

  bool empty() const noexcept { return occupied_count == 0; }
};

/// Layers ordered by mean disparity, nearest first. Empty layers (when the
/// scene has fewer modes than requested) come last.
struct LayeredDepthImage {
  std::vector<LdiLayer> layers;
  std::vector<std::string> warnings;
  bool cyclic = true;
};

namespace detail {

struct Cluster {
  int first_bin = 0;
  int last_bin = 0;
  double count = 0.0;
  double sum = 0.0;
  double mean() const noexcept { return sum / count; }
};

/// Merges the adjacent pair with the smallest mean gap. For clusters that
/// are intervals of the line, the average pairwise distance between two of
/// them equals the gap between their means, and the closest pair is always
/// adjacent, so this is exact average-linkage agglomeration.
inline void merge_closest(std::vector<Cluster>& clusters) {
  std::size_t best = 0;
  double gap = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j + 1 < clusters.size(); ++j) {
    const double g = clusters[j + 1].mean() - clusters[j].mean();
    if (g < gap) {
      gap = g;
      best = j;
    }
  }
  auto& a = clusters[best];
  const auto& b = clusters[best + 1];
  a.last_bin = b.last_bin;
  a.count += b.count;
  a.sum += b.sum;
  clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(best) + 1);
}

}  // namespace detail

/// Partitions the canvas into cfg.k layers by agglomerative (average-linkage)
/// clustering of a disparity histogram; every pixel takes its bin's cluster.
inline LayeredDepthImage cluster_layers(const ImageF& pano, const ImageD& disparity,
                                        const ClusterConfig& cfg = {}, bool cyclic = true) {
  cfg.validate();
  if (!pano.same_extent(disparity) || disparity.channels() != 1) {
    throw DimensionError("cluster_layers: panorama and depth extents differ");
  }
  if (!all_finite(disparity)) throw NumericError("cluster_layers: depth is not finite");
  const auto n = disparity.pixel_count();
  if (n == 0) throw DimensionError("cluster_layers: empty image");
  const auto [lo_it, hi_it] = std::minmax_element(disparity.data().begin(), disparity.data().end());
  const double lo = *lo_it;
  const double hi = *hi_it;

  std::vector<int> bin_of(n, 0);
  std::vector<detail::Cluster> bins(static_cast<std::size_t>(cfg.bins));
  for (int b = 0; b < cfg.bins; ++b) bins[static_cast<std::size_t>(b)] = {b, b, 0.0, 0.0};
  for (std::size_t q = 0; q < n; ++q) {
    const double d = disparity.data()[q];
    int b = hi > lo ? static_cast<int>(std::floor((d - lo) / (hi - lo) * cfg.bins)) : 0;
    b = std::clamp(b, 0, cfg.bins - 1);
    bin_of[q] = b;
    bins[static_cast<std::size_t>(b)].count += 1.0;
    bins[static_cast<std::size_t>(b)].sum += d;
  }
  std::vector<detail::Cluster> clusters;
  for (const auto& b : bins) {
    if (b.count > 0) clusters.push_back(b);
  }

  LayeredDepthImage ldi;
  ldi.cyclic = cyclic;
  if (static_cast<int>(clusters.size()) < cfg.k) {
    ldi.warnings.push_back("ldi: only " + std::to_string(clusters.size()) +
                           " distinct disparity mode(s); " +
                           std::to_string(cfg.k - static_cast<int>(clusters.size())) +
                           " layer(s) left empty");
  }
  while (static_cast<int>(clusters.size()) > cfg.k) detail::merge_closest(clusters);
  for (;;) {
    if (clusters.size() <= 1 || cfg.min_cluster_frac <= 0.0) break;
    auto small = std::find_if(clusters.begin(), clusters.end(), [&](const auto& c) {
      return c.count < cfg.min_cluster_frac * static_cast<double>(n);
    });
    if (small == clusters.end()) break;
    const auto j = static_cast<std::size_t>(small - clusters.begin());
    // Merge toward the neighbour with the closer mean.
    std::size_t into = j == 0 ? 1 : j - 1;
    if (j > 0 && j + 1 < clusters.size() &&
        clusters[j + 1].mean() - clusters[j].mean() < clusters[j].mean() - clusters[j - 1].mean()) {
      into = j + 1;
    }
    auto& a = clusters[std::min(j, into)];
    const auto& b = clusters[std::max(j, into)];
    a.last_bin = b.last_bin;
    a.count += b.count;
    a.sum += b.sum;
    clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(std::max(j, into)));
    ldi.warnings.push_back("ldi: merged a layer below min_cluster_frac");
  }

  // Clusters are in ascending disparity; layer 0 is the nearest.
  const int m = static_cast<int>(clusters.size());
  std::vector<int> layer_of_bin(static_cast<std::size_t>(cfg.bins), 0);
  for (int c = 0; c < m; ++c) {
    const auto& cl = clusters[static_cast<std::size_t>(c)];
    for (int b = cl.first_bin; b <= cl.last_bin; ++b) layer_of_bin[static_cast<std::size_t>(b)] = m - 1 - c;
  }
  const int w = pano.width();
  const int h = pano.height();
  const int ch = pano.channels();
  for (int l = 0; l < cfg.k; ++l) {
    LdiLayer layer{ImageF(w, h, ch, 0.0f), ImageD(w, h, 1, 0.0), Mask(w, h, 1, 0),
                   Mask(w, h, 1, 0), 0.0, 0};
    if (l < m) layer.mean_disparity = clusters[static_cast<std::size_t>(m - 1 - l)].mean();
    ldi.layers.push_back(std::move(layer));
  }
  for (std::size_t q = 0; q < n; ++q) {
    auto& layer = ldi.layers[static_cast<std::size_t>(layer_of_bin[static_cast<std::size_t>(bin_of[q])])];
    layer.occupancy.data()[q] = 1;
    ++layer.occupied_count;
    layer.depth.data()[q] = disparity.data()[q];
    for (int c = 0; c < ch; ++c) {
      layer.color.data()[q * static_cast<std::size_t>(ch) + c] =
          pano.data()[q * static_cast<std::size_t>(ch) + c];
    }
  }
  return ldi;
}

struct FillConfig {
  /// Maximum 4-connected distance (pixels) from a layer's own pixels that
  /// gets filled.
  int band_width = 8;
  int max_sweeps = 20000;
  double tolerance = 1e-7;
  int threads = 1;
};

/// Completes each layer behind nearer layers: pixels occupied by a nearer
/// layer within band_width of the layer's own pixels get colour and depth by
/// harmonic (4-neighbour) diffusion from the layer's pixels. The result is
/// flagged in `filled`. Columns wrap when the LDI is cyclic.
inline LayeredDepthImage fill_holes(LayeredDepthImage ldi, const FillConfig& cfg = {}) {
  if (cfg.band_width < 0) throw ConfigError("fill band width must be >= 0");
  const auto count = static_cast<int>(ldi.layers.size());
  if (count == 0) return ldi;
  const int w = ldi.layers.front().occupancy.width();
  const int h = ldi.layers.front().occupancy.height();
  const auto n = static_cast<std::size_t>(w) * h;
  const bool cyclic = ldi.cyclic;

  // nearer[q]: some layer before l occupies q (prefix union, per layer).
  std::vector<Mask> nearer(static_cast<std::size_t>(count), Mask(w, h, 1, 0));
  for (int l = 1; l < count; ++l) {
    const auto& prev = nearer[static_cast<std::size_t>(l) - 1];
    const auto& occ = ldi.layers[static_cast<std::size_t>(l) - 1].occupancy;
    auto& cur = nearer[static_cast<std::size_t>(l)];
    for (std::size_t q = 0; q < n; ++q) cur.data()[q] = prev.data()[q] | occ.data()[q];
  }

  auto neighbours = [&](int x, int y, auto&& visit) {
    const int xs[4] = {x - 1, x + 1, x, x};
    const int ys[4] = {y, y, y - 1, y + 1};
    for (int k = 0; k < 4; ++k) {
      int nx = xs[k];
      const int ny = ys[k];
      if (ny < 0 || ny >= h) continue;
      if (nx < 0 || nx >= w) {
        if (!cyclic) continue;
        nx = (nx + w) % w;
      }
      visit(static_cast<std::size_t>(ny) * w + nx);
    }
  };

  parallel_for(count, cfg.threads, [&](int l) {
    auto& layer = ldi.layers[static_cast<std::size_t>(l)];
    if (layer.empty() || cfg.band_width == 0) return;
    const auto& occ = layer.occupancy.data();
    const auto& near = nearer[static_cast<std::size_t>(l)].data();

    // Breadth-first distance from the layer's own pixels through nearer pixels.
    std::vector<int> dist(n, -1);
    std::deque<std::size_t> queue;
    for (std::size_t q = 0; q < n; ++q) {
      if (occ[q]) {
        dist[q] = 0;
        queue.push_back(q);
      }
    }
    std::vector<std::size_t> band;
    while (!queue.empty()) {
      const auto q = queue.front();
      queue.pop_front();
      if (dist[q] >= cfg.band_width) continue;
      neighbours(static_cast<int>(q % w), static_cast<int>(q / w), [&](std::size_t r) {
        if (dist[r] >= 0 || !near[r]) return;
        dist[r] = dist[q] + 1;
        band.push_back(r);
        queue.push_back(r);
      });
    }
    if (band.empty()) return;

    // Initialise in BFS order from already-known neighbours, then Gauss-Seidel.
    const int ch = layer.color.channels();
    auto color = layer.color.data();
    auto depth = layer.depth.data();
    std::vector<std::uint8_t> known(occ.begin(), occ.end());
    std::vector<double> acc(static_cast<std::size_t>(ch) + 1);
    auto relax = [&](std::size_t q) {
      std::fill(acc.begin(), acc.end(), 0.0);
      int m = 0;
      neighbours(static_cast<int>(q % w), static_cast<int>(q / w), [&](std::size_t r) {
        if (!known[r]) return;
        for (int c = 0; c < ch; ++c) acc[static_cast<std::size_t>(c)] += color[r * ch + c];
        acc[static_cast<std::size_t>(ch)] += depth[r];
        ++m;
      });
      double change = 0.0;
      if (m == 0) return change;
      for (int c = 0; c < ch; ++c) {
        const auto v = static_cast<float>(acc[static_cast<std::size_t>(c)] / m);
        change = std::max(change, static_cast<double>(std::abs(v - color[q * ch + c])));
        color[q * ch + c] = v;
      }
      const double d = acc[static_cast<std::size_t>(ch)] / m;
      change = std::max(change, std::abs(d - depth[q]));
      depth[q] = d;
      return change;
    };
    for (const auto q : band) {
      relax(q);
      known[q] = 1;
    }
    for (int sweep = 0; sweep < cfg.max_sweeps; ++sweep) {
      double change = 0.0;
      for (const auto q : band) change = std::max(change, relax(q));
      if (change < cfg.tolerance) break;
    }
    for (const auto q : band) layer.filled.data()[q] = 1;
  });
  return ldi;
}

/// Per-pixel Gaussian initialisation.
struct GaussianSeed {
  std::array<float, 3> position{};
  std::array<float, 3> color{};
  std::array<float, 3> scale{};
  std::array<float, 4> rotation{1.0f, 0.0f, 0.0f, 0.0f};  // (w, x, y, z)
  float opacity = 0.5f;
  std::uint8_t layer_id = 0;

  friend bool operator==(const GaussianSeed&, const GaussianSeed&) = default;
};

struct SeedSet {
  std::vector<GaussianSeed> seeds;
  /// Pixels skipped because their disparity was not positive.
  std::size_t skipped = 0;
};

/// One seed per occupied or filled pixel of every layer, in layer then
/// row-major order. A pixel at column u, row v and disparity d sits at radius
/// r = 1/d: position r * (sin phi, (v - cv) / f, cos phi) with phi the column
/// azimuth; its isotropic scale is the pixel's angular size times r.
inline SeedSet init_gaussians(const LayeredDepthImage& ldi, const CylinderSpec& cyl) {
  SeedSet out;
  for (std::size_t l = 0; l < ldi.layers.size(); ++l) {
    const auto& layer = ldi.layers[l];
    if (layer.occupancy.width() != cyl.width || layer.occupancy.height() != cyl.height) {
      throw DimensionError("init_gaussians: layer does not match the cylinder");
    }
    const int ch = layer.color.channels();
    for (int v = 0; v < cyl.height; ++v) {
      for (int u = 0; u < cyl.width; ++u) {
        if (!layer.occupancy(u, v) && !layer.filled(u, v)) continue;
        const double d = layer.depth(u, v);
        if (!(d > 0.0) || !std::isfinite(d)) {
          ++out.skipped;
          continue;
        }
        const double r = 1.0 / d;
        const double phi = cyl.azimuth(u);
        GaussianSeed s;
        s.position = {static_cast<float>(r * std::sin(phi)),
                      static_cast<float>(r * (v - cyl.center_row()) / cyl.focal_px),
                      static_cast<float>(r * std::cos(phi))};
        for (int c = 0; c < 3; ++c) s.color[static_cast<std::size_t>(c)] = layer.color(u, v, std::min(c, ch - 1));
        const auto scale = static_cast<float>(cyl.pixel_angle() * r);
        s.scale = {scale, scale, scale};
        s.layer_id = static_cast<std::uint8_t>(l);
        out.seeds.push_back(s);
      }
    }
  }
  return out;
}

}  // namespace panofuse
