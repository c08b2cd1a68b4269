// Copyright (C) 2026 The Panofuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <initializer_list>

#include "panofuse/image.hpp"

// Counter-based noise. Every sample is a pure function of (key, index), so
// noise fields can be generated in any order or in parallel and still match
// bit for bit. Only integer ops and f32 additions are used, which keeps the
// stream reproducible from any language that has uint64 and IEEE float32:
//
//   splitmix64(x): z = x + 0x9E3779B97F4A7C15; z = (z ^ z>>30) * 0xBF58476D1CE4E5B9;
//                  z = (z ^ z>>27) * 0x94D049BB133111EB; return z ^ z>>31
//   derive_key(k, v...): k = splitmix64(k ^ splitmix64(v)) folded left over v
//   uniform(k, i) = float32(splitmix64(k + i * 0xD1B54A32D192ED03) >> 40) * 2^-24
//   normal(k, i)  = (sum_{j=0..11} uniform(k, 12*i + j), summed in order in f32) - 6
namespace panofuse::rng {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  std::uint64_t z = x + 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t derive_key(std::uint64_t key,
                                   std::initializer_list<std::uint64_t> values) noexcept {
  for (const std::uint64_t v : values) key = splitmix64(key ^ splitmix64(v));
  return key;
}

/// Uniform in [0, 1) with 24 random bits; exactly representable in f32.
constexpr float uniform(std::uint64_t key, std::uint64_t index) noexcept {
  const std::uint64_t bits = splitmix64(key + index * 0xD1B54A32D192ED03ULL) >> 40;
  return static_cast<float>(bits) * (1.0f / 16777216.0f);
}

/// Approximately standard normal (Irwin-Hall, n = 12): mean 0, variance 1.
constexpr float normal(std::uint64_t key, std::uint64_t index) noexcept {
  float sum = 0.0f;
  for (std::uint64_t j = 0; j < 12; ++j) sum += uniform(key, index * 12 + j);
  return sum - 6.0f;
}

inline ImageF normal_image(int width, int height, int channels, std::uint64_t key) {
  ImageF out(width, height, channels);
  auto d = out.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = normal(key, i);
  return out;
}

}  // namespace panofuse::rng
