// Copyright (C) 2026 The Panofuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>

#include "panofuse/error.hpp"
#include "panofuse/image.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

namespace panofuse::io {

// Canvas values are read and written as-is in [0, 1] per channel; PNGs are
// RGB or gray, PFMs hold raw f32 (lossless).

namespace detail {

inline void require_file(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) {
    throw MissingFileError("input file not found: " + path.string());
  }
}

inline void ensure_parent(const std::filesystem::path& path) {
  const auto parent = path.parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
}

inline void write(const std::filesystem::path& path, const cv::Mat& mat) {
  ensure_parent(path);
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), mat);
  } catch (const cv::Exception& e) {
    throw IoError("cannot write " + path.string() + ": " + e.what());
  }
  if (!ok) throw IoError("cannot write " + path.string());
}

inline cv::Mat read(const std::filesystem::path& path) {
  require_file(path);
  cv::Mat mat;
  try {
    mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  } catch (const cv::Exception& e) {
    throw IoError("cannot decode " + path.string() + ": " + e.what());
  }
  if (mat.empty()) throw IoError("cannot decode " + path.string());
  return mat;
}

/// OpenCV keeps colour images as BGR(A); panofuse images are RGB.
inline int swap_rb(int c, int channels) { return channels >= 3 && c < 3 ? 2 - c : c; }

template <typename T>
cv::Mat to_mat(const Image<T>& img, int depth, double scale, bool clamp01) {
  const int ch = img.channels();
  cv::Mat mat(img.height(), img.width(), CV_MAKETYPE(depth, ch));
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < ch; ++c) {
        double v = static_cast<double>(img(x, y, c));
        if (clamp01) v = std::clamp(std::isfinite(v) ? v : 0.0, 0.0, 1.0);
        const int oc = swap_rb(c, ch);
        if (depth == CV_16U) {
          mat.ptr<std::uint16_t>(y)[x * ch + oc] = static_cast<std::uint16_t>(std::lround(v * scale));
        } else if (depth == CV_8U) {
          mat.ptr<std::uint8_t>(y)[x * ch + oc] = static_cast<std::uint8_t>(std::lround(v * scale));
        } else {
          mat.ptr<float>(y)[x * ch + oc] = static_cast<float>(v);
        }
      }
    }
  }
  return mat;
}

inline ImageF from_mat(const cv::Mat& mat, const std::filesystem::path& path) {
  double scale = 0.0;
  switch (mat.depth()) {
    case CV_8U: scale = 1.0 / 255.0; break;
    case CV_16U: scale = 1.0 / 65535.0; break;
    case CV_32F: scale = 1.0; break;
    default: throw IoError("unsupported pixel depth in " + path.string());
  }
  const int in_ch = mat.channels();
  const int ch = in_ch == 4 ? 3 : in_ch == 2 ? 1 : in_ch;
  ImageF img(mat.cols, mat.rows, ch);
  for (int y = 0; y < mat.rows; ++y) {
    for (int x = 0; x < mat.cols; ++x) {
      for (int c = 0; c < ch; ++c) {
        const int ic = swap_rb(c, in_ch);
        const std::size_t k = static_cast<std::size_t>(x) * in_ch + ic;
        double v = 0.0;
        if (mat.depth() == CV_8U) v = mat.ptr<std::uint8_t>(y)[k];
        else if (mat.depth() == CV_16U) v = mat.ptr<std::uint16_t>(y)[k];
        else v = mat.ptr<float>(y)[k];
        img(x, y, c) = static_cast<float>(v * scale);
      }
    }
  }
  return img;
}

}  // namespace detail

/// 8- or 16-bit PNG (or any format OpenCV reads) as RGB / gray in [0, 1];
/// an alpha channel is dropped.
inline ImageF read_image(const std::filesystem::path& path) {
  return detail::from_mat(detail::read(path), path);
}

/// 16-bit PNG; values are clamped to [0, 1] and non-finite values written as 0.
inline void write_png16(const std::filesystem::path& path, const ImageF& img) {
  if (img.channels() != 1 && img.channels() != 3) {
    throw DimensionError("write_png16: need 1 or 3 channels");
  }
  detail::write(path, detail::to_mat(img, CV_16U, 65535.0, true));
}

/// 8-bit gray PNG with 255 where the mask is set.
inline void write_mask_png(const std::filesystem::path& path, const Mask& mask) {
  ImageF f(mask.width(), mask.height(), 1);
  for (std::size_t k = 0; k < f.data().size(); ++k) f.data()[k] = mask.data()[k] ? 1.0f : 0.0f;
  detail::write(path, detail::to_mat(f, CV_8U, 255.0, true));
}

inline Mask read_mask_png(const std::filesystem::path& path) {
  const auto img = read_image(path);
  Mask m(img.width(), img.height(), 1);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) m(x, y) = img(x, y, 0) >= 0.5f;
  }
  return m;
}

/// Lossless f32 PFM (1 or 3 channels).
template <typename T>
void write_pfm(const std::filesystem::path& path, const Image<T>& img) {
  if (img.channels() != 1 && img.channels() != 3) {
    throw DimensionError("write_pfm: need 1 or 3 channels");
  }
  detail::write(path, detail::to_mat(img, CV_32F, 1.0, false));
}

inline ImageF read_pfm(const std::filesystem::path& path) {
  const auto mat = detail::read(path);
  if (mat.depth() != CV_32F) throw IoError(path.string() + " is not a float image");
  return detail::from_mat(mat, path);
}

inline ImageD read_pfm_double(const std::filesystem::path& path) {
  const auto f = read_pfm(path);
  if (f.channels() != 1) throw DimensionError(path.string() + " must have one channel");
  return convert<double>(f);
}

/// 16-bit gray preview of a depth map, min-max normalised (near = bright
/// for disparity).
inline void write_depth_preview(const std::filesystem::path& path, const ImageD& depth) {
  double lo = INFINITY;
  double hi = -INFINITY;
  for (const double v : depth.data()) {
    if (std::isfinite(v)) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  ImageF preview(depth.width(), depth.height(), 1);
  const double span = hi > lo ? hi - lo : 1.0;
  for (std::size_t k = 0; k < preview.data().size(); ++k) {
    const double v = depth.data()[k];
    preview.data()[k] = std::isfinite(v) ? static_cast<float>((v - lo) / span) : 0.0f;
  }
  write_png16(path, preview);
}

}  // namespace panofuse::io
