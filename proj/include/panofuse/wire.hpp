// Copyright (C) 2026 The Panofuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <openssl/evp.h>
#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "panofuse/error.hpp"
#include "panofuse/image.hpp"

// Oracle wire format (HTTP/1.1, JSON bodies).
//
//   tensor   = {"shape": [h, w, c], "dtype": "f32", "data": base64(f32 LE bytes),
//               "crc32": zlib crc32 of the raw bytes}
//   POST /v1/denoise  {"request_id", "op": "step" | "renoise", "t", "seed",
//                      "crop_index"?, "state": tensor,
//                      "condition"?: {"prompt", "mask": tensor, "known": tensor}}
//                     -> {"request_id", "tensor": tensor}
//   POST /v1/depth    {"request_id", "seed", "crop_index"?, "crop": tensor}
//                     -> {"request_id", "tensor": tensor}
//   GET  /v1/health   -> {"mode", "models": {...}, "max_crop_size", "steps"}
//   errors            -> 4xx/5xx with {"error": message}
//
// "condition" is required for op = "step"; masks travel as 0/1 f32 tensors.

namespace panofuse::wire {

using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "wire encoding assumes a little-endian host");

inline std::string base64_encode(const std::string& bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(bytes.data()),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

inline std::string base64_decode(const std::string& text) {
  if (text.size() % 4 != 0) throw ProtocolError("base64 payload length is not a multiple of 4", 400);
  std::string out(3 * (text.size() / 4), '\0');
  const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw ProtocolError("invalid base64 payload", 400);
  // EVP_DecodeBlock keeps the bytes produced by '=' padding.
  std::size_t pad = 0;
  if (!text.empty() && text.back() == '=') ++pad;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++pad;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

inline std::uint32_t crc32_of(const std::string& bytes) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

/// f32 tensor of extents (h, w, c) with its raw little-endian bytes.
struct TensorMessage {
  std::vector<std::int64_t> shape;
  std::string bytes;
  std::uint32_t crc = 0;

  friend bool operator==(const TensorMessage&, const TensorMessage&) = default;
};

inline TensorMessage encode(const ImageF& img) {
  TensorMessage m;
  m.shape = {img.height(), img.width(), img.channels()};
  m.bytes.resize(img.data().size() * sizeof(float));
  std::memcpy(m.bytes.data(), img.data().data(), m.bytes.size());
  m.crc = crc32_of(m.bytes);
  return m;
}

inline TensorMessage encode(const Mask& mask) {
  ImageF f(mask.width(), mask.height(), mask.channels());
  for (std::size_t k = 0; k < f.data().size(); ++k) f.data()[k] = mask.data()[k] ? 1.0f : 0.0f;
  return encode(f);
}

/// Validates extents, byte count and checksum, then rebuilds the image.
inline ImageF decode(const TensorMessage& m) {
  if (m.shape.size() != 3) throw ProtocolError("tensor must have rank 3 (h, w, c)", 400);
  std::size_t count = 1;
  for (const auto e : m.shape) {
    if (e < 1 || e > (1 << 16)) throw ProtocolError("tensor extent out of range", 400);
    count *= static_cast<std::size_t>(e);
  }
  if (m.bytes.size() != count * sizeof(float)) {
    throw ProtocolError("tensor byte length " + std::to_string(m.bytes.size()) +
                            " does not match shape (expected " +
                            std::to_string(count * sizeof(float)) + ")",
                        400);
  }
  if (crc32_of(m.bytes) != m.crc) throw ChecksumError("tensor checksum mismatch", 400);
  ImageF img(static_cast<int>(m.shape[1]), static_cast<int>(m.shape[0]),
             static_cast<int>(m.shape[2]));
  std::memcpy(img.data().data(), m.bytes.data(), m.bytes.size());
  return img;
}

inline Mask decode_mask(const TensorMessage& m) {
  const auto f = decode(m);
  Mask mask(f.width(), f.height(), f.channels());
  for (std::size_t k = 0; k < f.data().size(); ++k) {
    const float v = f.data()[k];
    if (v != 0.0f && v != 1.0f) throw ProtocolError("mask tensor must hold only 0 and 1", 400);
    mask.data()[k] = v == 1.0f;
  }
  return mask;
}

inline json to_json(const TensorMessage& m) {
  return json{{"shape", m.shape}, {"dtype", "f32"}, {"data", base64_encode(m.bytes)}, {"crc32", m.crc}};
}

namespace detail {

template <typename T>
T field(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) {
    throw ProtocolError(std::string("missing field '") + key + "'", 400);
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ProtocolError(std::string("field '") + key + "' has the wrong type", 400);
  }
}

}  // namespace detail

inline TensorMessage tensor_from_json(const json& j) {
  if (detail::field<std::string>(j, "dtype") != "f32") {
    throw ProtocolError("only dtype f32 is supported", 400);
  }
  TensorMessage m;
  m.shape = detail::field<std::vector<std::int64_t>>(j, "shape");
  m.bytes = base64_decode(detail::field<std::string>(j, "data"));
  m.crc = detail::field<std::uint32_t>(j, "crc32");
  return m;
}

struct DenoiseRequest {
  std::string request_id;
  std::string op = "step";  // "step" or "renoise"
  int t = 0;
  std::uint64_t seed = 0;
  std::optional<int> crop_index;
  TensorMessage state;
  // Condition (op == "step" only).
  std::string prompt;
  TensorMessage mask;
  TensorMessage known;
};

inline json to_json(const DenoiseRequest& r) {
  json j{{"request_id", r.request_id}, {"op", r.op},   {"t", r.t},
         {"seed", r.seed},             {"state", to_json(r.state)}};
  if (r.crop_index) j["crop_index"] = *r.crop_index;
  if (r.op == "step") {
    j["condition"] = {{"prompt", r.prompt}, {"mask", to_json(r.mask)}, {"known", to_json(r.known)}};
  }
  return j;
}

inline DenoiseRequest denoise_request_from_json(const json& j) {
  DenoiseRequest r;
  r.request_id = detail::field<std::string>(j, "request_id");
  r.op = detail::field<std::string>(j, "op");
  if (r.op != "step" && r.op != "renoise") throw ProtocolError("unknown op '" + r.op + "'", 400);
  r.t = detail::field<int>(j, "t");
  r.seed = detail::field<std::uint64_t>(j, "seed");
  if (j.contains("crop_index")) r.crop_index = detail::field<int>(j, "crop_index");
  r.state = tensor_from_json(detail::field<json>(j, "state"));
  if (r.op == "step") {
    const auto c = detail::field<json>(j, "condition");
    r.prompt = detail::field<std::string>(c, "prompt");
    r.mask = tensor_from_json(detail::field<json>(c, "mask"));
    r.known = tensor_from_json(detail::field<json>(c, "known"));
  }
  return r;
}

struct DepthRequest {
  std::string request_id;
  std::uint64_t seed = 0;
  std::optional<int> crop_index;
  TensorMessage crop;
};

inline json to_json(const DepthRequest& r) {
  json j{{"request_id", r.request_id}, {"seed", r.seed}, {"crop", to_json(r.crop)}};
  if (r.crop_index) j["crop_index"] = *r.crop_index;
  return j;
}

inline DepthRequest depth_request_from_json(const json& j) {
  DepthRequest r;
  r.request_id = detail::field<std::string>(j, "request_id");
  r.seed = detail::field<std::uint64_t>(j, "seed");
  if (j.contains("crop_index")) r.crop_index = detail::field<int>(j, "crop_index");
  r.crop = tensor_from_json(detail::field<json>(j, "crop"));
  return r;
}

struct TensorResponse {
  std::string request_id;
  TensorMessage tensor;
};

inline json to_json(const TensorResponse& r) {
  return json{{"request_id", r.request_id}, {"tensor", to_json(r.tensor)}};
}

inline TensorResponse tensor_response_from_json(const json& j) {
  return {detail::field<std::string>(j, "request_id"),
          tensor_from_json(detail::field<json>(j, "tensor"))};
}

struct HealthInfo {
  std::string mode;
  json models = json::object();
  int max_crop_size = 0;
  int steps = 0;
};

inline json to_json(const HealthInfo& h) {
  return json{{"mode", h.mode}, {"models", h.models}, {"max_crop_size", h.max_crop_size},
              {"steps", h.steps}};
}

inline HealthInfo health_from_json(const json& j) {
  HealthInfo h;
  h.mode = detail::field<std::string>(j, "mode");
  h.models = j.contains("models") ? j.at("models") : json::object();
  h.max_crop_size = detail::field<int>(j, "max_crop_size");
  h.steps = j.contains("steps") ? detail::field<int>(j, "steps") : 0;
  return h;
}

/// Parses a JSON body, mapping syntax errors to a 400 protocol error.
inline json parse_body(const std::string& body) {
  try {
    return json::parse(body);
  } catch (const json::parse_error& e) {
    throw ProtocolError(std::string("malformed JSON body: ") + e.what(), 400);
  }
}

}  // namespace panofuse::wire
