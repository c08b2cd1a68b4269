// Copyright (C) 2026 The Panofuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <string>

#include "panofuse/depthfusion.hpp"
#include "panofuse/error.hpp"
#include "panofuse/sampler.hpp"
#include "panofuse/wire.hpp"

// After the Eigen-based headers: <resolv.h> (via httplib) defines _res.
#include <httplib.h>

namespace panofuse {

struct OracleEndpoint {
  std::string base_url = "http://127.0.0.1:8765";
  double timeout_s = 60.0;
  /// Extra attempts after a timeout or connection failure.
  int retries = 2;
  std::string mode = "synthetic";  // "real" or "synthetic"

  void validate() const {
    if (retries < 0) throw ConfigError("oracle retries must be >= 0");
    if (!(timeout_s > 0.0)) throw ConfigError("oracle timeout must be > 0");
    if (mode != "real" && mode != "synthetic") {
      throw ConfigError("oracle mode must be 'real' or 'synthetic', got '" + mode + "'");
    }
    if (base_url.rfind("http://", 0) != 0) {
      throw ConfigError("oracle URL must start with http://, got '" + base_url + "'");
    }
  }
};

/// HTTP transport with the oracle retry policy:
///   timeout / connection failure -> retry up to `retries` times, then fail;
///   4xx                          -> ProtocolError, never retried;
///   5xx                          -> OracleError, never retried;
///   response checksum mismatch   -> retried once, then ChecksumError.
/// Safe to use from several threads; each call opens its own connection.
class GatewayClient {
 public:
  explicit GatewayClient(OracleEndpoint ep) : ep_(std::move(ep)) { ep_.validate(); }

  const OracleEndpoint& endpoint() const noexcept { return ep_; }

  wire::HealthInfo health() const {
    return wire::health_from_json(request("GET", "/v1/health", ""));
  }

  wire::TensorMessage denoise(wire::DenoiseRequest req) const {
    req.request_id = next_id("denoise");
    return tensor_call("/v1/denoise", wire::to_json(req).dump(), req.request_id);
  }

  wire::TensorMessage depth(wire::DepthRequest req) const {
    req.request_id = next_id("depth");
    return tensor_call("/v1/depth", wire::to_json(req).dump(), req.request_id);
  }

  /// Total HTTP attempts made (retries included).
  std::uint64_t attempts() const noexcept { return attempts_.load(); }

 private:
  std::string next_id(const char* kind) const {
    return std::string(kind) + "-" + std::to_string(counter_.fetch_add(1));
  }

  wire::TensorMessage tensor_call(const std::string& path, const std::string& body,
                                  const std::string& id) const {
    for (int attempt = 0;; ++attempt) {
      const auto resp = wire::tensor_response_from_json(request("POST", path, body));
      if (resp.request_id != id) {
        throw ProtocolError("response request_id '" + resp.request_id + "' does not match '" +
                            id + "'");
      }
      try {
        wire::decode(resp.tensor);
        return resp.tensor;
      } catch (const ChecksumError&) {
        if (attempt >= 1) {
          throw ChecksumError("response checksum mismatch from " + ep_.base_url + path +
                              " after retry");
        }
      }
    }
  }

  wire::json request(const std::string& method, const std::string& path,
                     const std::string& body) const {
    const auto timeout = std::chrono::duration<double>(ep_.timeout_s);
    const auto timeout_us = std::chrono::duration_cast<std::chrono::microseconds>(timeout);
    std::string last_error;
    for (int attempt = 0; attempt <= ep_.retries; ++attempt) {
      ++attempts_;
      httplib::Client client(ep_.base_url);
      client.set_connection_timeout(timeout_us);
      client.set_read_timeout(timeout_us);
      client.set_write_timeout(timeout_us);
      const auto res = method == "GET" ? client.Get(path)
                                       : client.Post(path, body, "application/json");
      if (!res) {
        last_error = httplib::to_string(res.error());
        continue;
      }
      if (res->status >= 400) {
        std::string message = res->body;
        try {
          message = wire::parse_body(res->body).value("error", res->body);
        } catch (const ProtocolError&) {
        }
        const std::string what = ep_.base_url + path + " returned " +
                                 std::to_string(res->status) + ": " + message;
        if (res->status < 500) throw ProtocolError(what, res->status);
        throw OracleError(what);
      }
      return wire::parse_body(res->body);
    }
    throw OracleError("oracle at " + ep_.base_url + path + " unreachable after " +
                      std::to_string(ep_.retries + 1) + " attempt(s): " + last_error);
  }

  OracleEndpoint ep_;
  mutable std::atomic<std::uint64_t> counter_{0};
  mutable std::atomic<std::uint64_t> attempts_{0};
};

/// Checks that the service answers and reports the expected mode.
inline wire::HealthInfo health(const OracleEndpoint& ep) {
  GatewayClient client(ep);
  wire::HealthInfo info;
  try {
    info = client.health();
  } catch (const Error& e) {
    throw OracleError("oracle service at " + ep.base_url + " failed the health check: " +
                      e.what());
  }
  if (info.mode != ep.mode) {
    throw ConfigError("oracle service at " + ep.base_url + " runs in '" + info.mode +
                      "' mode, expected '" + ep.mode + "'");
  }
  return info;
}

namespace detail {

inline void expect_shape(const ImageF& img, int w, int h, int c, const char* what) {
  if (img.width() != w || img.height() != h || img.channels() != c) {
    throw ProtocolError(std::string(what) + " response has shape (" + std::to_string(img.height()) +
                        ", " + std::to_string(img.width()) + ", " +
                        std::to_string(img.channels()) + "), expected (" + std::to_string(h) +
                        ", " + std::to_string(w) + ", " + std::to_string(c) + ")");
  }
}

}  // namespace detail

/// DenoiserOracle served over the wire.
class RemoteDenoiser final : public DenoiserOracle {
 public:
  RemoteDenoiser(OracleEndpoint ep, int steps) : client_(std::move(ep)), steps_(steps) {
    if (steps < 1) throw ConfigError("remote denoiser needs >= 1 step");
  }

  int steps() const override { return steps_; }

  ImageF denoise_step(const ImageF& state, int t, const DenoiseCondition& cond,
                      std::uint64_t seed) const override {
    if (t < 1) throw ConfigError("remote denoise requires t >= 1");
    if (!cond.mask.same_extent(state) || !cond.known.same_shape(state)) {
      throw DimensionError("remote denoise: condition does not match the state");
    }
    wire::DenoiseRequest req;
    req.op = "step";
    req.t = t;
    req.seed = seed;
    if (cond.crop_index >= 0) req.crop_index = cond.crop_index;
    req.state = wire::encode(state);
    req.prompt = cond.prompt;
    req.mask = wire::encode(cond.mask);
    req.known = wire::encode(cond.known);
    auto out = wire::decode(client_.denoise(std::move(req)));
    detail::expect_shape(out, state.width(), state.height(), state.channels(), "denoise");
    return out;
  }

  ImageF renoise(const ImageF& clean, int t, std::uint64_t seed) const override {
    wire::DenoiseRequest req;
    req.op = "renoise";
    req.t = t;
    req.seed = seed;
    req.state = wire::encode(clean);
    auto out = wire::decode(client_.denoise(std::move(req)));
    detail::expect_shape(out, clean.width(), clean.height(), clean.channels(), "renoise");
    return out;
  }

  const GatewayClient& client() const noexcept { return client_; }

 private:
  GatewayClient client_;
  int steps_;
};

/// DepthOracle served over the wire.
class RemoteDepthOracle final : public DepthOracle {
 public:
  explicit RemoteDepthOracle(OracleEndpoint ep, std::uint64_t seed = 0)
      : client_(std::move(ep)), seed_(seed) {}

  ImageF estimate(const ImageF& crop, int crop_index) const override {
    wire::DepthRequest req;
    req.seed = seed_;
    if (crop_index >= 0) req.crop_index = crop_index;
    req.crop = wire::encode(crop);
    auto out = wire::decode(client_.depth(std::move(req)));
    detail::expect_shape(out, crop.width(), crop.height(), 1, "depth");
    return out;
  }

  const GatewayClient& client() const noexcept { return client_; }

 private:
  GatewayClient client_;
  std::uint64_t seed_;
};

}  // namespace panofuse
