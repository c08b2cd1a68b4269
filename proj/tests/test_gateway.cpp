// Copyright (C) 2026 The Panofuse Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstring>
#include <string>

#include "panofuse/gateway.hpp"
#include "panofuse/synthetic.hpp"
#include "support/fixtures.hpp"
#include "support/mock_service.hpp"

namespace panofuse {
namespace {

using testing_support::MockOracleService;
using testing_support::small_ring;
using testing_support::smooth_canvas;
using testing_support::uniform_image;

constexpr int kSteps = 6;

OracleEndpoint endpoint(const MockOracleService& svc, double timeout_s = 5.0, int retries = 2) {
  OracleEndpoint ep;
  ep.base_url = svc.url();
  ep.timeout_s = timeout_s;
  ep.retries = retries;
  ep.mode = "synthetic";
  return ep;
}

bool bitwise_equal(const ImageF& a, const ImageF& b) {
  return a.same_shape(b) &&
         std::memcmp(a.data().data(), b.data().data(), a.data().size() * sizeof(float)) == 0;
}

DenoiseCondition condition_for(int w, int h, std::uint64_t key, int crop_index) {
  DenoiseCondition cond;
  cond.prompt = "mountain lake";
  cond.mask = Mask(w, h, 1);
  for (std::size_t k = 0; k < cond.mask.pixel_count(); ++k) {
    cond.mask.data()[k] = rng::uniform(key, k) < 0.5f;
  }
  cond.known = uniform_image(w, h, 3, key + 1);
  cond.crop_index = crop_index;
  return cond;
}

class GatewayTest : public ::testing::Test {
 protected:
  synthetic::PropagateDenoiser denoiser{kSteps, 2};
  synthetic::LumaDepthOracle depth = synthetic::LumaDepthOracle::distorted(8);
};

TEST_F(GatewayTest, HealthReportsSyntheticMode) {
  MockOracleService svc(denoiser, depth);
  const auto info = health(endpoint(svc));
  EXPECT_EQ(info.mode, "synthetic");
  EXPECT_EQ(info.steps, kSteps);
  EXPECT_EQ(info.max_crop_size, 1024);
  EXPECT_TRUE(info.models.contains("denoise"));
}

TEST_F(GatewayTest, HealthModeMismatchIsAConfigError) {
  MockOracleService svc(denoiser, depth);
  auto ep = endpoint(svc);
  ep.mode = "real";
  EXPECT_THROW(health(ep), ConfigError);
}

TEST(Gateway, UnreachableEndpointErrorNamesTheUrl) {
  OracleEndpoint ep;
  ep.base_url = "http://127.0.0.1:1";
  ep.timeout_s = 1.0;
  ep.retries = 1;
  try {
    health(ep);
    FAIL() << "unreachable endpoint accepted";
  } catch (const OracleError& e) {
    EXPECT_NE(std::string(e.what()).find("http://127.0.0.1:1"), std::string::npos) << e.what();
  }
}

TEST(Gateway, EndpointValidation) {
  OracleEndpoint ep;
  ep.retries = -1;
  EXPECT_THROW(ep.validate(), ConfigError);
  ep = {};
  ep.mode = "mock";
  EXPECT_THROW(ep.validate(), ConfigError);
  ep = {};
  ep.base_url = "ftp://host";
  EXPECT_THROW(ep.validate(), ConfigError);
  ep = {};
  ep.timeout_s = 0.0;
  EXPECT_THROW(ep.validate(), ConfigError);
}

TEST(Gateway, IdentityServiceEchoesTheState) {
  synthetic::IdentityDenoiser identity(kSteps);
  synthetic::ConstantDepthOracle constant(0.75f);
  MockOracleService svc(identity, constant);
  RemoteDenoiser remote(endpoint(svc), kSteps);
  const auto state = uniform_image(17, 9, 3, 4, -3.0f, 3.0f);
  const auto out = remote.denoise_step(state, 3, condition_for(17, 9, 5, 0), 11);
  EXPECT_TRUE(bitwise_equal(out, state));
}

TEST(Gateway, ConstantDepthServiceReturnsConstantDepth) {
  synthetic::IdentityDenoiser identity(kSteps);
  synthetic::ConstantDepthOracle constant(0.75f);
  MockOracleService svc(identity, constant);
  RemoteDepthOracle remote(endpoint(svc));
  const auto crop = ImageF(21, 11, 3, 0.4f);
  const auto d = remote.estimate(crop, 2);
  ASSERT_EQ(d.width(), 21);
  ASSERT_EQ(d.height(), 11);
  ASSERT_EQ(d.channels(), 1);
  for (const float v : d.data()) EXPECT_EQ(v, 0.75f);
}

TEST_F(GatewayTest, FiftySeededRequestsMatchInProcessOraclesBitwise) {
  MockOracleService svc(denoiser, depth);
  RemoteDenoiser remote(endpoint(svc), kSteps);
  RemoteDepthOracle remote_depth(endpoint(svc));
  for (int r = 0; r < 50; ++r) {
    const auto seed = rng::derive_key(2026, {static_cast<std::uint64_t>(r)});
    const int w = 8 + r % 7;
    const int h = 5 + r % 4;
    const int t = 1 + r % kSteps;
    const auto state = uniform_image(w, h, 3, seed, -2.0f, 2.0f);
    const auto cond = condition_for(w, h, seed ^ 0x55, r % 8);
    EXPECT_TRUE(bitwise_equal(remote.denoise_step(state, t, cond, seed),
                              denoiser.denoise_step(state, t, cond, seed)))
        << "denoise request " << r;
    EXPECT_TRUE(bitwise_equal(remote.renoise(state, t, seed), denoiser.renoise(state, t, seed)))
        << "renoise request " << r;
    EXPECT_TRUE(bitwise_equal(remote_depth.estimate(state, r % 8), depth.estimate(state, r % 8)))
        << "depth request " << r;
  }
}

TEST_F(GatewayTest, IdenticalRequestsGiveIdenticalBytes) {
  MockOracleService svc(denoiser, depth);
  GatewayClient client(endpoint(svc));
  wire::DenoiseRequest req;
  req.t = 4;
  req.seed = 99;
  req.crop_index = 1;
  req.state = wire::encode(uniform_image(9, 6, 3, 1));
  const auto cond = condition_for(9, 6, 2, 1);
  req.prompt = cond.prompt;
  req.mask = wire::encode(cond.mask);
  req.known = wire::encode(cond.known);
  EXPECT_EQ(client.denoise(req), client.denoise(req));
}

TEST_F(GatewayTest, OversizeCropIsA4xxProtocolError) {
  MockOracleService::Options opts;
  opts.max_crop_size = 16;
  MockOracleService svc(denoiser, depth, opts);
  RemoteDepthOracle remote(endpoint(svc));
  EXPECT_NO_THROW(remote.estimate(ImageF(16, 16, 3), 0));
  try {
    remote.estimate(ImageF(17, 8, 3), 0);
    FAIL() << "oversize crop accepted";
  } catch (const ProtocolError& e) {
    EXPECT_GE(e.status(), 400);
    EXPECT_LT(e.status(), 500);
  }
  EXPECT_EQ(svc.requests.load(), 2) << "4xx must not be retried";
}

TEST_F(GatewayTest, CorruptRequestsAreRejectedWith400) {
  MockOracleService svc(denoiser, depth);
  httplib::Client raw(svc.url());
  const auto post = [&](const std::string& body) {
    const auto res = raw.Post("/v1/depth", body, "application/json");
    return res ? res->status : -1;
  };
  EXPECT_EQ(post("not json"), 400);
  wire::DepthRequest req;
  req.request_id = "x";
  req.crop = wire::encode(uniform_image(4, 4, 3, 1));
  auto bad_crc = req;
  bad_crc.crop.crc ^= 1u;
  EXPECT_EQ(post(wire::to_json(bad_crc).dump()), 400);
  auto bad_shape = req;
  bad_shape.crop.shape = {4, 4, 2};
  EXPECT_EQ(post(wire::to_json(bad_shape).dump()), 400);
  auto no_seed = wire::to_json(req);
  no_seed.erase("seed");
  EXPECT_EQ(post(no_seed.dump()), 400);
  EXPECT_EQ(post(wire::to_json(req).dump()), 200);
}

TEST_F(GatewayTest, ChecksumFailureIsRetriedOnce) {
  MockOracleService svc(denoiser, depth);
  RemoteDepthOracle remote(endpoint(svc));
  const auto crop = uniform_image(6, 5, 3, 3);
  svc.corrupt_responses = 1;
  EXPECT_TRUE(bitwise_equal(remote.estimate(crop, 1), depth.estimate(crop, 1)));
  EXPECT_EQ(svc.requests.load(), 2);
  svc.corrupt_responses = 2;
  EXPECT_THROW(remote.estimate(crop, 1), ChecksumError);
  EXPECT_EQ(svc.requests.load(), 4);
}

TEST_F(GatewayTest, TimeoutIsRetriedThenFails) {
  MockOracleService svc(denoiser, depth);
  RemoteDepthOracle remote(endpoint(svc, 0.2, 2));
  const auto crop = uniform_image(6, 5, 3, 3);
  svc.delay_ms = 600;
  svc.delayed_responses = 1;
  EXPECT_TRUE(bitwise_equal(remote.estimate(crop, 0), depth.estimate(crop, 0)));
  EXPECT_EQ(remote.client().attempts(), 2u);
  svc.delayed_responses = 3;
  try {
    remote.estimate(crop, 0);
    FAIL() << "timeouts did not fail";
  } catch (const OracleError& e) {
    EXPECT_NE(std::string(e.what()).find(svc.url()), std::string::npos);
  }
  EXPECT_EQ(remote.client().attempts(), 5u);
}

TEST_F(GatewayTest, ServerErrorIsNotRetried) {
  MockOracleService svc(denoiser, depth);
  RemoteDepthOracle remote(endpoint(svc));
  svc.failing_responses = 1;
  EXPECT_THROW(remote.estimate(uniform_image(4, 4, 3, 1), 0), OracleError);
  EXPECT_EQ(svc.requests.load(), 1);
}

TEST_F(GatewayTest, MismatchedRequestIdIsRejected) {
  MockOracleService svc(denoiser, depth);
  RemoteDepthOracle remote(endpoint(svc));
  svc.mismatched_ids = 1;
  EXPECT_THROW(remote.estimate(uniform_image(4, 4, 3, 1), 0), ProtocolError);
}

TEST_F(GatewayTest, RemoteSamplerRunMatchesInProcessRun) {
  MockOracleService svc(denoiser, depth);
  RemoteDenoiser remote(endpoint(svc), kSteps);
  const auto& layout = small_ring();
  const Rect placement{40, 5, 20, 12};
  const auto input = crop_rect(smooth_canvas(100, 22, 3), placement);
  SamplerConfig cfg;
  cfg.outer_iters = 2;
  cfg.inner_steps = kSteps;
  cfg.seed = 17;
  cfg.threads = 4;
  const auto local = run(input, placement, denoiser, layout, cfg);
  const auto over_wire = run(input, placement, remote, layout, cfg);
  EXPECT_TRUE(bitwise_equal(over_wire.panorama, local.panorama));
}

TEST_F(GatewayTest, RemoteDepthFusionMatchesInProcessFusion) {
  MockOracleService svc(denoiser, depth);
  RemoteDepthOracle remote(endpoint(svc));
  const auto& layout = small_ring();
  const auto pano = smooth_canvas(layout.canvas_width, layout.canvas_height, 3);
  FusionConfig cfg;
  cfg.segments = 3;
  cfg.threads = 4;
  const auto local = fuse(pano, layout, depth, cfg);
  const auto over_wire = fuse(pano, layout, remote, cfg);
  EXPECT_EQ(over_wire.depth.depth, local.depth.depth);
  EXPECT_EQ(over_wire.objective, local.objective);
}

TEST_F(GatewayTest, FailedStepLeavesTheCanvasStateUntouched) {
  MockOracleService svc(denoiser, depth);
  RemoteDenoiser remote(endpoint(svc), kSteps);
  const auto& layout = small_ring();
  const Rect placement{40, 5, 20, 12};
  const auto input = crop_rect(smooth_canvas(100, 22, 3), placement);
  SamplerConfig cfg;
  cfg.outer_iters = 1;
  cfg.inner_steps = kSteps;
  cfg.seed = 3;
  const auto cond = make_condition(input, placement, layout);
  const auto state = make_initial_state(cond, denoiser, cfg, 0);
  const auto before = state;
  svc.failing_responses = 1;
  EXPECT_THROW(stage1_denoise(state, cond, remote, layout, cfg, 0), OracleError);
  EXPECT_TRUE(bitwise_equal(state.J, before.J));
  EXPECT_EQ(state.t, before.t);
  EXPECT_EQ(state.unknown, before.unknown);
}

}  // namespace
}  // namespace panofuse
