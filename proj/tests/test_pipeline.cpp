// Copyright (C) 2026 The Panofuse Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <chrono>
#include <cstring>
#include <string>
#include <vector>

#include "panofuse/pipeline.hpp"
#include "support/mock_service.hpp"
#include "support/workspace.hpp"

namespace panofuse {
namespace {

namespace fs = std::filesystem;
using testing_support::file_bytes;
using testing_support::MockOracleService;
using testing_support::TempDir;
using testing_support::tiny_config;

bool bitwise_equal(const ImageF& a, const ImageF& b) {
  return a.same_shape(b) &&
         std::memcmp(a.data().data(), b.data().data(), a.data().size() * sizeof(float)) == 0;
}

std::vector<fs::path> output_files(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), dir));
  }
  std::sort(files.begin(), files.end());
  return files;
}

wire::json read_json(const fs::path& p) { return wire::json::parse(file_bytes(p)); }

/// Object keys at every level, with array elements collapsed.
std::string schema(const wire::json& j) {
  if (j.is_object()) {
    std::string s = "{";
    for (const auto& [k, v] : j.items()) s += k + ":" + schema(v) + ",";
    return s + "}";
  }
  if (j.is_array()) return j.empty() ? "[]" : "[" + schema(j.front()) + "]";
  return j.type_name();
}

class PipelineTest : public ::testing::Test {
 protected:
  TempDir dir{"pipeline"};
  PipelineConfig cfg = tiny_config(dir.path());
  OutputPaths out{cfg.output_dir};
};

TEST_F(PipelineTest, PanoWritesOutputsAndPreservesTheInputExactly) {
  const auto oracle = make_denoiser(cfg);
  const auto result = cmd_pano(cfg, *oracle);
  for (const auto& p : {out.panorama_png(), out.panorama_pfm(), out.pano_diagnostics(),
                        out.effective_config()}) {
    EXPECT_TRUE(fs::is_regular_file(p)) << p;
  }
  const auto pano = io::read_pfm(out.panorama_pfm());
  EXPECT_TRUE(bitwise_equal(pano, result.panorama));
  const auto input = io::read_image(cfg.input);
  const auto layout = make_layout(cfg);
  const auto rect = input_placement(cfg, layout, input.width(), input.height());
  EXPECT_TRUE(bitwise_equal(crop_rect(pano, rect), input));
  const auto diag = read_json(out.pano_diagnostics());
  ASSERT_EQ(diag["iterations"].size(), 3u);
  EXPECT_EQ(diag["canvas"]["width"], layout.canvas_width);
  EXPECT_TRUE(diag["iterations"][0]["seam"].contains("ratio"));
}

TEST_F(PipelineTest, OneOuterIterationEqualsTheMultiDiffusionBaseline) {
  cfg.sampler.outer_iters = 1;
  const auto oracle = make_denoiser(cfg);
  const auto result = cmd_pano(cfg, *oracle);
  const auto input = io::read_image(cfg.input);
  const auto layout = make_layout(cfg);
  const auto rect = input_placement(cfg, layout, input.width(), input.height());
  const auto baseline = multidiffusion(input, rect, *oracle, layout, sampler_config(cfg));
  EXPECT_TRUE(bitwise_equal(result.panorama, baseline));
}

TEST_F(PipelineTest, PlacementMustFitTheCanvas) {
  cfg.input_x = 90;
  const auto oracle = make_denoiser(cfg);
  EXPECT_THROW(cmd_pano(cfg, *oracle), ConfigError);
}

TEST_F(PipelineTest, ConsistentDepthOracleReportsZeroObjective) {
  cmd_pano(cfg, *make_denoiser(cfg));
  cfg.synthetic_depth = "luma";
  const auto result = cmd_depth(cfg, out.panorama_pfm(), *make_depth_oracle(cfg));
  const auto theta = read_json(out.theta_json());
  for (const auto& v : theta["objective"]) EXPECT_LE(v.get<double>(), 1e-20);
  EXPECT_EQ(result.objective.size(), 2u * cfg.depth.iters + 1);
}

TEST_F(PipelineTest, DistortedDepthOracleLowersTheObjective) {
  cmd_pano(cfg, *make_denoiser(cfg));
  cmd_depth(cfg, out.panorama_pfm(), *make_depth_oracle(cfg));
  const auto objective = read_json(out.theta_json())["objective"].get<std::vector<double>>();
  ASSERT_FALSE(objective.empty());
  EXPECT_LT(objective.back(), objective.front());
  for (std::size_t k = 1; k < objective.size(); ++k) {
    EXPECT_LE(objective[k], objective[k - 1] * (1.0 + 1e-9)) << "half-step " << k;
  }
  const auto depth = io::read_pfm(out.depth_pfm());
  EXPECT_EQ(depth.channels(), 1);
  EXPECT_TRUE(all_finite(depth));
  EXPECT_TRUE(fs::is_regular_file(out.depth_preview()));
}

TEST_F(PipelineTest, ThetaHasOneEntryPerPatchWithKSegments) {
  cmd_pano(cfg, *make_denoiser(cfg));
  cmd_depth(cfg, out.panorama_pfm(), *make_depth_oracle(cfg));
  const auto theta = read_json(out.theta_json());
  ASSERT_EQ(theta["patches"].size(), static_cast<std::size_t>(cfg.crops));
  for (const auto& p : theta["patches"]) {
    EXPECT_EQ(p["scales"].size(), static_cast<std::size_t>(cfg.depth.segments));
    EXPECT_EQ(p["shifts"].size(), static_cast<std::size_t>(cfg.depth.segments));
    EXPECT_EQ(p["knots"].size(), static_cast<std::size_t>(cfg.depth.segments) + 1);
  }
  EXPECT_EQ(theta["anchor"], cfg.depth.anchor_index);
}

TEST_F(PipelineTest, DepthRejectsAPanoramaOfTheWrongSize) {
  io::write_pfm(dir / "small.pfm", ImageF(10, 10, 3, 0.5f));
  EXPECT_THROW(cmd_depth(cfg, dir / "small.pfm", *make_depth_oracle(cfg)), DimensionError);
}

TEST_F(PipelineTest, LdiSeedCountMatchesOccupiedPlusFilledPixels) {
  cmd_all(cfg);
  const auto summary = read_json(out.ldi_json());
  ASSERT_EQ(summary["layers"].size(), 4u);
  std::size_t pixels = 0;
  for (const auto& l : summary["layers"]) {
    pixels += l["occupied"].get<std::size_t>() + l["filled"].get<std::size_t>();
  }
  const auto seeds = import_ply(out.seeds_ply());
  EXPECT_EQ(seeds.size() + summary["skipped"].get<std::size_t>(), pixels);
  EXPECT_EQ(seeds.size(), summary["seeds"].get<std::size_t>());
  for (const auto& s : seeds) {
    EXPECT_EQ(s.opacity, 0.5f);
    EXPECT_EQ(s.rotation, (std::array<float, 4>{1.0f, 0.0f, 0.0f, 0.0f}));
  }
  for (int k = 0; k < 4; ++k) {
    EXPECT_TRUE(fs::is_regular_file(out.layer_color(k)));
    EXPECT_TRUE(fs::is_regular_file(out.layer_mask(k)));
  }
}

TEST_F(PipelineTest, LdiMasksPartitionTheCanvas) {
  cmd_all(cfg);
  const auto layout = make_layout(cfg);
  Mask sum(layout.canvas_width, layout.canvas_height, 1);
  for (int k = 0; k < 4; ++k) {
    const auto m = io::read_mask_png(out.layer_mask(k));
    ASSERT_TRUE(m.same_shape(sum));
    for (std::size_t i = 0; i < m.data().size(); ++i) sum.data()[i] += m.data()[i];
  }
  for (const auto v : sum.data()) ASSERT_EQ(v, 1);
}

TEST_F(PipelineTest, LdiRerunIsBitIdentical) {
  cmd_all(cfg);
  const auto ply = file_bytes(out.seeds_ply());
  const auto color = file_bytes(out.layer_color(0));
  const auto json = file_bytes(out.ldi_json());
  cmd_ldi(cfg, out.panorama_pfm(), out.depth_pfm());
  EXPECT_EQ(file_bytes(out.seeds_ply()), ply);
  EXPECT_EQ(file_bytes(out.layer_color(0)), color);
  EXPECT_EQ(file_bytes(out.ldi_json()), json);
}

TEST_F(PipelineTest, LdiRejectsDepthOfTheWrongSize) {
  cmd_pano(cfg, *make_denoiser(cfg));
  io::write_pfm(dir / "d.pfm", ImageF(5, 5, 1, 1.0f));
  EXPECT_THROW(cmd_ldi(cfg, out.panorama_pfm(), dir / "d.pfm"), DimensionError);
}

TEST_F(PipelineTest, FullRunIsDeterministic) {
  cmd_all(cfg);
  auto other = cfg;
  other.output_dir = dir / "again";
  other.threads = 3;
  cmd_all(other);
  const OutputPaths b{other.output_dir};
  EXPECT_EQ(file_bytes(out.panorama_pfm()), file_bytes(b.panorama_pfm()));
  EXPECT_EQ(file_bytes(out.depth_pfm()), file_bytes(b.depth_pfm()));
  EXPECT_EQ(file_bytes(out.seeds_ply()), file_bytes(b.seeds_ply()));
  EXPECT_EQ(file_bytes(out.theta_json()), file_bytes(b.theta_json()));
}

TEST_F(PipelineTest, DifferentSeedGivesDifferentPanoramaWithTheSameSchemas) {
  cmd_all(cfg);
  auto other = cfg;
  other.output_dir = dir / "seed2";
  other.sampler.seed = cfg.sampler.seed + 1;
  cmd_all(other);
  const OutputPaths b{other.output_dir};
  EXPECT_NE(file_bytes(out.panorama_pfm()), file_bytes(b.panorama_pfm()));
  EXPECT_EQ(output_files(out.dir), output_files(b.dir));
  for (const auto& f : {out.pano_diagnostics(), out.theta_json(), out.ldi_json()}) {
    const auto rel = fs::relative(f, out.dir);
    EXPECT_EQ(schema(read_json(f)), schema(read_json(b.dir / rel))) << rel;
  }
}

TEST_F(PipelineTest, EffectiveConfigReproducesTheRun) {
  cmd_all(cfg);
  const auto pano = file_bytes(out.panorama_pfm());
  const auto ply = file_bytes(out.seeds_ply());
  const auto replay = load_config(out.effective_config());
  EXPECT_EQ(to_toml(replay), to_toml(cfg));
  cmd_all(replay);
  EXPECT_EQ(file_bytes(out.panorama_pfm()), pano);
  EXPECT_EQ(file_bytes(out.seeds_ply()), ply);
}

TEST_F(PipelineTest, ResumeSkipsCompletedStages) {
  cmd_all(cfg);
  const auto pano_time = fs::last_write_time(out.panorama_pfm());
  const auto depth_bytes = file_bytes(out.depth_pfm());
  fs::remove(out.seeds_ply());
  RunOptions opts;
  opts.resume = true;
  cmd_all(cfg, opts);
  EXPECT_EQ(fs::last_write_time(out.panorama_pfm()), pano_time);
  EXPECT_EQ(file_bytes(out.depth_pfm()), depth_bytes);
  EXPECT_TRUE(fs::is_regular_file(out.seeds_ply()));
}

TEST_F(PipelineTest, ResumeRerunsStagesAfterAConfigChange) {
  cmd_all(cfg);
  const auto pano = file_bytes(out.panorama_pfm());
  auto changed = cfg;
  changed.sampler.seed += 10;
  RunOptions opts;
  opts.resume = true;
  cmd_all(changed, opts);
  EXPECT_NE(file_bytes(out.panorama_pfm()), pano);
}

/// Fails on every call; used to interrupt the pipeline in the depth stage.
class FailingDepthOracle final : public DepthOracle {
 public:
  ImageF estimate(const ImageF&, int crop_index) const override {
    throw OracleError("depth model crashed on crop " + std::to_string(crop_index));
  }
};

TEST_F(PipelineTest, FailureStopsThePipelineAndKeepsCompletedOutputs) {
  FailingDepthOracle failing;
  const auto denoiser = make_denoiser(cfg);
  EXPECT_THROW(cmd_all(cfg, {}, denoiser.get(), &failing), OracleError);
  EXPECT_TRUE(fs::is_regular_file(out.panorama_pfm()));
  EXPECT_TRUE(fs::is_regular_file(out.marker("pano")));
  EXPECT_FALSE(fs::exists(out.marker("depth")));
  EXPECT_FALSE(fs::exists(out.seeds_ply()));
  const auto pano_time = fs::last_write_time(out.panorama_pfm());

  RunOptions opts;
  opts.resume = true;
  cmd_all(cfg, opts);
  EXPECT_EQ(fs::last_write_time(out.panorama_pfm()), pano_time);
  EXPECT_TRUE(fs::is_regular_file(out.seeds_ply()));
}

TEST_F(PipelineTest, RemoteOraclesReproduceTheSyntheticRun) {
  cmd_all(cfg);
  const auto denoiser = make_denoiser(cfg);
  const auto depth = make_depth_oracle(cfg);
  MockOracleService svc(*denoiser, *depth);
  auto remote = cfg;
  remote.synthetic = false;
  remote.endpoint.base_url = svc.url();
  remote.output_dir = dir / "remote";
  cmd_all(remote);
  const OutputPaths b{remote.output_dir};
  EXPECT_EQ(file_bytes(b.panorama_pfm()), file_bytes(out.panorama_pfm()));
  EXPECT_EQ(file_bytes(b.depth_pfm()), file_bytes(out.depth_pfm()));
  EXPECT_EQ(file_bytes(b.seeds_ply()), file_bytes(out.seeds_ply()));
}

TEST_F(PipelineTest, RemoteStepCountMismatchIsAConfigError) {
  synthetic::PropagateDenoiser other(cfg.sampler.inner_steps + 1, 2);
  synthetic::ConstantDepthOracle depth(1.0f);
  MockOracleService svc(other, depth);
  cfg.synthetic = false;
  cfg.endpoint.base_url = svc.url();
  EXPECT_THROW(make_denoiser(cfg), ConfigError);
}

TEST_F(PipelineTest, SmokeRunFinishesQuickly) {
  const auto start = std::chrono::steady_clock::now();
  cmd_all(cfg);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_LT(seconds, 60.0);
}

}  // namespace
}  // namespace panofuse
