// Copyright (C) 2026 The Panofuse Authors
// SPDX-License-Identifier: Apache-2.0

// panofuse: panorama generation, depth fusion and layered depth export.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error, invalid config
// or missing input file.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "panofuse/pipeline.hpp"

namespace {

namespace fs = std::filesystem;
using namespace panofuse;

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

/// Command-line values that override the config file when given.
struct Overrides {
  std::string config;
  std::optional<std::string> input;
  std::optional<int> input_x;
  std::optional<int> input_y;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<double> fov;
  std::optional<int> crops;
  std::optional<int> crop_size;
  std::optional<int> outer_iters;
  std::optional<int> steps;
  std::optional<double> second_term_weight;
  std::optional<std::string> prompt;
  std::optional<int> depth_iters;
  std::optional<int> segments;
  std::optional<int> anchor;
  std::optional<bool> monotone;
  std::optional<int> layers;
  std::optional<std::string> oracle_url;
  bool synthetic = false;
  bool remote = false;
};

template <typename T, typename U>
void set_if(const std::optional<T>& v, U& target) {
  if (v) target = static_cast<U>(*v);
}

PipelineConfig effective_config(const Overrides& o) {
  PipelineConfig cfg = o.config.empty() ? PipelineConfig{} : load_config(o.config);
  apply_environment(cfg);
  if (o.input) cfg.input = *o.input;
  set_if(o.input_x, cfg.input_x);
  set_if(o.input_y, cfg.input_y);
  if (o.out) cfg.output_dir = *o.out;
  set_if(o.seed, cfg.sampler.seed);
  set_if(o.threads, cfg.threads);
  set_if(o.fov, cfg.fov_deg);
  set_if(o.crops, cfg.crops);
  if (o.crop_size) cfg.crop_width = cfg.crop_height = *o.crop_size;
  set_if(o.outer_iters, cfg.sampler.outer_iters);
  set_if(o.steps, cfg.sampler.inner_steps);
  set_if(o.second_term_weight, cfg.sampler.second_term_weight);
  set_if(o.prompt, cfg.sampler.prompt);
  set_if(o.depth_iters, cfg.depth.iters);
  set_if(o.segments, cfg.depth.segments);
  set_if(o.anchor, cfg.depth.anchor_index);
  set_if(o.monotone, cfg.depth.monotone);
  set_if(o.layers, cfg.cluster.k);
  if (o.oracle_url) cfg.endpoint.base_url = *o.oracle_url;
  if (o.synthetic) cfg.synthetic = true;
  if (o.remote) cfg.synthetic = false;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Panoramic generation, depth fusion and layered depth export"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "panofuse 1.0.0");

  Overrides o;
  bool quiet = false;
  bool resume = false;
  std::optional<std::string> panorama;
  std::optional<std::string> depth;

  app.add_option("-c,--config", o.config, "TOML config file")->check(CLI::ExistingFile);
  app.add_option("-o,--out", o.out, "Output directory");
  app.add_option("--seed", o.seed, "Sampler seed");
  app.add_option("--threads", o.threads, "Worker threads (0 = all cores)");
  app.add_option("--fov", o.fov, "Crop field of view in degrees");
  app.add_option("--crops", o.crops, "Number of crops around the cylinder");
  app.add_option("--crop-size", o.crop_size, "Crop width and height in pixels");
  app.add_option("--oracle-url", o.oracle_url,
                 std::string("Oracle service URL (overrides ") + kOracleUrlEnv + ")");
  auto* synth = app.add_flag("--synthetic", o.synthetic, "Use in-process synthetic oracles");
  app.add_flag("--remote", o.remote, "Use the oracle service")->excludes(synth);
  app.add_flag("-q,--quiet", quiet, "No progress output");

  const auto add_pano_options = [&](CLI::App* cmd) {
    cmd->add_option("-i,--input", o.input, "Input RGB image");
    cmd->add_option("--x", o.input_x, "Input column on the canvas (default: centred)");
    cmd->add_option("--y", o.input_y, "Input row on the canvas (default: centred)");
    cmd->add_option("--outer-iters", o.outer_iters, "Outer iterations");
    cmd->add_option("--steps", o.steps, "Denoising steps per outer iteration");
    cmd->add_option("--second-term-weight", o.second_term_weight,
                    "Weight of the previous panorama in each step");
    cmd->add_option("--prompt", o.prompt, "Text prompt");
  };
  const auto add_depth_options = [&](CLI::App* cmd) {
    cmd->add_option("--depth-iters", o.depth_iters, "Alternating iterations");
    cmd->add_option("--segments", o.segments, "Piecewise-linear segments per patch");
    cmd->add_option("--anchor", o.anchor, "Patch whose map stays the identity");
    cmd->add_option("--monotone", o.monotone, "Constrain maps to be increasing");
  };
  const auto add_ldi_options = [&](CLI::App* cmd) {
    cmd->add_option("--layers", o.layers, "Number of depth layers");
  };

  auto* pano = app.add_subcommand("pano", "Generate the panorama");
  add_pano_options(pano);
  auto* depth_cmd = app.add_subcommand("depth", "Fuse per-crop depth into panoramic depth");
  depth_cmd->add_option("-p,--panorama", panorama, "Panorama (default: <out>/panorama.pfm)");
  add_depth_options(depth_cmd);
  auto* ldi = app.add_subcommand("ldi", "Build the layered depth image and Gaussian seeds");
  ldi->add_option("-p,--panorama", panorama, "Panorama (default: <out>/panorama.pfm)");
  ldi->add_option("-d,--depth", depth, "Depth PFM (default: <out>/depth.pfm)");
  add_ldi_options(ldi);
  auto* all = app.add_subcommand("all", "Run pano, depth and ldi");
  add_pano_options(all);
  add_depth_options(all);
  add_ldi_options(all);
  all->add_flag("--resume", resume, "Skip stages already completed with the same config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    const auto cfg = effective_config(o);
    RunOptions opts;
    opts.resume = resume;
    opts.log = quiet ? nullptr : &std::cerr;
    const OutputPaths out{cfg.output_dir};
    if (*pano) {
      cmd_pano(cfg, *make_denoiser(cfg), opts);
    } else if (*depth_cmd) {
      const fs::path p = panorama.value_or(out.panorama_pfm().string());
      if (!fs::is_regular_file(p)) throw MissingFileError("panorama not found: " + p.string());
      cmd_depth(cfg, p, *make_depth_oracle(cfg), opts);
    } else if (*ldi) {
      cmd_ldi(cfg, panorama.value_or(out.panorama_pfm().string()),
              depth.value_or(out.depth_pfm().string()), opts);
    } else {
      if (cfg.input.empty()) throw ConfigError("no input image configured");
      if (!fs::is_regular_file(cfg.input)) {
        throw MissingFileError("input file not found: " + cfg.input.string());
      }
      cmd_all(cfg, opts);
    }
    if (!quiet) std::cerr << "outputs in " << cfg.output_dir.string() << std::endl;
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "panofuse: configuration error: " << e.what() << std::endl;
    return kExitUsage;
  } catch (const MissingFileError& e) {
    std::cerr << "panofuse: " << e.what() << std::endl;
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "panofuse: error: " << e.what() << std::endl;
    return kExitFailure;
  }
}
