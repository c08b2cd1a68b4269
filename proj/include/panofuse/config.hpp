// Copyright (C) 2026 The Panofuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include <toml.hpp>

#include "panofuse/depthfusion.hpp"
#include "panofuse/error.hpp"
#include "panofuse/gateway.hpp"
#include "panofuse/ldi.hpp"
#include "panofuse/sampler.hpp"

namespace panofuse {

/// Everything one pipeline run depends on. Relative paths in a config file
/// are resolved against the file's directory.
struct PipelineConfig {
  std::filesystem::path input;
  /// Top-left corner of the input on the canvas; centred when unset.
  std::optional<int> input_x;
  std::optional<int> input_y;
  std::filesystem::path output_dir = "panofuse_out";

  double fov_deg = 45.0;
  int crops = 16;
  int crop_width = 512;
  int crop_height = 512;
  /// Worker threads for every stage (0 = hardware concurrency).
  int threads = 0;

  SamplerConfig sampler;
  FusionConfig depth;
  ClusterConfig cluster;
  FillConfig fill;

  /// In-process synthetic oracles instead of the HTTP service.
  bool synthetic = true;
  OracleEndpoint endpoint;
  std::string synthetic_denoiser = "propagate";  // propagate | identity
  int propagate_radius = 4;
  std::string synthetic_depth = "luma";  // luma | luma_distorted | constant

  void validate() const {
    if (!(fov_deg > 0.0 && fov_deg < 180.0)) throw ConfigError("layout.fov_deg must be in (0, 180)");
    if (crops < 1) throw ConfigError("layout.crops must be >= 1");
    if (crop_width < 2 || crop_height < 2) throw ConfigError("layout crop size must be >= 2");
    if (threads < 0) throw ConfigError("threads must be >= 0");
    sampler.validate();
    depth.validate(crops);
    cluster.validate();
    if (fill.band_width < 0) throw ConfigError("ldi.fill_band must be >= 0");
    endpoint.validate();
    if (synthetic_denoiser != "propagate" && synthetic_denoiser != "identity") {
      throw ConfigError("oracle.denoiser must be 'propagate' or 'identity', got '" +
                        synthetic_denoiser + "'");
    }
    if (propagate_radius < 1) throw ConfigError("oracle.radius must be >= 1");
    if (synthetic_depth != "luma" && synthetic_depth != "luma_distorted" &&
        synthetic_depth != "constant") {
      throw ConfigError("oracle.depth must be 'luma', 'luma_distorted' or 'constant', got '" +
                        synthetic_depth + "'");
    }
  }
};

namespace detail {

/// Reads typed keys from a TOML table and rejects keys nobody asked for.
class TomlSection {
 public:
  TomlSection(const toml::table* table, std::string name) : table_(table), name_(std::move(name)) {}

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!table_) return;
    const auto* node = table_->get(key);
    if (!node) return;
    if constexpr (std::is_same_v<T, bool>) {
      const auto v = node->value_exact<bool>();
      if (!v) fail(key, "a boolean");
      out = *v;
    } else if constexpr (std::is_integral_v<T>) {
      const auto v = node->value_exact<std::int64_t>();
      if (!v) fail(key, "an integer");
      if (*v < 0 && std::is_unsigned_v<T>) fail(key, "a non-negative integer");
      if constexpr (!std::is_unsigned_v<T>) {
        if (*v < std::numeric_limits<T>::min() || *v > std::numeric_limits<T>::max()) {
          fail(key, "an integer in range");
        }
      }
      out = static_cast<T>(*v);
    } else if constexpr (std::is_floating_point_v<T>) {
      const auto v = node->value<double>();  // integers are accepted as floats
      if (!v) fail(key, "a number");
      out = static_cast<T>(*v);
    } else if constexpr (std::is_same_v<T, std::string>) {
      const auto v = node->value_exact<std::string>();
      if (!v) fail(key, "a string");
      out = *v;
    } else {
      static_assert(sizeof(T) == 0, "unsupported config value type");
    }
  }

  template <typename T>
  void read(const char* key, std::optional<T>& out) {
    seen_.insert(key);
    if (!table_ || !table_->get(key)) return;
    T v{};
    read(key, v);
    out = v;
  }

  /// Sub-table `key` (absent tables read as empty).
  TomlSection section(const char* key) {
    seen_.insert(key);
    const toml::table* sub = nullptr;
    if (table_) {
      if (const auto* node = table_->get(key)) {
        sub = node->as_table();
        if (!sub) throw ConfigError("config key '" + prefix() + key + "' must be a table");
      }
    }
    return TomlSection(sub, prefix() + key);
  }

  void finish() const {
    if (!table_) return;
    for (const auto& [k, v] : *table_) {
      if (!seen_.count(std::string(k.str()))) {
        throw ConfigError("unknown config key '" + prefix() + std::string(k.str()) + "'");
      }
    }
  }

 private:
  std::string prefix() const { return name_.empty() ? "" : name_ + "."; }

  [[noreturn]] void fail(const char* key, const char* what) const {
    throw ConfigError("config key '" + prefix() + key + "' must be " + what);
  }

  const toml::table* table_;
  std::string name_;
  std::set<std::string> seen_;
};

inline std::filesystem::path resolve(const std::filesystem::path& p,
                                     const std::filesystem::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return (base / p).lexically_normal();
}

}  // namespace detail

/// Parses TOML text; relative paths are taken relative to `base_dir`.
inline PipelineConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {},
                                   const std::string& source = "config") {
  toml::table root;
  try {
    root = toml::parse(text, source);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << source << ": " << e.description() << " (line " << e.source().begin.line << ")";
    throw ConfigError(msg.str());
  }
  PipelineConfig c;
  detail::TomlSection top(&root, "");
  top.read("threads", c.threads);

  std::string path;
  auto input = top.section("input");
  input.read("image", path);
  c.input = detail::resolve(path, base_dir);
  input.read("x", c.input_x);
  input.read("y", c.input_y);
  input.finish();

  auto output = top.section("output");
  path = c.output_dir.string();
  output.read("dir", path);
  c.output_dir = detail::resolve(path, base_dir);
  output.finish();

  auto layout = top.section("layout");
  layout.read("fov_deg", c.fov_deg);
  layout.read("crops", c.crops);
  layout.read("crop_width", c.crop_width);
  layout.read("crop_height", c.crop_height);
  layout.finish();

  auto sampler = top.section("sampler");
  sampler.read("outer_iters", c.sampler.outer_iters);
  sampler.read("inner_steps", c.sampler.inner_steps);
  sampler.read("seed", c.sampler.seed);
  sampler.read("second_term_weight", c.sampler.second_term_weight);
  sampler.read("prompt", c.sampler.prompt);
  sampler.read("early_stop", c.sampler.early_stop);
  sampler.read("early_stop_rmse", c.sampler.early_stop_rmse);
  sampler.finish();

  auto depth = top.section("depth");
  depth.read("iters", c.depth.iters);
  depth.read("segments", c.depth.segments);
  depth.read("anchor", c.depth.anchor_index);
  depth.read("monotone", c.depth.monotone);
  depth.read("min_slope", c.depth.min_slope);
  depth.finish();

  auto ldi = top.section("ldi");
  ldi.read("layers", c.cluster.k);
  ldi.read("bins", c.cluster.bins);
  ldi.read("min_cluster_frac", c.cluster.min_cluster_frac);
  ldi.read("fill_band", c.fill.band_width);
  ldi.read("fill_tolerance", c.fill.tolerance);
  ldi.read("fill_max_sweeps", c.fill.max_sweeps);
  ldi.finish();

  auto oracle = top.section("oracle");
  oracle.read("synthetic", c.synthetic);
  oracle.read("url", c.endpoint.base_url);
  oracle.read("mode", c.endpoint.mode);
  oracle.read("timeout", c.endpoint.timeout_s);
  oracle.read("retries", c.endpoint.retries);
  oracle.read("denoiser", c.synthetic_denoiser);
  oracle.read("radius", c.propagate_radius);
  oracle.read("depth", c.synthetic_depth);
  oracle.finish();

  top.finish();
  return c;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) {
    throw MissingFileError("config file not found: " + path.string());
  }
  std::ifstream in(path);
  std::stringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), std::filesystem::absolute(path).parent_path(), path.string());
}

/// TOML that parses back to exactly `c` (paths made absolute).
inline std::string to_toml(const PipelineConfig& c) {
  const auto abs = [](const std::filesystem::path& p) {
    return p.empty() ? std::string() : std::filesystem::absolute(p).lexically_normal().string();
  };
  toml::table input{{"image", abs(c.input)}};
  if (c.input_x) input.insert("x", *c.input_x);
  if (c.input_y) input.insert("y", *c.input_y);
  if (c.sampler.seed > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) {
    throw ConfigError("sampler.seed must be < 2^63 to be written to TOML");
  }
  toml::table root{
      {"threads", c.threads},
      {"input", std::move(input)},
      {"output", toml::table{{"dir", abs(c.output_dir)}}},
      {"layout", toml::table{{"fov_deg", c.fov_deg},
                             {"crops", c.crops},
                             {"crop_width", c.crop_width},
                             {"crop_height", c.crop_height}}},
      {"sampler", toml::table{{"outer_iters", c.sampler.outer_iters},
                              {"inner_steps", c.sampler.inner_steps},
                              {"seed", static_cast<std::int64_t>(c.sampler.seed)},
                              {"second_term_weight", c.sampler.second_term_weight},
                              {"prompt", c.sampler.prompt},
                              {"early_stop", c.sampler.early_stop},
                              {"early_stop_rmse", c.sampler.early_stop_rmse}}},
      {"depth", toml::table{{"iters", c.depth.iters},
                            {"segments", c.depth.segments},
                            {"anchor", c.depth.anchor_index},
                            {"monotone", c.depth.monotone},
                            {"min_slope", c.depth.min_slope}}},
      {"ldi", toml::table{{"layers", c.cluster.k},
                          {"bins", c.cluster.bins},
                          {"min_cluster_frac", c.cluster.min_cluster_frac},
                          {"fill_band", c.fill.band_width},
                          {"fill_tolerance", c.fill.tolerance},
                          {"fill_max_sweeps", c.fill.max_sweeps}}},
      {"oracle", toml::table{{"synthetic", c.synthetic},
                             {"url", c.endpoint.base_url},
                             {"mode", c.endpoint.mode},
                             {"timeout", c.endpoint.timeout_s},
                             {"retries", c.endpoint.retries},
                             {"denoiser", c.synthetic_denoiser},
                             {"radius", c.propagate_radius},
                             {"depth", c.synthetic_depth}}},
  };
  std::ostringstream out;
  out << root << "\n";
  return out.str();
}

/// Environment variable that overrides oracle.url.
inline constexpr const char* kOracleUrlEnv = "PANOFUSE_ORACLE_URL";

inline void apply_environment(PipelineConfig& c) {
  if (const char* url = std::getenv(kOracleUrlEnv); url && *url) c.endpoint.base_url = url;
}

}  // namespace panofuse
