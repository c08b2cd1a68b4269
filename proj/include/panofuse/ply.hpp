// Copyright (C) 2026 The Panofuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "panofuse/error.hpp"
#include "panofuse/ldi.hpp"

namespace panofuse {

namespace detail {

inline constexpr const char* kPlyFloatFields[] = {
    "x",       "y",       "z",       "red",   "green", "blue",  "scale_0", "scale_1",
    "scale_2", "rot_0",   "rot_1",   "rot_2", "rot_3", "opacity"};
inline constexpr std::size_t kPlyFloats = std::size(kPlyFloatFields);
inline constexpr std::size_t kPlyRecord = kPlyFloats * 4 + 1;

static_assert(std::endian::native == std::endian::little,
              "PLY I/O assumes a little-endian host");

inline void pack_seed(const GaussianSeed& s, char* out) {
  const float values[kPlyFloats] = {s.position[0], s.position[1], s.position[2], s.color[0],
                                    s.color[1],    s.color[2],    s.scale[0],    s.scale[1],
                                    s.scale[2],    s.rotation[0], s.rotation[1], s.rotation[2],
                                    s.rotation[3], s.opacity};
  std::memcpy(out, values, sizeof(values));
  out[sizeof(values)] = static_cast<char>(s.layer_id);
}

inline GaussianSeed unpack_seed(const char* in) {
  float v[kPlyFloats];
  std::memcpy(v, in, sizeof(v));
  GaussianSeed s;
  s.position = {v[0], v[1], v[2]};
  s.color = {v[3], v[4], v[5]};
  s.scale = {v[6], v[7], v[8]};
  s.rotation = {v[9], v[10], v[11], v[12]};
  s.opacity = v[13];
  s.layer_id = static_cast<std::uint8_t>(in[sizeof(v)]);
  return s;
}

inline std::string ply_header(std::size_t count) {
  std::ostringstream h;
  h << "ply\nformat binary_little_endian 1.0\ncomment panofuse gaussian seeds\n"
    << "element vertex " << count << "\n";
  for (const char* f : kPlyFloatFields) h << "property float " << f << "\n";
  h << "property uchar layer_id\nend_header\n";
  return h.str();
}

}  // namespace detail

/// Binary little-endian PLY with one vertex per seed.
inline void export_ply(const std::vector<GaussianSeed>& seeds, const std::filesystem::path& path) {
  if (seeds.empty()) throw IoError("export_ply: no seeds to write to " + path.string());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("export_ply: cannot open " + path.string());
  const auto header = detail::ply_header(seeds.size());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  std::vector<char> body(seeds.size() * detail::kPlyRecord);
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    detail::pack_seed(seeds[i], body.data() + i * detail::kPlyRecord);
  }
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
  if (!out) throw IoError("export_ply: write failed for " + path.string());
}

/// Reads a file written by export_ply; any other layout is rejected.
inline std::vector<GaussianSeed> import_ply(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("import_ply: cannot open " + path.string());
  std::string line;
  std::size_t count = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    if (line == "end_header") break;
    header.push_back(line);
    if (line.rfind("element vertex ", 0) == 0) count = std::stoull(line.substr(15));
  }
  if (!in || detail::ply_header(count) != [&] {
        std::string h;
        for (const auto& l : header) h += l + "\n";
        return h + "end_header\n";
      }()) {
    throw IoError("import_ply: unsupported header in " + path.string());
  }
  std::vector<char> body(count * detail::kPlyRecord);
  in.read(body.data(), static_cast<std::streamsize>(body.size()));
  if (in.gcount() != static_cast<std::streamsize>(body.size()) || in.peek() != EOF) {
    throw IoError("import_ply: vertex data size does not match the header in " + path.string());
  }
  std::vector<GaussianSeed> seeds;
  seeds.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    seeds.push_back(detail::unpack_seed(body.data() + i * detail::kPlyRecord));
  }
  return seeds;
}

}  // namespace panofuse
