/*
 * Copyright 2026 The mpd Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "mpd/checkpoint.h"

#include <bit>
#include <cstring>
#include <filesystem>

#include "mpd/error.h"
#include "mpd/jsonl.h"

namespace mpd {

using nlohmann::json;

const Matrix* Checkpoint::Find(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return &a.value;
  }
  return nullptr;
}

std::string CheckpointDataPath(const std::string& manifest_path) {
  std::filesystem::path p(manifest_path);
  if (p.extension() == ".json") return p.replace_extension(".bin").string();
  return manifest_path + ".bin";
}

void SaveCheckpoint(const Checkpoint& checkpoint, const std::string& manifest_path) {
  static_assert(std::endian::native == std::endian::little);
  const std::string data_path = CheckpointDataPath(manifest_path);
  json arrays = json::array();
  std::string data;
  std::uint64_t offset = 0;
  for (const auto& a : checkpoint.arrays) {
    arrays.push_back(
        {{"name", a.name}, {"rows", a.value.rows()}, {"cols", a.value.cols()}, {"offset", offset}});
    data.append(reinterpret_cast<const char*>(a.value.data()), a.value.size() * sizeof(double));
    offset += a.value.size();
  }
  json manifest = {{"format", "mpd-checkpoint"},
                   {"version", Checkpoint::kFormatVersion},
                   {"model_kind", checkpoint.model_kind},
                   {"config", checkpoint.config},
                   {"step", checkpoint.step},
                   {"phase", checkpoint.phase},
                   {"rng", checkpoint.rng},
                   {"data_file", std::filesystem::path(data_path).filename().string()},
                   {"total_elements", offset},
                   {"arrays", arrays}};
  WriteFile(data_path, data);
  WriteFile(manifest_path, manifest.dump(2) + "\n");
}

Checkpoint LoadCheckpoint(const std::string& manifest_path) {
  json manifest;
  try {
    manifest = json::parse(ReadFile(manifest_path));
  } catch (const json::parse_error& e) {
    throw DataError(manifest_path + ": malformed checkpoint manifest: " + e.what());
  }
  Checkpoint c;
  try {
    if (manifest.at("format") != "mpd-checkpoint") {
      throw DataError(manifest_path + ": not a checkpoint manifest");
    }
    if (manifest.at("version").get<int>() != Checkpoint::kFormatVersion) {
      throw DataError(manifest_path + ": unsupported checkpoint version");
    }
    c.model_kind = manifest.at("model_kind").get<std::string>();
    c.config = manifest.at("config");
    c.step = manifest.at("step").get<std::uint64_t>();
    c.phase = manifest.at("phase").get<int>();
    c.rng = manifest.value("rng", json::object());
    const auto data_path = (std::filesystem::path(manifest_path).parent_path() /
                            manifest.at("data_file").get<std::string>())
                               .string();
    const std::string data = ReadFile(data_path);
    const auto total = manifest.at("total_elements").get<std::uint64_t>();
    if (data.size() != total * sizeof(double)) {
      throw DataError(data_path + ": expected " + std::to_string(total * sizeof(double)) +
                      " bytes, found " + std::to_string(data.size()));
    }
    for (const auto& a : manifest.at("arrays")) {
      const auto rows = a.at("rows").get<std::size_t>();
      const auto cols = a.at("cols").get<std::size_t>();
      const auto offset = a.at("offset").get<std::uint64_t>();
      if (offset + rows * cols > total) throw DataError(manifest_path + ": array out of bounds");
      Matrix m(rows, cols);
      std::memcpy(m.data(), data.data() + offset * sizeof(double), m.size() * sizeof(double));
      c.arrays.push_back({a.at("name").get<std::string>(), std::move(m)});
    }
  } catch (const json::exception& e) {
    throw DataError(manifest_path + ": invalid checkpoint manifest: " + e.what());
  }
  return c;
}

}  // namespace mpd
