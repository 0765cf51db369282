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

#ifndef MPD_CHECKPOINT_H_
#define MPD_CHECKPOINT_H_

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "mpd/matrix.h"

namespace mpd {

struct NamedArray {
  std::string name;
  Matrix value;
};

// A JSON manifest plus a flat little-endian f64 file holding every array in
// manifest order. The manifest lists each array's name, shape and offset (in
// elements) into the data file.
struct Checkpoint {
  static constexpr int kFormatVersion = 1;

  std::string model_kind;
  nlohmann::json config = nlohmann::json::object();
  std::uint64_t step = 0;
  int phase = 1;
  nlohmann::json rng = nlohmann::json::object();  // stream name -> {key, counter}
  std::vector<NamedArray> arrays;

  const Matrix* Find(const std::string& name) const;
};

// "<dir>/model.json" -> "<dir>/model.bin"; other names get ".bin" appended.
std::string CheckpointDataPath(const std::string& manifest_path);

void SaveCheckpoint(const Checkpoint& checkpoint, const std::string& manifest_path);
Checkpoint LoadCheckpoint(const std::string& manifest_path);

}  // namespace mpd

#endif  // MPD_CHECKPOINT_H_
