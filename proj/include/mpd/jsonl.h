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

#ifndef MPD_JSONL_H_
#define MPD_JSONL_H_

#include <cstddef>
#include <functional>
#include <string>
#include <string_view>

#include "json.hpp"

namespace mpd {

std::string ReadFile(const std::string& path);
void WriteFile(const std::string& path, std::string_view contents);

// Calls fn(record, line_number) for every non-blank line. Malformed JSON or a
// leading byte-order mark raises ParseError with the 1-based line number.
void ForEachJsonLine(std::string_view text, const std::string& source,
                     const std::function<void(const nlohmann::json&, std::size_t)>& fn);

}  // namespace mpd

#endif  // MPD_JSONL_H_
