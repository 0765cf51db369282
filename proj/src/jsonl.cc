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

#include "mpd/jsonl.h"

#include <fstream>
#include <sstream>

#include "mpd/error.h"

namespace mpd {

std::string ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteFile(const std::string& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeError("cannot write '" + path + "'");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw RuntimeError("write failed for '" + path + "'");
}

void ForEachJsonLine(std::string_view text, const std::string& source,
                     const std::function<void(const nlohmann::json&, std::size_t)>& fn) {
  if (text.starts_with("\xEF\xBB\xBF")) throw ParseError(source, 1, "byte-order mark not allowed");
  std::size_t line = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    ++line;
    std::string_view raw = text.substr(pos, end - pos);
    if (!raw.empty() && raw.back() == '\r') raw.remove_suffix(1);
    if (raw.find_first_not_of(" \t") != std::string_view::npos) {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(raw);
      } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(source, line, std::string("malformed JSON: ") + e.what());
      }
      if (!j.is_object()) throw ParseError(source, line, "expected a JSON object");
      fn(j, line);
    }
    if (end == text.size()) break;
    pos = end + 1;
  }
}

}  // namespace mpd
