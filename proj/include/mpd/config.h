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

#ifndef MPD_CONFIG_H_
#define MPD_CONFIG_H_

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mpd {

using KeyValues = std::vector<std::pair<std::string, std::string>>;

// Flat "key = value" file. '#' starts a comment, blank lines are skipped and
// a value may be wrapped in double quotes. Throws ParseError on a line without
// '=', an empty key or a repeated key.
KeyValues ParseKeyValues(std::string_view text, const std::string& source = "<memory>");
KeyValues LoadKeyValues(const std::string& path);

}  // namespace mpd

#endif  // MPD_CONFIG_H_
