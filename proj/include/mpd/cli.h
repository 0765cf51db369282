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

#ifndef MPD_CLI_H_
#define MPD_CLI_H_

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace mpd::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kRuntimeError = 3 };

// Runs one subcommand. args excludes the program name. Messages go to err,
// help and summaries to out.
int Run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int Dispatch(int argc, const char* const* argv);

std::string Sha256Hex(std::string_view data);

// Manifest path for a primary output: "<dir>/x.json" -> "<dir>/x.manifest.json";
// a directory gets "<dir>/manifest.json".
std::string ManifestPath(const std::string& output, bool is_directory);

}  // namespace mpd::cli

#endif  // MPD_CLI_H_
