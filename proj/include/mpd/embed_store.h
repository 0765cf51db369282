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

#ifndef MPD_EMBED_STORE_H_
#define MPD_EMBED_STORE_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mpd/corpora.h"

namespace mpd {

enum class Namespace : std::uint8_t { kType = 0, kSynset = 1, kToken = 2, kSent = 3 };

inline constexpr std::array<Namespace, 4> kAllNamespaces = {
    Namespace::kType, Namespace::kSynset, Namespace::kToken, Namespace::kSent};

std::string_view NamespaceName(Namespace ns);

// Frozen vectors of one dimension k in four namespaces. Values are held as
// 32-bit floats, exactly as on disk, and widened to double on read.
//
// On-disk layout (little endian):
//   "MLEX" | version u32 | k u32 |
//   for TYPE, SYNSET, TOKEN, SENT: count u64, then count x
//     (key length u32 | key bytes | k x f32)
// Entries are written in ascending key order.
class EmbeddingStore {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;

  explicit EmbeddingStore(std::size_t dimension);

  std::size_t dimension() const { return dimension_; }

  // Inserts or replaces. Throws DimensionError on a length mismatch.
  void Put(Namespace ns, std::string key, std::span<const float> vector);
  void Put(Namespace ns, std::string key, std::span<const double> vector);

  bool Contains(Namespace ns, std::string_view key) const;
  // Throws MissingKeyError naming the namespace and key.
  std::vector<double> Get(Namespace ns, std::string_view key) const;
  // Widens into out (length k) without allocating.
  void GetInto(Namespace ns, std::string_view key, std::span<double> out) const;
  std::span<const float> Raw(Namespace ns, std::string_view key) const;

  std::size_t size(Namespace ns) const { return maps_[Slot(ns)].size(); }
  std::vector<std::string> Keys(Namespace ns) const;  // sorted

  friend bool operator==(const EmbeddingStore& a, const EmbeddingStore& b);

 private:
  static std::size_t Slot(Namespace ns) { return static_cast<std::size_t>(ns); }
  const std::vector<float>* Lookup(Namespace ns, std::string_view key) const;

  struct StringHash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const { return std::hash<std::string_view>{}(s); }
  };

  std::size_t dimension_;
  std::array<std::unordered_map<std::string, std::vector<float>, StringHash, std::equal_to<>>, 4>
      maps_;
};

std::string SerializeStore(const EmbeddingStore& store);
EmbeddingStore DeserializeStore(std::string_view bytes, const std::string& source = "<memory>");
void WriteStore(const EmbeddingStore& store, const std::string& path);
EmbeddingStore OpenStore(const std::string& path);

// "{corpus}:{doc}:{sent}:{index}" and "{corpus}:{doc}:{sent}" with '%' and ':'
// percent-escaped inside each field so distinct addresses give distinct keys.
std::string TokenKey(const Token& token);
std::string SentKey(const Token& token);

}  // namespace mpd

#endif  // MPD_EMBED_STORE_H_
