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

#include "mpd/embed_store.h"

#include <algorithm>
#include <bit>
#include <cstring>

#include "mpd/error.h"
#include "mpd/jsonl.h"

namespace mpd {

static_assert(std::endian::native == std::endian::little,
              "the store codec assumes a little-endian host");
static_assert(sizeof(float) == 4);

std::string_view NamespaceName(Namespace ns) {
  switch (ns) {
    case Namespace::kType:
      return "TYPE";
    case Namespace::kSynset:
      return "SYNSET";
    case Namespace::kToken:
      return "TOKEN";
    case Namespace::kSent:
      return "SENT";
  }
  return "?";
}

EmbeddingStore::EmbeddingStore(std::size_t dimension) : dimension_(dimension) {
  if (dimension == 0) throw DimensionError("embedding dimension must be positive");
}

void EmbeddingStore::Put(Namespace ns, std::string key, std::span<const float> vector) {
  if (vector.size() != dimension_) {
    throw DimensionError(std::string(NamespaceName(ns)) + " vector '" + key + "' has length " +
                         std::to_string(vector.size()) + ", store dimension is " +
                         std::to_string(dimension_));
  }
  maps_[Slot(ns)].insert_or_assign(std::move(key),
                                   std::vector<float>(vector.begin(), vector.end()));
}

void EmbeddingStore::Put(Namespace ns, std::string key, std::span<const double> vector) {
  std::vector<float> narrowed(vector.size());
  std::transform(vector.begin(), vector.end(), narrowed.begin(),
                 [](double v) { return static_cast<float>(v); });
  Put(ns, std::move(key), std::span<const float>(narrowed));
}

const std::vector<float>* EmbeddingStore::Lookup(Namespace ns, std::string_view key) const {
  const auto& map = maps_[Slot(ns)];
  auto it = map.find(key);
  return it == map.end() ? nullptr : &it->second;
}

bool EmbeddingStore::Contains(Namespace ns, std::string_view key) const {
  return Lookup(ns, key) != nullptr;
}

std::span<const float> EmbeddingStore::Raw(Namespace ns, std::string_view key) const {
  const auto* v = Lookup(ns, key);
  if (v == nullptr) {
    throw MissingKeyError("no " + std::string(NamespaceName(ns)) + " embedding for key '" +
                          std::string(key) + "'");
  }
  return *v;
}

std::vector<double> EmbeddingStore::Get(Namespace ns, std::string_view key) const {
  std::vector<double> out(dimension_);
  GetInto(ns, key, out);
  return out;
}

void EmbeddingStore::GetInto(Namespace ns, std::string_view key, std::span<double> out) const {
  auto raw = Raw(ns, key);
  if (out.size() != raw.size()) throw DimensionError("GetInto: output span has wrong length");
  std::copy(raw.begin(), raw.end(), out.begin());
}

std::vector<std::string> EmbeddingStore::Keys(Namespace ns) const {
  std::vector<std::string> keys;
  keys.reserve(maps_[Slot(ns)].size());
  for (const auto& [k, v] : maps_[Slot(ns)]) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  return keys;
}

bool operator==(const EmbeddingStore& a, const EmbeddingStore& b) {
  if (a.dimension_ != b.dimension_) return false;
  for (std::size_t s = 0; s < 4; ++s) {
    if (a.maps_[s].size() != b.maps_[s].size()) return false;
    for (const auto& [key, va] : a.maps_[s]) {
      auto it = b.maps_[s].find(key);
      if (it == b.maps_[s].end()) return false;
      if (std::memcmp(va.data(), it->second.data(), va.size() * sizeof(float)) != 0) return false;
    }
  }
  return true;
}

namespace {

template <class T>
void Append(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  Reader(std::string_view bytes, const std::string& source) : bytes_(bytes), source_(source) {}

  template <class T>
  T Read() {
    Need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string_view Bytes(std::size_t n) {
    Need(n);
    std::string_view s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void Need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw DataError(source_ + ": truncated embedding store at byte " + std::to_string(pos_));
    }
  }

  std::string_view bytes_;
  const std::string& source_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string SerializeStore(const EmbeddingStore& store) {
  std::string out("MLEX");
  Append<std::uint32_t>(out, EmbeddingStore::kFormatVersion);
  Append<std::uint32_t>(out, static_cast<std::uint32_t>(store.dimension()));
  for (Namespace ns : kAllNamespaces) {
    const auto keys = store.Keys(ns);
    Append<std::uint64_t>(out, keys.size());
    for (const auto& key : keys) {
      Append<std::uint32_t>(out, static_cast<std::uint32_t>(key.size()));
      out.append(key);
      auto raw = store.Raw(ns, key);
      out.append(reinterpret_cast<const char*>(raw.data()), raw.size() * sizeof(float));
    }
  }
  return out;
}

EmbeddingStore DeserializeStore(std::string_view bytes, const std::string& source) {
  if (bytes.size() < 4 || bytes.substr(0, 4) != "MLEX") {
    throw DataError(source + ": not an embedding store (bad magic bytes)");
  }
  Reader r(bytes.substr(4), source);
  const auto version = r.Read<std::uint32_t>();
  if (version != EmbeddingStore::kFormatVersion) {
    throw DataError(source + ": unsupported store format version " + std::to_string(version));
  }
  const auto k = r.Read<std::uint32_t>();
  if (k == 0) throw DimensionError(source + ": store dimension is zero");
  EmbeddingStore store(k);
  std::vector<float> buf(k);
  for (Namespace ns : kAllNamespaces) {
    const auto count = r.Read<std::uint64_t>();
    for (std::uint64_t i = 0; i < count; ++i) {
      const auto len = r.Read<std::uint32_t>();
      std::string key(r.Bytes(len));
      std::string_view raw = r.Bytes(static_cast<std::size_t>(k) * sizeof(float));
      std::memcpy(buf.data(), raw.data(), raw.size());
      if (store.Contains(ns, key)) {
        throw DataError(source + ": duplicate " + std::string(NamespaceName(ns)) + " key '" +
                        key + "'");
      }
      store.Put(ns, std::move(key), std::span<const float>(buf));
    }
  }
  if (!r.done()) throw DataError(source + ": trailing bytes after the SENT block");
  return store;
}

void WriteStore(const EmbeddingStore& store, const std::string& path) {
  WriteFile(path, SerializeStore(store));
}

EmbeddingStore OpenStore(const std::string& path) { return DeserializeStore(ReadFile(path), path); }

namespace {

std::string Escape(std::string_view field) {
  std::string out;
  out.reserve(field.size());
  for (char c : field) {
    if (c == '%') {
      out += "%25";
    } else if (c == ':') {
      out += "%3A";
    } else {
      out += c;
    }
  }
  return out;
}

}  // namespace

std::string SentKey(const Token& token) {
  return Escape(token.corpus_id) + ":" + Escape(token.doc_id) + ":" + Escape(token.sent_id);
}

std::string TokenKey(const Token& token) {
  return SentKey(token) + ":" + std::to_string(token.index);
}

}  // namespace mpd
