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

#ifndef MPD_RNG_H_
#define MPD_RNG_H_

#include <cstdint>
#include <limits>
#include <string_view>

namespace mpd {

// Counter-based generator: the n-th draw of a stream is a pure function of
// (key, n), so a stream is fully described by its key and position. Streams
// are split by hashing a label or index into a fresh key.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  CounterRng() = default;
  explicit CounterRng(std::uint64_t seed) : key_(Mix(seed ^ kSeedSalt)) {}
  CounterRng(std::uint64_t key, std::uint64_t counter)
      : key_(key), counter_(counter) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() { return At(counter_++); }

  // Value of the stream at an arbitrary position; does not advance.
  result_type At(std::uint64_t position) const {
    return Mix(key_ + kGamma * (position + 1));
  }

  // Uniform in [0, 1) with 53 bits of resolution.
  double Uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n). n must be positive.
  std::uint64_t Below(std::uint64_t n) {
    // Rejection keeps the draw unbiased.
    const std::uint64_t limit = max() - max() % n;
    std::uint64_t x;
    do {
      x = (*this)();
    } while (x >= limit);
    return x % n;
  }

  bool Bernoulli(double p) { return Uniform() < p; }

  CounterRng Split(std::uint64_t stream) const {
    return CounterRng(Mix(key_ ^ Mix(stream + kSplitSalt)), 0);
  }
  CounterRng Split(std::string_view label) const { return Split(Fnv1a(label)); }

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

  friend bool operator==(const CounterRng&, const CounterRng&) = default;

  static constexpr std::uint64_t Fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    return h;
  }

 private:
  static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;
  static constexpr std::uint64_t kSeedSalt = 0x5851f42d4c957f2dULL;
  static constexpr std::uint64_t kSplitSalt = 0x14057b7ef767814fULL;

  // SplitMix64 finalizer.
  static constexpr std::uint64_t Mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_ = Mix(kSeedSalt);
  std::uint64_t counter_ = 0;
};

}  // namespace mpd

#endif  // MPD_RNG_H_
