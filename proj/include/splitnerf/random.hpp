// splitnerf is Copyright(c) 2026 the splitnerf authors.
// The splitnerf source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#pragma once

#include <concepts>
#include <cstdint>

namespace splitnerf {

// Anything callable that yields doubles in [0, 1). Production code uses
// Stream below; tests pass degenerate lambdas (constant 0, constant 0.5, ...).
template <class S>
concept UniformSource = requires(S s) {
  { s() } -> std::convertible_to<double>;
};

namespace detail {
inline uint64_t mix64(uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}
}  // namespace detail

// Counter-based splitmix64 stream. Cheap to fork: every (seed, key...) tuple
// names an independent stream, which keeps all sampling reproducible and
// thread-safe by value regardless of evaluation order.
class Stream {
 public:
  explicit Stream(uint64_t state = 0) : state_(state) {}

  uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ull;
    return detail::mix64(state_);
  }

  // Uniform double in [0, 1).
  double operator()() { return double(next() >> 11) * 0x1.0p-53; }

 private:
  uint64_t state_;
};

// Derives a stream from a seed and up to three purpose keys.
inline Stream make_stream(uint64_t seed, uint64_t a, uint64_t b = 0,
                          uint64_t c = 0) {
  uint64_t s = detail::mix64(seed + 0x632BE59BD9B4E019ull);
  s = detail::mix64(s ^ (a + 0x9E3779B97F4A7C15ull));
  s = detail::mix64(s ^ (b + 0xD1B54A32D192ED03ull));
  s = detail::mix64(s ^ (c + 0x8CB92BA72F3D8DD7ull));
  return Stream(s);
}

// Stable keys for the independent random streams used across the project.
namespace stream_key {
inline constexpr uint64_t kInit = 1;        // parameter initialization
inline constexpr uint64_t kCoarse = 2;      // coarse stratified samples
inline constexpr uint64_t kFine = 3;        // fine importance samples
inline constexpr uint64_t kBatch = 4;       // training batch assembly
inline constexpr uint64_t kScene = 5;       // synthetic scene generation
}  // namespace stream_key

}  // namespace splitnerf
