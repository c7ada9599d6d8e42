// SPDX-License-Identifier: Apache-2.0
#ifndef UOTLAB_COMMON_HPP_
#define UOTLAB_COMMON_HPP_

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace uotlab {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Dimension disagreement between caller and callee.
struct ShapeError : Error {
  using Error::Error;
};
// NaN/Inf surfaced where finite values are required.
struct NonFiniteError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};

// printf-style formatting into a std::string.
std::string strf(const char* fmt, ...);

// FNV-1a over raw bytes; used for artifact manifests and parameter
// immutability checks. Not cryptographic.
uint64_t fnv1a64(const void* data, size_t n,
                 uint64_t seed = 1469598103934665603ull);
uint64_t fnv1a64_str(std::string_view s);

inline constexpr const char* kCodeVersion = "uotlab 0.1.0";

}  // namespace uotlab

#endif  // UOTLAB_COMMON_HPP_
