// SPDX-License-Identifier: Apache-2.0
#include "uotlab/rng.hpp"

#include "uotlab/common.hpp"

namespace uotlab {

namespace {
uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}
}  // namespace

uint64_t derive_seed(uint64_t master, std::string_view purpose) {
  return splitmix64(fnv1a64_str(purpose) ^ splitmix64(master));
}

}  // namespace uotlab
