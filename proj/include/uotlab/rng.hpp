// SPDX-License-Identifier: Apache-2.0
#ifndef UOTLAB_RNG_HPP_
#define UOTLAB_RNG_HPP_

#include <cstdint>
#include <random>
#include <string_view>

namespace uotlab {

// Sub-seed derivation: mixes (purpose, master) through splitmix64 so that
// adding a new consumer purpose never perturbs existing streams.
uint64_t derive_seed(uint64_t master, std::string_view purpose);

class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }  // [0, 1)
  uint64_t next_u64() { return engine_(); }
  // uniform index in [0, n); modulo bias is negligible for the pool
  // sizes used here (n << 2^32)
  int index(int n) { return static_cast<int>(engine_() % static_cast<uint64_t>(n)); }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace uotlab

#endif  // UOTLAB_RNG_HPP_
