// SPDX-License-Identifier: Apache-2.0
#ifndef UOTLAB_CHECKPOINT_HPP_
#define UOTLAB_CHECKPOINT_HPP_

#include <cstdint>
#include <string>

#include "uotlab/mlp.hpp"

namespace uotlab {

// Self-describing network checkpoint: magic + version + JSON header
// (spec, seed, step) followed by little-endian 64-bit parameter arrays in
// fixed (W1, b1, W2, b2, ...) order. Round-trips are bit-exact.
struct Checkpoint {
  MlpSpec spec;
  ParamStore params;
  uint64_t seed = 0;
  long step = 0;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace uotlab

#endif  // UOTLAB_CHECKPOINT_HPP_
