// SPDX-License-Identifier: Apache-2.0
#ifndef UOTLAB_SVG_PLOT_HPP_
#define UOTLAB_SVG_PLOT_HPP_

#include <string>

#include "uotlab/gmm.hpp"

namespace uotlab {

// Self-contained SVG scatter: samples, mode centers, 3-sigma circles, the
// forget mode highlighted. Output bytes are deterministic for identical
// inputs. 2D samples only.
void emit_scatter_plot(const DenseMatrix& samples, const GmmSpec& spec, int forget_index,
                       const std::string& path, double k_sigma = 3.0);

}  // namespace uotlab

#endif  // UOTLAB_SVG_PLOT_HPP_
