// SPDX-License-Identifier: Apache-2.0
#include "uotlab/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace uotlab {

void emit_scatter_plot(const DenseMatrix& samples, const GmmSpec& spec, int forget_index,
                       const std::string& path, double k_sigma) {
  spec.validate();
  if (spec.dimension != 2) throw ConfigError("emit_scatter_plot: 2D specs only");
  if (samples.rows > 0 && samples.cols != 2) {
    throw ShapeError(strf("emit_scatter_plot: samples have %d cols, expected 2", samples.cols));
  }
  if (forget_index < 0 || forget_index >= spec.mode_count()) {
    throw ConfigError(strf("emit_scatter_plot: forget index %d out of range", forget_index));
  }

  // data window: mode extents plus margin, at least [-2, 2]^2
  double lo = -2.0, hi = 2.0;
  for (const auto& m : spec.modes) {
    for (double c : m.center) {
      lo = std::min(lo, c - 6.0 * m.sigma);
      hi = std::max(hi, c + 6.0 * m.sigma);
    }
  }
  const double size = 640.0;
  const double scale = size / (hi - lo);
  auto px = [&](double x) { return (x - lo) * scale; };
  auto py = [&](double y) { return size - (y - lo) * scale; };  // y axis up

  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(strf("emit_scatter_plot: cannot open '%s'", path.c_str()));
  out << strf("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" "
              "viewBox=\"0 0 %.0f %.0f\">\n",
              size, size, size, size);
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  // axes through the origin
  out << strf("<line x1=\"%.3f\" y1=\"0\" x2=\"%.3f\" y2=\"%.0f\" stroke=\"#dddddd\"/>\n", px(0.0), px(0.0), size);
  out << strf("<line x1=\"0\" y1=\"%.3f\" x2=\"%.0f\" y2=\"%.3f\" stroke=\"#dddddd\"/>\n", py(0.0), size, py(0.0));

  for (int r = 0; r < samples.rows; ++r) {
    out << strf("<circle cx=\"%.3f\" cy=\"%.3f\" r=\"1.5\" fill=\"#1f77b4\" fill-opacity=\"0.35\"/>\n",
                px(samples.at(r, 0)), py(samples.at(r, 1)));
  }
  for (int k = 0; k < spec.mode_count(); ++k) {
    const auto& m = spec.modes[static_cast<size_t>(k)];
    const char* color = (k == forget_index) ? "#d62728" : "#2ca02c";
    out << strf("<circle cx=\"%.3f\" cy=\"%.3f\" r=\"%.3f\" fill=\"none\" stroke=\"%s\" "
                "stroke-width=\"2\"%s/>\n",
                px(m.center[0]), py(m.center[1]), k_sigma * m.sigma * scale, color,
                (k == forget_index) ? " stroke-dasharray=\"6 3\"" : "");
    const double cx = px(m.center[0]);
    const double cy = py(m.center[1]);
    out << strf("<line x1=\"%.3f\" y1=\"%.3f\" x2=\"%.3f\" y2=\"%.3f\" stroke=\"%s\" stroke-width=\"2\"/>\n",
                cx - 5.0, cy - 5.0, cx + 5.0, cy + 5.0, color);
    out << strf("<line x1=\"%.3f\" y1=\"%.3f\" x2=\"%.3f\" y2=\"%.3f\" stroke=\"%s\" stroke-width=\"2\"/>\n",
                cx - 5.0, cy + 5.0, cx + 5.0, cy - 5.0, color);
  }
  out << "</svg>\n";
  if (!out) throw Error(strf("emit_scatter_plot: write failed for '%s'", path.c_str()));
}

}  // namespace uotlab
