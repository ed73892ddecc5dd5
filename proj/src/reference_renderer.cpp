// Copyright Contributors to the crossview-gs Project
// SPDX-License-Identifier: Apache-2.0

#include "cvgs/reference_renderer.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace cvgs {

RenderOutputT<double> render_reference(const std::vector<Gaussian3d>& field,
                                       const Camera& cam, const RenderOptions& opt) {
  cam.validate();
  const int W = cam.width, H = cam.height;
  const auto works = detail::prepare_splats(field, cam);

  RenderOutputT<double> out;
  out.color = ImageD(W, H, 3);
  out.alpha = ImageD(W, H, 1);
  out.depth = ImageD(W, H, 1);
  out.final_trans = ImageD(W, H, 1);
  out.end_pos = ImageT<int32_t>(W, H, 1);
  out.field_size = field.size();
  out.tile_size = opt.tile_size;

  std::vector<int> covering;
  covering.reserve(works.size());
  for (int py = 0; py < H; ++py) {
    for (int px = 0; px < W; ++px) {
      covering.clear();
      for (int i = 0; i < static_cast<int>(works.size()); ++i) {
        const auto& s = works[i];
        if (px >= s.x0 && px <= s.x1 && py >= s.y0 && py <= s.y1) {
          covering.push_back(i);
        }
      }
      std::sort(covering.begin(), covering.end(), [&](int a, int b) {
        if (works[a].depth != works[b].depth) return works[a].depth < works[b].depth;
        return works[a].gauss < works[b].gauss;
      });

      double trans = 1.0;
      double acc[3] = {0, 0, 0};
      double depth_acc = 0.0;
      for (const int i : covering) {
        const auto& s = works[i];
        const double dx = double(px) - s.mx, dy = double(py) - s.my;
        const double maha = s.qxx * dx * dx + 2.0 * s.qxy * dx * dy + s.qyy * dy * dy;
        const double a = std::min(opt.alpha_clamp, s.opacity * std::exp(-0.5 * maha));
        const double w = a * trans;
        acc[0] += w * s.color[0];
        acc[1] += w * s.color[1];
        acc[2] += w * s.color[2];
        depth_acc += w * s.depth;
        trans *= (1.0 - a);
      }

      const double alpha = 1.0 - trans;
      for (int c = 0; c < 3; ++c) {
        out.color.at(px, py, c) = acc[c] + trans * opt.background[c];
      }
      out.alpha.at(px, py, 0) = alpha;
      out.depth.at(px, py, 0) = alpha > kDepthAlphaMin
                                    ? depth_acc / alpha
                                    : std::numeric_limits<double>::quiet_NaN();
      out.final_trans.at(px, py, 0) = trans;
      out.end_pos.at(px, py, 0) = static_cast<int32_t>(covering.size());
    }
  }
  return out;
}

}  // namespace cvgs
