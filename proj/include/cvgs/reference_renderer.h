// Copyright Contributors to the crossview-gs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "cvgs/rasterizer.h"

namespace cvgs {

// Brute-force double-precision renderer kept as the ground truth for the
// tiled path: for every pixel it gathers all supporting splats, sorts them by
// (depth, index) from scratch, and composites front to back with no tile
// machinery and no transmittance cutoff. Serial and slow by design.
RenderOutputT<double> render_reference(const std::vector<Gaussian3d>& field,
                                       const Camera& cam,
                                       const RenderOptions& opt = {});

}  // namespace cvgs
