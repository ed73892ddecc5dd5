// Copyright Contributors to the crossview-gs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "cvgs/gaussian.h"
#include "cvgs/geometry.h"
#include "cvgs/image.h"
#include "cvgs/rasterizer.h"

namespace cvgs {

// Per-pixel, per-channel population statistics over an ensemble of renders
// of the same camera. Values are reduced in sorted order with deviations
// taken against the smallest member, so results are independent of member
// ordering and an ensemble of identical images yields exactly zero
// variance.
struct EnsembleStats {
  ImageF mean;
  ImageF variance;
};
EnsembleStats ensemble_stats(const std::vector<ImageF>& renders);

// Collapses a 3-channel variance image into the scalar uncertainty
// u = (1/3) sum_c log(var_c + 1); zero exactly where all variances vanish.
ImageF fuse_channels(const ImageF& variance);

// Sorted-order mean of per-member depth renders; a pixel is valid only
// when every member has depth there.
ImageF ensemble_mean_depth(const std::vector<ImageF>& depths);

// Debug record of which ground contributions landed on which aerial pixel.
struct MatchSet {
  struct Entry {
    int pixel;  // y * width + x
    std::vector<float> contributions;
  };
  std::vector<Entry> entries;  // each aerial pixel appears at most once
};

struct ProjectionInputs {
  std::vector<Camera> ground_cams;
  std::vector<ImageF> ground_maps;    // raw uncertainty, one per ground camera
  std::vector<ImageF> ground_depths;  // unprojection depth; NaN invalid
  std::vector<Camera> aerial_cams;
  std::vector<ImageF> aerial_depths;  // occlusion reference; NaN accepts all
  double tau_occ = 0.1;               // meters of tolerated depth excess
};

// Transports ground uncertainty into each aerial view: unproject every
// valid ground pixel at its depth, reproject, round to the nearest aerial
// pixel, drop contributions occluded in the aerial view, and average the
// rest. Pixels with no contribution are NaN.
std::vector<ImageF> project_uncertainty(const ProjectionInputs& in,
                                        std::vector<MatchSet>* matches = nullptr);

// (U / (max - min))^(1/n) with the statistics taken jointly over the valid
// pixels of all maps, clamped to [0,1]; invalid pixels become 0. A
// degenerate spread (max == min) yields all-zero maps and a warning.
struct NormalizedMaps {
  std::vector<ImageF> maps;
  bool degenerate = false;
};
NormalizedMaps normalize_maps(const std::vector<ImageF>& raw, double n,
                              bool quiet = false);

// Full cross-view chain over a trained ensemble: per ground camera, render
// every member, fuse the color variance into raw uncertainty, and average
// member depths; project into the aerial cameras; normalize with the n-th
// root. `raw_aerial` is kept so ablations can renormalize under other n.
struct CrossViewWeights {
  std::vector<ImageF> weights;     // per aerial camera, in [0,1]
  std::vector<ImageF> raw_aerial;  // pre-normalization, NaN where no match
  bool degenerate = false;
};
CrossViewWeights build_cross_view_weights(
    const std::vector<std::vector<Gaussian3f>>& members,
    const std::vector<Camera>& ground_cams,
    const std::vector<Camera>& aerial_cams, const RenderOptions& opt,
    double n_root, double tau_occ = 0.1, bool quiet = false);

}  // namespace cvgs
