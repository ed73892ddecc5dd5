// Copyright Contributors to the crossview-gs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "cvgs/gaussian.h"
#include "cvgs/geometry.h"
#include "cvgs/image.h"
#include "cvgs/losses.h"
#include "cvgs/rasterizer.h"
#include "cvgs/scene.h"

namespace cvgs {

// One supervised view. An empty `weight` image means every pixel counts
// with weight one; weight maps only ever accompany aerial views.
struct TrainView {
  std::string id;
  Camera cam;
  ImageF target;  // H x W x 3
  ImageF weight;  // H x W x 1 or empty
};

struct TrainConfig {
  int iterations = 15000;
  uint64_t seed = 1;
  LossWeights loss;
  RenderOptions render;

  // Adam moments and update scale.
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-15;

  // Per-group learning rates. The position rate decays exponentially to
  // lr_mu * lr_mu_decay over the run; the others stay fixed.
  double lr_mu = 1.6e-4;
  double lr_mu_decay = 0.01;
  double lr_rot = 1e-3;
  double lr_log_scale = 5e-3;
  double lr_opacity = 5e-2;
  double lr_color = 2.5e-3;

  // Densification schedule, in 1-based steps: every `densify_interval`
  // steps while step >= densify_start and step <= densify_stop * iterations.
  int densify_interval = 100;
  int densify_start = 500;
  double densify_stop = 0.6;
  // Mean accumulated screen-space positional gradient (pixels) above which
  // a Gaussian is densified.
  double densify_grad_threshold = 2e-4;
  // World-space size separating clone (small) from split (large).
  double split_scale = 0.4;
  double prune_opacity = 0.005;

  int ensemble_size = 4;
  // Standard deviation (meters) of the per-seed jitter applied to initial
  // positions, so ensemble members start from distinct fields.
  double init_jitter = 0.01;

  void validate() const;  // throws CheckError on out-of-range settings
};

struct TraceRow {
  int iter = 0;  // 1-based
  float l_color = 0, l_ssim = 0, l_vol = 0, total = 0;
};

struct TrainResult {
  GaussianField field;
  std::vector<TraceRow> trace;
};

// One Gaussian per point: mean at the point (plus seed-dependent jitter of
// sigma `init_jitter`), color from the point, isotropic scale at the log of
// the mean distance to the 3 nearest neighbors, opacity logit(0.1),
// identity rotation.
GaussianField init_field(const PointCloud& points, const TrainConfig& config);

// Streams one randomly scheduled view per iteration: render, weighted
// photometric loss, analytic backward, Adam update, densify/prune on
// schedule. Deterministic given (seed, config, views); throws CheckError
// naming the view if the loss goes non-finite.
TrainResult train(GaussianField field, const std::vector<TrainView>& views,
                  const TrainConfig& config);

// Clone/split Gaussians whose mean accumulated positional gradient exceeds
// the threshold, drop those with activated opacity below the prune
// threshold, and reset the statistics. `adam_slots`, when non-null, is kept
// aligned: survivors keep their optimizer state, new slots start fresh.
struct AdamSlot {
  double m[14] = {0};
  double v[14] = {0};
  // Running beta powers for bias correction; fresh slots created by
  // densification start their own schedule.
  double beta1_pow = 1.0;
  double beta2_pow = 1.0;
};
void densify_and_prune(GaussianField& field, const TrainConfig& config,
                       std::vector<AdamSlot>* adam_slots);

// M runs over the same points and views, differing only in seed
// (config.seed + member index). Members are fully independent.
std::vector<TrainResult> train_ensemble(const PointCloud& points,
                                        const std::vector<TrainView>& views,
                                        const TrainConfig& config);

// iter,l_color,l_ssim,l_vol,total with a header row.
void write_trace_csv(const std::string& path,
                     const std::vector<TraceRow>& trace);

}  // namespace cvgs
