// Copyright Contributors to the crossview-gs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "cvgs/gaussian.h"
#include "cvgs/image.h"

namespace cvgs {

// Mixing coefficients of the training objective:
//   total = (1 - lambda_ssim) * l_color + lambda_ssim * l_ssim
//         + lambda_vol * l_vol
struct LossWeights {
  double lambda_ssim = 0.2;
  double lambda_vol = 0.001;
};

// A scalar loss together with its gradient w.r.t. the rendered image.
template <typename T>
struct WeightedLoss {
  T value = T(0);
  ImageT<T> d_rendered;
};

template <typename T>
struct VolumeReg {
  T value = T(0);
  // dL/d log_scale per Gaussian; the product rule makes each component the
  // Gaussian's own scale product divided by the field size.
  std::vector<Eigen::Matrix<T, 3, 1>> d_log_scale;
};

template <typename T>
struct LossBreakdown {
  T l_color = T(0);
  T l_ssim = T(0);
  T l_vol = T(0);
  T total = T(0);
  // Gradients of `total`, mixing coefficients already applied. d_alpha is
  // kept alongside d_color so callers can hand both to the rasterizer
  // backward pass; the photometric objective does not supervise coverage,
  // so it is identically zero.
  ImageT<T> d_color;
  ImageT<T> d_alpha;
  std::vector<Eigen::Matrix<T, 3, 1>> d_log_scale;
};

// Per-pixel weighted mean absolute error:
//   (1/HW) sum_p w(p) * mean_c |rendered(p,c) - target(p,c)|
// The channel mean keeps each pixel's weight entering exactly once, so an
// all-ones weight map reproduces the plain L1 mean bit-for-bit.
template <typename T>
WeightedLoss<T> weighted_l1(const ImageT<T>& weights, const ImageT<T>& rendered,
                            const ImageT<T>& target);

// Plain L1 mean; equals weighted_l1 with weights identically one.
template <typename T>
WeightedLoss<T> l1_loss(const ImageT<T>& rendered, const ImageT<T>& target);

// Channel-averaged local SSIM with the standard 11x11 Gaussian window
// (sigma 1.5, K1=0.01, K2=0.03, dynamic range 1). Borders are handled by
// reflecting the image about the edge pixel. Returns an H x W single-channel
// map.
template <typename T>
ImageT<T> ssim_map(const ImageT<T>& a, const ImageT<T>& b);

// (1/HW) sum_p w(p) * (1 - ssim_map(p)), differentiated through the window
// statistics w.r.t. `rendered`.
template <typename T>
WeightedLoss<T> weighted_ssim_loss(const ImageT<T>& weights,
                                   const ImageT<T>& rendered,
                                   const ImageT<T>& target);

// Plain structural dissimilarity mean; equals weighted_ssim_loss with
// weights identically one.
template <typename T>
WeightedLoss<T> ssim_loss(const ImageT<T>& rendered, const ImageT<T>& target);

// Mean SSIM over the map; the scalar reported by the evaluation harness.
template <typename T>
double mean_ssim(const ImageT<T>& a, const ImageT<T>& b);

// Mean over Gaussians of the product of the three axis scales. Penalizing
// volume keeps splats small and limits overlap. Empty field yields zero.
template <typename T>
VolumeReg<T> volume_reg(const std::vector<Gaussian3<T>>& field);

// Full training objective over one view.
template <typename T>
LossBreakdown<T> total_loss(const ImageT<T>& weights, const ImageT<T>& rendered,
                            const ImageT<T>& target,
                            const std::vector<Gaussian3<T>>& field,
                            const LossWeights& lw = {});

// 10*log10(1 / MSE) over all pixels and channels, in dB. Identical images
// report +infinity.
template <typename T>
double psnr(const ImageT<T>& a, const ImageT<T>& b);

}  // namespace cvgs
