// Copyright Contributors to the crossview-gs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include <Eigen/Dense>

#include "cvgs/gaussian.h"
#include "cvgs/geometry.h"
#include "cvgs/image.h"

namespace cvgs {

// Pixels with composited alpha at or below this are reported with invalid
// (NaN) expected depth.
inline constexpr double kDepthAlphaMin = 1e-6;

struct RenderOptions {
  Eigen::Vector3d background = Eigen::Vector3d::Zero();
  int tile_size = 16;
  // Per-splat alpha is clamped to this before compositing.
  double alpha_clamp = 0.99;
  // Front-to-back compositing stops once transmittance drops below this.
  double transmittance_min = 1e-4;
};

template <typename T>
struct RenderOutputT {
  ImageT<T> color;  // H x W x 3, includes background weighted by residual
                    // transmittance
  ImageT<T> alpha;  // H x W x 1, 1 - final transmittance
  ImageT<T> depth;  // H x W x 1, alpha-normalized expected depth, NaN where
                    // alpha <= kDepthAlphaMin

  // Replay state for the backward pass; not part of the rendered product.
  ImageT<T> final_trans;   // exact final transmittance per pixel
  ImageT<int32_t> end_pos; // per pixel: first unprocessed position in the
                           // depth-sorted splat list of its tile
  size_t field_size = 0;
  int tile_size = 0;
};

using RenderOutput = RenderOutputT<float>;

template <typename T>
struct ParamGrad {
  Eigen::Matrix<T, 3, 1> d_mu = Eigen::Matrix<T, 3, 1>::Zero();
  Eigen::Matrix<T, 4, 1> d_rot = Eigen::Matrix<T, 4, 1>::Zero();  // (w,x,y,z)
  Eigen::Matrix<T, 3, 1> d_log_scale = Eigen::Matrix<T, 3, 1>::Zero();
  T d_opacity_logit = T(0);
  Eigen::Matrix<T, 3, 1> d_color = Eigen::Matrix<T, 3, 1>::Zero();
};

template <typename T>
struct FieldGradientsT {
  std::vector<ParamGrad<T>> params;  // one entry per Gaussian
  // Norm of the accumulated screen-space positional gradient per Gaussian
  // (pixels); the trainer's densification signal. Zero for culled Gaussians.
  std::vector<T> grad2d_norm;
  // True where the Gaussian survived projection for this view.
  std::vector<uint8_t> visible;
};

using FieldGradients = FieldGradientsT<float>;

// Tile-parallel forward render. Splats composite front to back in global
// (depth, input index) order, so permuting the input leaves the output
// bit-identical, as does changing the worker count.
template <typename T>
RenderOutputT<T> render(const std::vector<Gaussian3<T>>& field, const Camera& cam,
                        const RenderOptions& opt = {});

// Expected-depth map from the same compositing path.
template <typename T>
ImageT<T> render_depth(const std::vector<Gaussian3<T>>& field, const Camera& cam,
                       const RenderOptions& opt = {});

// Analytic gradients of sum(d_color . color) + sum(d_alpha . alpha) with
// respect to every Gaussian parameter. `out` must be the product of render()
// on the same field/camera/options. Per-Gaussian accumulation order is fixed
// (pixels within a tile, then tiles in index order), so results do not depend
// on the worker count.
template <typename T>
FieldGradientsT<T> render_backward(const std::vector<Gaussian3<T>>& field,
                                   const Camera& cam, const RenderOptions& opt,
                                   const RenderOutputT<T>& out,
                                   const ImageT<T>& d_color,
                                   const ImageT<T>& d_alpha);

namespace detail {

// Flattened per-splat state shared by the tiled and reference compositors.
// The support box [x0,x1]x[y0,y1] (inclusive) bounds the 99%-mass ellipse;
// contributions are evaluated only inside it.
template <typename T>
struct SplatWork {
  T mx, my;             // projected mean
  T qxx, qxy, qyy;      // inverse 2D covariance
  T opacity, depth;
  T color[3];
  int x0, x1, y0, y1;
  int gauss;            // source Gaussian index
};

// Projects and culls the field, sorts survivors by (depth, index), and
// computes support boxes clipped to the image.
template <typename T>
std::vector<SplatWork<T>> prepare_splats(const std::vector<Gaussian3<T>>& field,
                                         const Camera& cam);

}  // namespace detail

}  // namespace cvgs
