// Copyright Contributors to the crossview-gs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include "cvgs/geometry.h"

namespace cvgs {

// Componentwise bounds on exp(log_scale), enforced by the trainer after every
// step and by the checkpoint loader.
inline constexpr double kScaleMin = 1e-6;
inline constexpr double kScaleMax = 1e3;

// Low-pass term added to the diagonal of every projected 2D covariance. Keeps
// splats at least ~a pixel wide and makes cov2d safely invertible.
inline constexpr double kCov2dInflation = 0.3;

// Anisotropic 3D Gaussian with raw (unconstrained) parameters. `rot` is kept
// unit-norm; opacity lives in logit space; color is clamped to [0,1] only at
// render time.
template <typename T>
struct Gaussian3 {
  Eigen::Matrix<T, 3, 1> mu = Eigen::Matrix<T, 3, 1>::Zero();
  Eigen::Quaternion<T> rot = Eigen::Quaternion<T>::Identity();
  Eigen::Matrix<T, 3, 1> log_scale = Eigen::Matrix<T, 3, 1>::Zero();
  T opacity_logit = T(0);
  Eigen::Matrix<T, 3, 1> color = Eigen::Matrix<T, 3, 1>::Zero();
};

using Gaussian3f = Gaussian3<float>;
using Gaussian3d = Gaussian3<double>;

Gaussian3d to_double(const Gaussian3f& g);
std::vector<Gaussian3d> to_double(const std::vector<Gaussian3f>& gs);

// Sigma = R * diag(exp(ls))^2 * R^T. `rot` is assumed unit-norm; the rotation
// matrix uses the plain quaternion polynomial so derivatives stay smooth.
template <typename T>
Eigen::Matrix<T, 3, 3> build_covariance(const Eigen::Quaternion<T>& rot,
                                        const Eigen::Matrix<T, 3, 1>& log_scale);

// Unnormalized density exp(-0.5 * d^T Sigma^-1 d), d = x - mu. In (0, 1].
template <typename T>
T evaluate_gaussian(const Gaussian3<T>& g, const Eigen::Matrix<T, 3, 1>& x);

// Screen-space footprint of a projected Gaussian. `opacity` and `color` are
// the activated (sigmoid / clamped) values used by compositing.
template <typename T>
struct Splat2 {
  Eigen::Matrix<T, 2, 1> mean2d = Eigen::Matrix<T, 2, 1>::Zero();
  Eigen::Matrix<T, 2, 2> cov2d = Eigen::Matrix<T, 2, 2>::Zero();
  T depth = T(0);
  T opacity = T(0);
  Eigen::Matrix<T, 3, 1> color = Eigen::Matrix<T, 3, 1>::Zero();
};

using Splat2f = Splat2<float>;
using Splat2d = Splat2<double>;

// First-order (EWA) projection: cov2d = J W Sigma W^T J^T + inflation * I,
// with J the perspective Jacobian at the camera-frame mean. Returns nullopt
// when the mean is behind the near plane or the 99%-mass ellipse misses the
// image entirely.
template <typename T>
std::optional<Splat2<T>> project_to_2d(const Camera& cam, const Gaussian3<T>& g);

// Parameter store for one trained model plus the densification statistics the
// trainer accumulates between densify events.
struct GaussianField {
  std::vector<Gaussian3f> gaussians;
  // Sum of screen-space positional gradient norms and the number of renders
  // each Gaussian appeared in since the last densify event.
  std::vector<float> grad2d_accum;
  std::vector<int> grad2d_count;

  size_t size() const { return gaussians.size(); }

  void reset_densify_stats();

  // Binary checkpoint: magic "GSUC0001", little-endian u64 count, then per
  // Gaussian 14 f32: mu, rot (w,x,y,z), log_scale, opacity_logit, color.
  void save(const std::string& path) const;
  static GaussianField load(const std::string& path);
};

}  // namespace cvgs
