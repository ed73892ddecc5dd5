// Copyright Contributors to the crossview-gs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

namespace cvgs {

// Points closer than this to the camera plane are treated as behind the camera.
inline constexpr double kZNear = 0.01;

// Rigid map p -> rotation * p + translation. Rotation is kept unit-norm;
// compose() and inverse() renormalize so chained transforms stay rigid.
struct RigidTransform {
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static RigidTransform Identity() { return {}; }

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const {
    return rotation * p + translation;
  }

  // Returns this ∘ inner, i.e. the map p -> this(inner(p)).
  RigidTransform compose(const RigidTransform& inner) const;

  RigidTransform inverse() const;

  // Rotation matrix of the (normalized) rotation.
  Eigen::Matrix3d rotation_matrix() const { return rotation.normalized().toRotationMatrix(); }

  void normalize() { rotation.normalize(); }
};

// Pinhole camera. `world_to_cam` maps world points into the camera frame;
// the camera looks down +z and image y grows downward. Pixel (ix, iy)
// samples the continuous image plane at exactly (ix, iy).
struct Camera {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;
  RigidTransform world_to_cam;

  // Throws CheckError on non-positive focal lengths / sizes or a
  // non-orthonormal rotation.
  void validate() const;

  Eigen::Vector3d center() const;  // camera center in world coordinates
};

struct PointProjection {
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
  double depth = 0;     // camera-frame z
  bool behind = false;  // true when depth < kZNear; pixel is then undefined
};

// Projects a world point into the image. Never throws; points at or behind
// the near plane come back with behind=true.
PointProjection project_point(const Camera& cam, const Eigen::Vector3d& p_world);

// Lifts pixel coordinates at a given camera-frame depth back to a world
// point. Throws CheckError when depth <= 0.
Eigen::Vector3d unproject_pixel(const Camera& cam, const Eigen::Vector2d& pixel,
                                double depth);

}  // namespace cvgs
