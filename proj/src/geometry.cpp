// Copyright Contributors to the crossview-gs Project
// SPDX-License-Identifier: Apache-2.0

#include "cvgs/geometry.h"

#include <cmath>

#include "cvgs/check.h"

namespace cvgs {

RigidTransform RigidTransform::compose(const RigidTransform& inner) const {
  RigidTransform out;
  out.rotation = (rotation * inner.rotation).normalized();
  out.translation = rotation * inner.translation + translation;
  return out;
}

RigidTransform RigidTransform::inverse() const {
  RigidTransform out;
  out.rotation = rotation.normalized().conjugate();
  out.translation = -(out.rotation * translation);
  return out;
}

void Camera::validate() const {
  CVGS_CHECK_MSG(fx > 0 && fy > 0, "focal lengths must be positive");
  CVGS_CHECK_MSG(width > 0 && height > 0, "image size must be positive");
  const Eigen::Matrix3d R = world_to_cam.rotation.toRotationMatrix();
  const double ortho = (R * R.transpose() - Eigen::Matrix3d::Identity()).norm();
  CVGS_CHECK_MSG(ortho < 1e-6, "camera rotation is not orthonormal");
  CVGS_CHECK_MSG(std::abs(R.determinant() - 1.0) < 1e-6,
                 "camera rotation must have determinant +1");
}

Eigen::Vector3d Camera::center() const {
  return world_to_cam.inverse().translation;
}

PointProjection project_point(const Camera& cam, const Eigen::Vector3d& p_world) {
  const Eigen::Vector3d p = cam.world_to_cam.apply(p_world);
  PointProjection out;
  out.depth = p.z();
  if (p.z() < kZNear) {
    out.behind = true;
    return out;
  }
  out.pixel.x() = cam.fx * p.x() / p.z() + cam.cx;
  out.pixel.y() = cam.fy * p.y() / p.z() + cam.cy;
  return out;
}

Eigen::Vector3d unproject_pixel(const Camera& cam, const Eigen::Vector2d& pixel,
                                double depth) {
  CVGS_CHECK_MSG(depth > 0, "unproject_pixel requires positive depth");
  const Eigen::Vector3d p_cam((pixel.x() - cam.cx) / cam.fx * depth,
                              (pixel.y() - cam.cy) / cam.fy * depth, depth);
  return cam.world_to_cam.inverse().apply(p_cam);
}

}  // namespace cvgs
