// Copyright Contributors to the crossview-gs Project
// SPDX-License-Identifier: Apache-2.0

#include "cvgs/gaussian.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <memory>

#include "cvgs/check.h"

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace cvgs {

namespace {

constexpr char kCheckpointMagic[8] = {'G', 'S', 'U', 'C', '0', '0', '0', '1'};

// chi^2 quantile at 0.99 for two degrees of freedom; sqrt gives the
// Mahalanobis radius of the 99%-mass ellipse.
constexpr double kChi2_99_2dof = 9.21034037197618;

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Gaussian3d to_double(const Gaussian3f& g) {
  Gaussian3d out;
  out.mu = g.mu.cast<double>();
  out.rot = Eigen::Quaterniond(g.rot.w(), g.rot.x(), g.rot.y(), g.rot.z());
  out.log_scale = g.log_scale.cast<double>();
  out.opacity_logit = g.opacity_logit;
  out.color = g.color.cast<double>();
  return out;
}

std::vector<Gaussian3d> to_double(const std::vector<Gaussian3f>& gs) {
  std::vector<Gaussian3d> out;
  out.reserve(gs.size());
  for (const auto& g : gs) out.push_back(to_double(g));
  return out;
}

template <typename T>
Eigen::Matrix<T, 3, 3> build_covariance(const Eigen::Quaternion<T>& rot,
                                        const Eigen::Matrix<T, 3, 1>& log_scale) {
  const Eigen::Matrix<T, 3, 3> R = rot.toRotationMatrix();
  const Eigen::Matrix<T, 3, 1> s = log_scale.array().exp();
  Eigen::Matrix<T, 3, 3> L = R;
  L.col(0) *= s.x();
  L.col(1) *= s.y();
  L.col(2) *= s.z();
  return L * L.transpose();
}

template <typename T>
T evaluate_gaussian(const Gaussian3<T>& g, const Eigen::Matrix<T, 3, 1>& x) {
  const Eigen::Matrix<T, 3, 3> sigma = build_covariance(g.rot, g.log_scale);
  const Eigen::Matrix<T, 3, 1> d = x - g.mu;
  const T maha = d.dot(sigma.llt().solve(d));
  return std::exp(T(-0.5) * maha);
}

template <typename T>
std::optional<Splat2<T>> project_to_2d(const Camera& cam, const Gaussian3<T>& g) {
  const Eigen::Matrix<T, 3, 3> W =
      cam.world_to_cam.rotation.toRotationMatrix().cast<T>();
  const Eigen::Matrix<T, 3, 1> t = cam.world_to_cam.translation.cast<T>();
  const Eigen::Matrix<T, 3, 1> p = W * g.mu + t;
  if (p.z() < T(kZNear)) return std::nullopt;

  const T fx = T(cam.fx), fy = T(cam.fy);
  const T x = p.x(), y = p.y(), z = p.z();

  Splat2<T> s;
  s.depth = z;
  s.mean2d.x() = fx * x / z + T(cam.cx);
  s.mean2d.y() = fy * y / z + T(cam.cy);

  Eigen::Matrix<T, 2, 3> J;
  J << fx / z, T(0), -fx * x / (z * z),
       T(0), fy / z, -fy * y / (z * z);
  const Eigen::Matrix<T, 2, 3> M = J * W;
  const Eigen::Matrix<T, 3, 3> sigma3 = build_covariance(g.rot, g.log_scale);
  s.cov2d = M * sigma3 * M.transpose();
  s.cov2d(0, 0) += T(kCov2dInflation);
  s.cov2d(1, 1) += T(kCov2dInflation);

  // Largest eigenvalue of the symmetric 2x2 gives the 99%-mass radius.
  const T mid = (s.cov2d(0, 0) + s.cov2d(1, 1)) / T(2);
  const T det = s.cov2d(0, 0) * s.cov2d(1, 1) - s.cov2d(0, 1) * s.cov2d(1, 0);
  const T lmax = mid + std::sqrt(std::max(T(0), mid * mid - det));
  const T r = std::sqrt(T(kChi2_99_2dof) * lmax);
  if (s.mean2d.x() + r < T(0) || s.mean2d.x() - r > T(cam.width - 1) ||
      s.mean2d.y() + r < T(0) || s.mean2d.y() - r > T(cam.height - 1)) {
    return std::nullopt;
  }

  s.opacity = T(1) / (T(1) + std::exp(-g.opacity_logit));
  s.color = g.color.cwiseMax(T(0)).cwiseMin(T(1));
  return s;
}

void GaussianField::reset_densify_stats() {
  grad2d_accum.assign(gaussians.size(), 0.0f);
  grad2d_count.assign(gaussians.size(), 0);
}

void GaussianField::save(const std::string& path) const {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  CVGS_CHECK_MSG(f != nullptr, "cannot open checkpoint for writing: " << path);
  CVGS_CHECK(std::fwrite(kCheckpointMagic, 1, 8, f.get()) == 8);
  const uint64_t count = gaussians.size();
  CVGS_CHECK(std::fwrite(&count, sizeof(count), 1, f.get()) == 1);
  for (const auto& g : gaussians) {
    float rec[14] = {g.mu.x(),        g.mu.y(),  g.mu.z(),  g.rot.w(),
                     g.rot.x(),       g.rot.y(), g.rot.z(), g.log_scale.x(),
                     g.log_scale.y(), g.log_scale.z(),       g.opacity_logit,
                     g.color.x(),     g.color.y(), g.color.z()};
    CVGS_CHECK(std::fwrite(rec, sizeof(float), 14, f.get()) == 14);
  }
}

GaussianField GaussianField::load(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  CVGS_CHECK_MSG(f != nullptr, "cannot open checkpoint: " << path);
  char magic[8];
  CVGS_CHECK_MSG(std::fread(magic, 1, 8, f.get()) == 8, "truncated checkpoint: " << path);
  CVGS_CHECK_MSG(std::equal(magic, magic + 8, kCheckpointMagic),
                 "bad checkpoint magic in " << path);
  uint64_t count = 0;
  CVGS_CHECK_MSG(std::fread(&count, sizeof(count), 1, f.get()) == 1,
                 "truncated checkpoint: " << path);

  GaussianField field;
  field.gaussians.resize(count);
  for (uint64_t i = 0; i < count; ++i) {
    float rec[14];
    CVGS_CHECK_MSG(std::fread(rec, sizeof(float), 14, f.get()) == 14,
                   "truncated checkpoint: " << path);
    Gaussian3f& g = field.gaussians[i];
    g.mu = Eigen::Vector3f(rec[0], rec[1], rec[2]);
    g.rot = Eigen::Quaternionf(rec[3], rec[4], rec[5], rec[6]);
    g.log_scale = Eigen::Vector3f(rec[7], rec[8], rec[9]);
    g.opacity_logit = rec[10];
    g.color = Eigen::Vector3f(rec[11], rec[12], rec[13]);

    for (const float v : rec) {
      CVGS_CHECK_MSG(std::isfinite(v), "non-finite value in checkpoint " << path);
    }
    CVGS_CHECK_MSG(g.rot.norm() > 1e-6f, "degenerate rotation in checkpoint " << path);
    // Renormalize foreign rotations, but keep already-unit quaternions
    // bit-for-bit: normalize() is not an exact fixed point in f32, and a
    // save/load cycle must not perturb a trained field.
    if (std::abs(g.rot.norm() - 1.0f) > 1e-4f) g.rot.normalize();
    const float lo = std::log(static_cast<float>(kScaleMin));
    const float hi = std::log(static_cast<float>(kScaleMax));
    g.log_scale = g.log_scale.cwiseMax(lo).cwiseMin(hi);
  }
  field.reset_densify_stats();
  return field;
}

template Eigen::Matrix<float, 3, 3> build_covariance(const Eigen::Quaternion<float>&,
                                                     const Eigen::Matrix<float, 3, 1>&);
template Eigen::Matrix<double, 3, 3> build_covariance(const Eigen::Quaternion<double>&,
                                                      const Eigen::Matrix<double, 3, 1>&);
template float evaluate_gaussian(const Gaussian3<float>&, const Eigen::Matrix<float, 3, 1>&);
template double evaluate_gaussian(const Gaussian3<double>&, const Eigen::Matrix<double, 3, 1>&);
template std::optional<Splat2<float>> project_to_2d(const Camera&, const Gaussian3<float>&);
template std::optional<Splat2<double>> project_to_2d(const Camera&, const Gaussian3<double>&);

}  // namespace cvgs
