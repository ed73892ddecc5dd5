// Copyright Contributors to the crossview-gs Project
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <limits>

#include "cvgs/check.h"
#include "cvgs/scene.h"

namespace cvgs {
namespace {

struct ClipVertex {
  Eigen::Vector3d cam;    // camera-space position
  Eigen::Vector3d world;  // carried alongside for shading
};

// Sutherland-Hodgman against the z = kZNear plane. Triangles straddling
// the plane become quads, so up to four vertices come back.
int clip_near(const ClipVertex in[3], ClipVertex out[4]) {
  int n = 0;
  for (int i = 0; i < 3; ++i) {
    const ClipVertex& a = in[i];
    const ClipVertex& b = in[(i + 1) % 3];
    const bool ain = a.cam.z() >= kZNear;
    const bool bin = b.cam.z() >= kZNear;
    if (ain) out[n++] = a;
    if (ain != bin) {
      const double t = (kZNear - a.cam.z()) / (b.cam.z() - a.cam.z());
      out[n++] = {a.cam + t * (b.cam - a.cam), a.world + t * (b.world - a.world)};
    }
  }
  return n;
}

struct PixelHit {
  double depth = std::numeric_limits<double>::infinity();
  Eigen::Vector3d world = Eigen::Vector3d::Zero();
  int face = -1;
};

void raster_triangle(const Camera& cam, const ClipVertex& a,
                     const ClipVertex& b, const ClipVertex& c, int face,
                     std::vector<PixelHit>& buf) {
  Eigen::Vector2d s[3];
  double inv_z[3];
  const ClipVertex* v[3] = {&a, &b, &c};
  for (int i = 0; i < 3; ++i) {
    const Eigen::Vector3d& p = v[i]->cam;
    s[i] = Eigen::Vector2d(cam.fx * p.x() / p.z() + cam.cx,
                           cam.fy * p.y() / p.z() + cam.cy);
    inv_z[i] = 1.0 / p.z();
  }
  const double area = (s[1] - s[0]).x() * (s[2] - s[0]).y() -
                      (s[1] - s[0]).y() * (s[2] - s[0]).x();
  if (std::abs(area) < 1e-12) return;

  const int x0 = std::max(0, int(std::ceil(std::min({s[0].x(), s[1].x(), s[2].x()}))));
  const int x1 = std::min(cam.width - 1,
                          int(std::floor(std::max({s[0].x(), s[1].x(), s[2].x()}))));
  const int y0 = std::max(0, int(std::ceil(std::min({s[0].y(), s[1].y(), s[2].y()}))));
  const int y1 = std::min(cam.height - 1,
                          int(std::floor(std::max({s[0].y(), s[1].y(), s[2].y()}))));

  for (int py = y0; py <= y1; ++py) {
    for (int px = x0; px <= x1; ++px) {
      const Eigen::Vector2d p(px, py);
      // Signed sub-areas normalized by the full area accept either winding.
      const double w0 = ((s[1] - p).x() * (s[2] - p).y() -
                         (s[1] - p).y() * (s[2] - p).x()) / area;
      const double w1 = ((s[2] - p).x() * (s[0] - p).y() -
                         (s[2] - p).y() * (s[0] - p).x()) / area;
      const double w2 = 1.0 - w0 - w1;
      if (w0 < 0 || w1 < 0 || w2 < 0) continue;
      // Perspective-correct: 1/z and world/z interpolate linearly on screen.
      const double izp = w0 * inv_z[0] + w1 * inv_z[1] + w2 * inv_z[2];
      const double z = 1.0 / izp;
      PixelHit& hit = buf[size_t(py) * cam.width + px];
      if (z >= hit.depth) continue;
      const Eigen::Vector3d world =
          (w0 * inv_z[0] * v[0]->world + w1 * inv_z[1] * v[1]->world +
           w2 * inv_z[2] * v[2]->world) * z;
      hit.depth = z;
      hit.world = world;
      hit.face = face;
    }
  }
}

}  // namespace

GroundTruth render_ground_truth(const TriangleMesh& mesh, const Camera& cam,
                                const SceneSpec& spec) {
  cam.validate();
  std::vector<PixelHit> buf(size_t(cam.width) * cam.height);

  for (size_t fi = 0; fi < mesh.faces.size(); ++fi) {
    const Triangle& tri = mesh.faces[fi];
    ClipVertex in[3];
    const int idx[3] = {tri.v0, tri.v1, tri.v2};
    for (int i = 0; i < 3; ++i) {
      const Eigen::Vector3d& w = mesh.vertices[idx[i]];
      in[i] = {cam.world_to_cam.apply(w), w};
    }
    ClipVertex poly[4];
    const int n = clip_near(in, poly);
    for (int i = 2; i < n; ++i) {
      raster_triangle(cam, poly[0], poly[i - 1], poly[i], int(fi), buf);
    }
  }

  GroundTruth gt;
  gt.color = ImageF(cam.width, cam.height, 3);
  gt.depth = ImageF(cam.width, cam.height, 1);
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      const PixelHit& hit = buf[size_t(y) * cam.width + x];
      if (hit.face < 0) {
        for (int c = 0; c < 3; ++c) gt.color.at(x, y, c) = float(spec.sky[c]);
        gt.depth.at(x, y, 0) = std::numeric_limits<float>::quiet_NaN();
        continue;
      }
      const Eigen::Vector3d c =
          albedo(hit.world, mesh.faces[hit.face].tag, spec);
      for (int ch = 0; ch < 3; ++ch) gt.color.at(x, y, ch) = float(c[ch]);
      gt.depth.at(x, y, 0) = float(hit.depth);
    }
  }
  return gt;
}

std::optional<RayHit> raycast(const TriangleMesh& mesh,
                              const Eigen::Vector3d& origin,
                              const Eigen::Vector3d& dir) {
  RayHit best{std::numeric_limits<double>::infinity(), -1};
  for (size_t fi = 0; fi < mesh.faces.size(); ++fi) {
    const Triangle& tri = mesh.faces[fi];
    // Moller-Trumbore.
    const Eigen::Vector3d e1 = mesh.vertices[tri.v1] - mesh.vertices[tri.v0];
    const Eigen::Vector3d e2 = mesh.vertices[tri.v2] - mesh.vertices[tri.v0];
    const Eigen::Vector3d pv = dir.cross(e2);
    const double det = e1.dot(pv);
    if (std::abs(det) < 1e-14) continue;
    const double inv = 1.0 / det;
    const Eigen::Vector3d tv = origin - mesh.vertices[tri.v0];
    const double u = tv.dot(pv) * inv;
    if (u < 0 || u > 1) continue;
    const Eigen::Vector3d qv = tv.cross(e1);
    const double v = dir.dot(qv) * inv;
    if (v < 0 || u + v > 1) continue;
    const double t = e2.dot(qv) * inv;
    if (t > 1e-9 && t < best.t) best = {t, int(fi)};
  }
  if (best.face < 0) return std::nullopt;
  return best;
}

bool ray_occluded(const TriangleMesh& mesh, const Eigen::Vector3d& origin,
                  const Eigen::Vector3d& dir, double t_limit, double eps) {
  for (const Triangle& tri : mesh.faces) {
    const Eigen::Vector3d e1 = mesh.vertices[tri.v1] - mesh.vertices[tri.v0];
    const Eigen::Vector3d e2 = mesh.vertices[tri.v2] - mesh.vertices[tri.v0];
    const Eigen::Vector3d pv = dir.cross(e2);
    const double det = e1.dot(pv);
    if (std::abs(det) < 1e-14) continue;
    const double inv = 1.0 / det;
    const Eigen::Vector3d tv = origin - mesh.vertices[tri.v0];
    const double u = tv.dot(pv) * inv;
    if (u < 0 || u > 1) continue;
    const Eigen::Vector3d qv = tv.cross(e1);
    const double v = dir.dot(qv) * inv;
    if (v < 0 || u + v > 1) continue;
    const double t = e2.dot(qv) * inv;
    if (t > 1e-9 && t < t_limit - eps) return true;
  }
  return false;
}

bool point_visible(const TriangleMesh& mesh, const Camera& cam,
                   const Eigen::Vector3d& p) {
  const auto proj = project_point(cam, p);
  if (proj.behind) return false;
  if (proj.pixel.x() < 0 || proj.pixel.x() > cam.width - 1 ||
      proj.pixel.y() < 0 || proj.pixel.y() > cam.height - 1) {
    return false;
  }
  const Eigen::Vector3d origin = cam.center();
  const Eigen::Vector3d dir = p - origin;
  // dir reaches p at t = 1 by construction.
  return !ray_occluded(mesh, origin, dir, 1.0, 1e-4);
}

}  // namespace cvgs
