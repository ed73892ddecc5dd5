// Copyright Contributors to the crossview-gs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cvgs/geometry.h"
#include "cvgs/image.h"
#include "cvgs/io.h"

namespace cvgs {

// Parameters of the procedural road scene. Distances are meters, world frame
// is y-up with the road running along x at y = 0.
struct SceneSpec {
  uint64_t seed = 1;
  double road_length = 40.0;
  double road_width = 8.0;
  int building_count = 12;  // total across both sides of the road
  double building_height_min = 4.0;
  double building_height_max = 9.0;
  double texture_freq = 1.0;  // scales the procedural detail frequencies
  int ground_count = 60;
  int aerial_count = 40;
  int test_count = 12;
  double ground_height_a = 1.5;
  double ground_height_b = 1.8;
  double aerial_height = 10.0;
  double aerial_pitch_deg = 60.0;  // downward from level
  double test_shift = 0.1;         // world-up offset of the shifted splits
  double test_pitch_deg = 5.0;     // extra downward pitch of the rotated split
  int image_width = 240;
  int image_height = 120;
  double focal = 170.0;
  int init_points = 2000;
  Eigen::Vector3d sky{0.55, 0.75, 0.95};

  void validate() const;
  static SceneSpec from_config(const Config& cfg);
  // Key=value echo, the round-trippable record embedded in the manifest.
  std::vector<std::pair<std::string, std::string>> echo() const;
};

enum class Surface : int { kRoad = 0, kShoulder = 1, kWall = 2, kRoof = 3 };

struct Triangle {
  int v0, v1, v2;
  Surface tag;
};

struct TriangleMesh {
  std::vector<Eigen::Vector3d> vertices;
  std::vector<Triangle> faces;
};

// Flat-shaded surface color as a pure function of world position; no
// lighting, so every view observes identical colors.
Eigen::Vector3d albedo(const Eigen::Vector3d& p, Surface tag,
                       const SceneSpec& spec);

enum class SplitId : int {
  kGroundTrain = 0,
  kAerialTrain = 1,
  kHeldOut = 2,
  kShifted = 3,
  kShiftedRot = 4,
};
inline constexpr int kSplitCount = 5;
const char* split_name(SplitId split);
std::optional<SplitId> split_from_name(const std::string& name);

struct PosedCamera {
  std::string id;
  Camera cam;
};

struct SceneBundle {
  SceneSpec spec;
  TriangleMesh mesh;
  std::array<std::vector<PosedCamera>, kSplitCount> splits;

  const std::vector<PosedCamera>& split(SplitId s) const {
    return splits[int(s)];
  }
};

struct PointCloud {
  std::vector<Eigen::Vector3f> positions;
  std::vector<Eigen::Vector3f> colors;
};

// Builds mesh and all five camera splits deterministically from the spec,
// and asserts that at least half of the road surface is visible from both
// the ground and the aerial training splits.
SceneBundle generate_scene(const SceneSpec& spec);

// Derives the view-robustness splits from the held-out cameras: a world-up
// shifted copy, and a shifted copy additionally pitched down about the
// camera's right axis.
void make_test_variants(SceneBundle& bundle);

// Uniform-by-area surface samples kept only when unoccluded in at least
// `min_ground_views` ground cameras; colors come from the albedo.
PointCloud sample_init_points(const TriangleMesh& mesh,
                              const std::vector<PosedCamera>& ground_cams,
                              const SceneSpec& spec, int count,
                              int min_ground_views = 2);

struct GroundTruth {
  ImageF color;  // 3-channel; sky where no geometry
  ImageF depth;  // 1-channel camera-z; NaN where no geometry
};

// Z-buffer rasterization with perspective-correct interpolation and
// near-plane clipping.
GroundTruth render_ground_truth(const TriangleMesh& mesh, const Camera& cam,
                                const SceneSpec& spec);

struct RayHit {
  double t;  // parameter along the (unnormalized) direction
  int face;
};

// Nearest ray/triangle intersection over the whole mesh.
std::optional<RayHit> raycast(const TriangleMesh& mesh,
                              const Eigen::Vector3d& origin,
                              const Eigen::Vector3d& dir);

// Whether any surface lies strictly between origin and origin + t_limit*dir.
bool ray_occluded(const TriangleMesh& mesh, const Eigen::Vector3d& origin,
                  const Eigen::Vector3d& dir, double t_limit,
                  double eps = 1e-4);

// True when `p` projects inside the image in front of the camera and the
// segment from the camera center to `p` is unobstructed.
bool point_visible(const TriangleMesh& mesh, const Camera& cam,
                   const Eigen::Vector3d& p);

}  // namespace cvgs
