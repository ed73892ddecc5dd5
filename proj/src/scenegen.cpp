// Copyright Contributors to the crossview-gs Project
// SPDX-License-Identifier: Apache-2.0

#include "cvgs/scene.h"

#include <cmath>
#include <cstdio>

#include "cvgs/check.h"
#include "cvgs/rng.h"

namespace cvgs {
namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kSidewalkGap = 2.0;   // road edge to building face
constexpr double kBuildingDepth = 6.0; // extent away from the road
constexpr double kShoulderReach = 22.0;

double wrap(double v, double period) {
  return v - period * std::floor(v / period);
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void add_quad(TriangleMesh& mesh, const Eigen::Vector3d& a,
              const Eigen::Vector3d& b, const Eigen::Vector3d& c,
              const Eigen::Vector3d& d, Surface tag) {
  const int base = int(mesh.vertices.size());
  mesh.vertices.push_back(a);
  mesh.vertices.push_back(b);
  mesh.vertices.push_back(c);
  mesh.vertices.push_back(d);
  mesh.faces.push_back({base, base + 1, base + 2, tag});
  mesh.faces.push_back({base, base + 2, base + 3, tag});
}

// Axis-aligned box standing on y=0: four walls plus a roof, no floor.
void add_building(TriangleMesh& mesh, double x0, double x1, double z0,
                  double z1, double h) {
  using V = Eigen::Vector3d;
  add_quad(mesh, V(x0, 0, z0), V(x1, 0, z0), V(x1, h, z0), V(x0, h, z0),
           Surface::kWall);
  add_quad(mesh, V(x0, 0, z1), V(x1, 0, z1), V(x1, h, z1), V(x0, h, z1),
           Surface::kWall);
  add_quad(mesh, V(x0, 0, z0), V(x0, 0, z1), V(x0, h, z1), V(x0, h, z0),
           Surface::kWall);
  add_quad(mesh, V(x1, 0, z0), V(x1, 0, z1), V(x1, h, z1), V(x1, h, z0),
           Surface::kWall);
  add_quad(mesh, V(x0, h, z0), V(x1, h, z0), V(x1, h, z1), V(x0, h, z1),
           Surface::kRoof);
}

// World-to-camera rotation looking along the unit direction `forward` with
// world-up as the vertical reference, then pitched down about the camera's
// right axis.
Eigen::Matrix3d look_rotation(const Eigen::Vector3d& forward,
                              double pitch_down_rad) {
  const Eigen::Vector3d up(0, 1, 0);
  const Eigen::Vector3d right = forward.cross(up).normalized();
  const Eigen::Vector3d down = forward.cross(right).normalized();
  Eigen::Matrix3d base;
  base.row(0) = right;
  base.row(1) = down;
  base.row(2) = forward;
  Eigen::Matrix3d pitch;
  const double c = std::cos(pitch_down_rad), s = std::sin(pitch_down_rad);
  pitch << 1, 0, 0, 0, c, -s, 0, s, c;
  return pitch * base;
}

Camera make_camera(const SceneSpec& spec, const Eigen::Vector3d& pos,
                   double yaw_rad, double pitch_down_rad) {
  Camera cam;
  cam.fx = cam.fy = spec.focal;
  cam.width = spec.image_width;
  cam.height = spec.image_height;
  cam.cx = (spec.image_width - 1) / 2.0;
  cam.cy = (spec.image_height - 1) / 2.0;
  const Eigen::Vector3d forward(std::cos(yaw_rad), 0, std::sin(yaw_rad));
  const Eigen::Matrix3d R = look_rotation(forward, pitch_down_rad);
  cam.world_to_cam.rotation = Eigen::Quaterniond(R).normalized();
  cam.world_to_cam.translation = -(R * pos);
  cam.validate();
  return cam;
}

std::string camera_id(const char* prefix, int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%s%03d", prefix, i);
  return buf;
}

// Fraction of a road-surface grid visible simultaneously from the ground
// and aerial training splits.
double road_covisibility(const SceneBundle& bundle) {
  const SceneSpec& spec = bundle.spec;
  const double step = 0.5;
  int total = 0, covis = 0;
  for (double x = -spec.road_length / 2 + step / 2; x < spec.road_length / 2;
       x += step) {
    for (double z = -spec.road_width / 2 + step / 2; z < spec.road_width / 2;
         z += step) {
      ++total;
      const Eigen::Vector3d p(x, 0, z);
      bool g = false, a = false;
      for (const auto& pc : bundle.split(SplitId::kGroundTrain)) {
        if (point_visible(bundle.mesh, pc.cam, p)) {
          g = true;
          break;
        }
      }
      if (!g) continue;
      for (const auto& pc : bundle.split(SplitId::kAerialTrain)) {
        if (point_visible(bundle.mesh, pc.cam, p)) {
          a = true;
          break;
        }
      }
      if (a) ++covis;
    }
  }
  return total == 0 ? 0.0 : double(covis) / total;
}

}  // namespace

void SceneSpec::validate() const {
  CVGS_CHECK_MSG(road_length > 0 && road_width > 0, "road dimensions must be positive");
  CVGS_CHECK_MSG(building_count >= 0, "negative building count");
  CVGS_CHECK_MSG(building_height_min > 0 &&
                     building_height_max >= building_height_min,
                 "bad building height range");
  CVGS_CHECK_MSG(ground_count >= 2 && aerial_count >= 1 && test_count >= 1,
                 "camera counts too small");
  CVGS_CHECK_MSG(ground_height_a > 0 && ground_height_b > 0 && aerial_height > 0,
                 "camera heights must be positive");
  CVGS_CHECK_MSG(aerial_pitch_deg > 0 && aerial_pitch_deg < 90,
                 "aerial pitch must lie in (0, 90) degrees");
  CVGS_CHECK_MSG(test_pitch_deg > 0 && test_pitch_deg < 90,
                 "test pitch must lie in (0, 90) degrees");
  CVGS_CHECK_MSG(image_width >= 16 && image_height >= 16, "image too small");
  CVGS_CHECK_MSG(focal > 0, "focal must be positive");
  CVGS_CHECK_MSG(init_points > 0, "init point count must be positive");
}

SceneSpec SceneSpec::from_config(const Config& cfg) {
  SceneSpec s;
  s.seed = uint64_t(cfg.get_int("seed", int(s.seed)));
  s.road_length = cfg.get_double("road_length", s.road_length);
  s.road_width = cfg.get_double("road_width", s.road_width);
  s.building_count = cfg.get_int("building_count", s.building_count);
  s.building_height_min = cfg.get_double("building_height_min", s.building_height_min);
  s.building_height_max = cfg.get_double("building_height_max", s.building_height_max);
  s.texture_freq = cfg.get_double("texture_freq", s.texture_freq);
  s.ground_count = cfg.get_int("ground_count", s.ground_count);
  s.aerial_count = cfg.get_int("aerial_count", s.aerial_count);
  s.test_count = cfg.get_int("test_count", s.test_count);
  s.ground_height_a = cfg.get_double("ground_height_a", s.ground_height_a);
  s.ground_height_b = cfg.get_double("ground_height_b", s.ground_height_b);
  s.aerial_height = cfg.get_double("aerial_height", s.aerial_height);
  s.aerial_pitch_deg = cfg.get_double("aerial_pitch_deg", s.aerial_pitch_deg);
  s.test_shift = cfg.get_double("test_shift", s.test_shift);
  s.test_pitch_deg = cfg.get_double("test_pitch_deg", s.test_pitch_deg);
  s.image_width = cfg.get_int("image_width", s.image_width);
  s.image_height = cfg.get_int("image_height", s.image_height);
  s.focal = cfg.get_double("focal", s.focal);
  s.init_points = cfg.get_int("init_points", s.init_points);
  s.sky.x() = cfg.get_double("sky_r", s.sky.x());
  s.sky.y() = cfg.get_double("sky_g", s.sky.y());
  s.sky.z() = cfg.get_double("sky_b", s.sky.z());
  s.validate();
  return s;
}

std::vector<std::pair<std::string, std::string>> SceneSpec::echo() const {
  std::vector<std::pair<std::string, std::string>> kv;
  kv.emplace_back("seed", std::to_string(seed));
  kv.emplace_back("road_length", format_double(road_length));
  kv.emplace_back("road_width", format_double(road_width));
  kv.emplace_back("building_count", std::to_string(building_count));
  kv.emplace_back("building_height_min", format_double(building_height_min));
  kv.emplace_back("building_height_max", format_double(building_height_max));
  kv.emplace_back("texture_freq", format_double(texture_freq));
  kv.emplace_back("ground_count", std::to_string(ground_count));
  kv.emplace_back("aerial_count", std::to_string(aerial_count));
  kv.emplace_back("test_count", std::to_string(test_count));
  kv.emplace_back("ground_height_a", format_double(ground_height_a));
  kv.emplace_back("ground_height_b", format_double(ground_height_b));
  kv.emplace_back("aerial_height", format_double(aerial_height));
  kv.emplace_back("aerial_pitch_deg", format_double(aerial_pitch_deg));
  kv.emplace_back("test_shift", format_double(test_shift));
  kv.emplace_back("test_pitch_deg", format_double(test_pitch_deg));
  kv.emplace_back("image_width", std::to_string(image_width));
  kv.emplace_back("image_height", std::to_string(image_height));
  kv.emplace_back("focal", format_double(focal));
  kv.emplace_back("init_points", std::to_string(init_points));
  kv.emplace_back("sky_r", format_double(sky.x()));
  kv.emplace_back("sky_g", format_double(sky.y()));
  kv.emplace_back("sky_b", format_double(sky.z()));
  return kv;
}

const char* split_name(SplitId split) {
  switch (split) {
    case SplitId::kGroundTrain: return "ground_train";
    case SplitId::kAerialTrain: return "aerial_train";
    case SplitId::kHeldOut: return "heldout";
    case SplitId::kShifted: return "shifted";
    case SplitId::kShiftedRot: return "shifted_rot";
  }
  return "unknown";
}

std::optional<SplitId> split_from_name(const std::string& name) {
  for (int i = 0; i < kSplitCount; ++i) {
    if (name == split_name(SplitId(i))) return SplitId(i);
  }
  return std::nullopt;
}

Eigen::Vector3d albedo(const Eigen::Vector3d& p, Surface tag,
                       const SceneSpec& spec) {
  const double f = spec.texture_freq;
  const double x = p.x(), y = p.y(), z = p.z();
  Eigen::Vector3d c;
  switch (tag) {
    case Surface::kRoad: {
      // Asphalt with coarse mottle plus fine grain, overlaid with paint:
      // a dashed center line, solid edge lines, and periodic crosswalks.
      const double mottle = 0.04 * std::sin(2.3 * f * x) * std::sin(3.1 * f * z + 1.7) +
                            0.02 * std::sin(12.1 * f * x + 0.7) * std::sin(9.7 * f * z);
      const double base = 0.22 + mottle;
      c = Eigen::Vector3d(base, base, base * 1.05);
      const double edge = spec.road_width / 2 - 0.3;
      const bool center_dash = std::abs(z) < 0.15 && wrap(x, 4.0) < 2.2;
      const bool edge_line = std::abs(std::abs(z) - edge) < 0.1;
      const bool crosswalk =
          wrap(x + spec.road_length / 2, 15.0) < 2.5 && wrap(z, 1.2) < 0.6;
      if (crosswalk || center_dash || edge_line) {
        c = Eigen::Vector3d(0.85, 0.85, 0.80);
      }
      break;
    }
    case Surface::kShoulder:
      c = Eigen::Vector3d(
          0.30 + 0.05 * std::sin(1.3 * f * x) * std::sin(1.1 * f * z),
          0.42 + 0.06 * std::sin(0.9 * f * x + 2.0) * std::cos(1.3 * f * z),
          0.22 + 0.03 * std::sin(1.7 * f * x + 0.5));
      break;
    case Surface::kWall: {
      // One wall of each box is axis-aligned, so x+z parameterizes the
      // horizontal position along any wall. Recessed dark windows on a
      // regular grid over a slowly varying facade color.
      const double s = x + z;
      const double wx = wrap(s * f, 2.0);
      const double wy = wrap(y * f, 2.6);
      const bool window = wx > 0.55 && wx < 1.45 && wy > 0.7 && wy < 1.9 && y > 0.5;
      if (window) {
        c = Eigen::Vector3d(0.10, 0.14, 0.18);
      } else {
        c = Eigen::Vector3d(0.50 + 0.12 * std::sin(0.13 * (x - z)),
                            0.45 + 0.10 * std::sin(0.17 * (x + 2 * z) + 1.0),
                            0.40 + 0.05 * std::sin(0.11 * s));
      }
      break;
    }
    case Surface::kRoof: {
      // Terracotta panels with dark seams; a texture only aerial cameras
      // ever observe.
      c = Eigen::Vector3d(0.48 + 0.05 * std::sin(0.4 * f * x), 0.20, 0.14);
      if (wrap(x * f, 1.5) < 0.1 || wrap(z * f, 1.5) < 0.1) c *= 0.55;
      break;
    }
  }
  return c.cwiseMax(0.02).cwiseMin(0.98);
}

SceneBundle generate_scene(const SceneSpec& spec) {
  spec.validate();
  SceneBundle bundle;
  bundle.spec = spec;
  std::mt19937_64 rng(spec.seed);

  using V = Eigen::Vector3d;
  const double hl = spec.road_length / 2;
  const double hw = spec.road_width / 2;
  TriangleMesh& mesh = bundle.mesh;

  add_quad(mesh, V(-hl, 0, -hw), V(hl, 0, -hw), V(hl, 0, hw), V(-hl, 0, hw),
           Surface::kRoad);
  // Shoulder terrain around the road: two long side strips and two end caps.
  const double ext = hl + 10.0;
  add_quad(mesh, V(-ext, 0, hw), V(ext, 0, hw), V(ext, 0, kShoulderReach),
           V(-ext, 0, kShoulderReach), Surface::kShoulder);
  add_quad(mesh, V(-ext, 0, -kShoulderReach), V(ext, 0, -kShoulderReach),
           V(ext, 0, -hw), V(-ext, 0, -hw), Surface::kShoulder);
  add_quad(mesh, V(hl, 0, -hw), V(ext, 0, -hw), V(ext, 0, hw), V(hl, 0, hw),
           Surface::kShoulder);
  add_quad(mesh, V(-ext, 0, -hw), V(-hl, 0, -hw), V(-hl, 0, hw), V(-ext, 0, hw),
           Surface::kShoulder);

  // Buildings flank the road behind a sidewalk gap, alternating sides so
  // both rows fill evenly; jittered spacing avoids a perfectly periodic
  // skyline while staying overlap-free.
  const int per_side = (spec.building_count + 1) / 2;
  for (int i = 0; i < spec.building_count; ++i) {
    const int side = i % 2 == 0 ? 1 : -1;
    const int slot = i / 2;
    const double span = spec.road_length - 4.0;
    const double pitch_x = span / std::max(per_side, 1);
    const double cx = -hl + 2.0 + (slot + 0.5) * pitch_x +
                      rng_uniform(rng, -0.15, 0.15) * pitch_x;
    const double width = rng_uniform(rng, 0.45, 0.7) * pitch_x;
    const double h = rng_uniform(rng, spec.building_height_min,
                                 spec.building_height_max);
    const double z_near = side * (hw + kSidewalkGap);
    const double z_far = side * (hw + kSidewalkGap + kBuildingDepth);
    add_building(mesh, cx - width / 2, cx + width / 2, std::min(z_near, z_far),
                 std::max(z_near, z_far), h);
  }

  // Ground trajectory: forward-facing cameras along the road at the two
  // trained heights, cycling across lanes with a little yaw variety.
  auto& ground = bundle.splits[int(SplitId::kGroundTrain)];
  const double gx0 = -hl + 2.0, gx1 = hl - 8.0;
  const double lanes[3] = {-1.8, 0.0, 1.8};
  for (int i = 0; i < spec.ground_count; ++i) {
    const double t = spec.ground_count == 1 ? 0.5 : double(i) / (spec.ground_count - 1);
    const double h = i % 2 == 0 ? spec.ground_height_a : spec.ground_height_b;
    const double yaw = rng_uniform(rng, -4.0, 4.0) * kPi / 180.0;
    const V pos(gx0 + t * (gx1 - gx0), h, lanes[i % 3]);
    ground.push_back({camera_id("g", i), make_camera(spec, pos, yaw, 0.0)});
  }

  // Held-out cameras sit between the training stations at the same heights.
  auto& heldout = bundle.splits[int(SplitId::kHeldOut)];
  for (int i = 0; i < spec.test_count; ++i) {
    const double t = (i + 0.5) / spec.test_count;
    const double h = i % 2 == 0 ? spec.ground_height_a : spec.ground_height_b;
    const double yaw = rng_uniform(rng, -4.0, 4.0) * kPi / 180.0;
    const V pos(gx0 + t * (gx1 - gx0), h, lanes[(i + 1) % 3]);
    heldout.push_back({camera_id("h", i), make_camera(spec, pos, yaw, 0.0)});
  }

  // Aerial trajectory: pitched-down cameras above either side of the road,
  // alternating heading so both road ends get coverage.
  auto& aerial = bundle.splits[int(SplitId::kAerialTrain)];
  const double ax0 = -hl + 7.0, ax1 = hl - 7.0;
  for (int i = 0; i < spec.aerial_count; ++i) {
    const double t = spec.aerial_count == 1 ? 0.5 : double(i) / (spec.aerial_count - 1);
    const double yaw = (i % 2 == 0 ? 0.0 : 180.0) * kPi / 180.0;
    const double zrow = i % 2 == 0 ? 3.0 : -3.0;
    const V pos(ax0 + t * (ax1 - ax0), spec.aerial_height, zrow);
    aerial.push_back({camera_id("a", i),
                      make_camera(spec, pos, yaw,
                                  spec.aerial_pitch_deg * kPi / 180.0)});
  }

  make_test_variants(bundle);

  // Every camera must image some geometry. A level camera's center ray runs
  // parallel to the ground, so probe a spread of pixels, not just the center.
  for (int s = 0; s < kSplitCount; ++s) {
    for (const auto& pc : bundle.splits[s]) {
      const Eigen::Matrix3d Rt = pc.cam.world_to_cam.rotation_matrix().transpose();
      bool sees = false;
      for (double fy = 0.25; fy <= 0.76 && !sees; fy += 0.25) {
        for (double fx = 0.25; fx <= 0.76 && !sees; fx += 0.25) {
          const Eigen::Vector3d dir =
              Rt * Eigen::Vector3d((fx * (pc.cam.width - 1) - pc.cam.cx) / pc.cam.fx,
                                   (fy * (pc.cam.height - 1) - pc.cam.cy) / pc.cam.fy,
                                   1.0);
          sees = raycast(bundle.mesh, pc.cam.center(), dir).has_value();
        }
      }
      CVGS_CHECK_MSG(sees, "camera " << pc.id << " sees no geometry");
    }
  }

  const double covis = road_covisibility(bundle);
  CVGS_CHECK_MSG(covis >= 0.5, "road co-visibility "
                                   << covis
                                   << " below 0.5; scene unusable for "
                                      "cross-view supervision");
  return bundle;
}

void make_test_variants(SceneBundle& bundle) {
  const SceneSpec& spec = bundle.spec;
  auto& shifted = bundle.splits[int(SplitId::kShifted)];
  auto& rotated = bundle.splits[int(SplitId::kShiftedRot)];
  shifted.clear();
  rotated.clear();
  const Eigen::Vector3d up(0, spec.test_shift, 0);
  int i = 0;
  for (const auto& pc : bundle.split(SplitId::kHeldOut)) {
    Camera s = pc.cam;
    // Keep the rotation, move the center up: p_cam = R p + t with
    // t = -R (c + up).
    s.world_to_cam.translation =
        -(s.world_to_cam.rotation_matrix() * (pc.cam.center() + up));
    shifted.push_back({camera_id("s", i), s});

    Camera r = s;
    const double a = spec.test_pitch_deg * kPi / 180.0;
    Eigen::Matrix3d pitch;
    pitch << 1, 0, 0, 0, std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a);
    // Premultiplying in the camera frame pitches the view down about the
    // camera's right axis while keeping the center fixed.
    const Eigen::Matrix3d R = pitch * s.world_to_cam.rotation_matrix();
    r.world_to_cam.rotation = Eigen::Quaterniond(R).normalized();
    r.world_to_cam.translation = pitch * s.world_to_cam.translation;
    rotated.push_back({camera_id("r", i), r});
    ++i;
  }
}

PointCloud sample_init_points(const TriangleMesh& mesh,
                              const std::vector<PosedCamera>& ground_cams,
                              const SceneSpec& spec, int count,
                              int min_ground_views) {
  CVGS_CHECK_MSG(count > 0, "init point count must be positive");
  CVGS_CHECK_MSG(!ground_cams.empty(), "no ground cameras for visibility");

  std::vector<double> cum_area;
  cum_area.reserve(mesh.faces.size());
  double total = 0;
  for (const auto& tri : mesh.faces) {
    const Eigen::Vector3d e1 = mesh.vertices[tri.v1] - mesh.vertices[tri.v0];
    const Eigen::Vector3d e2 = mesh.vertices[tri.v2] - mesh.vertices[tri.v0];
    total += 0.5 * e1.cross(e2).norm();
    cum_area.push_back(total);
  }
  CVGS_CHECK_MSG(total > 0, "mesh has no area");

  std::mt19937_64 rng(spec.seed ^ 0x9e3779b97f4a7c15ull);
  PointCloud cloud;
  const long max_attempts = 200L * count;
  for (long attempt = 0; attempt < max_attempts && int(cloud.positions.size()) < count;
       ++attempt) {
    const double pick = rng_u01(rng) * total;
    const size_t fi = size_t(
        std::lower_bound(cum_area.begin(), cum_area.end(), pick) - cum_area.begin());
    const auto& tri = mesh.faces[std::min(fi, mesh.faces.size() - 1)];
    // Uniform point in the triangle via the square-root trick.
    const double r1 = std::sqrt(rng_u01(rng));
    const double r2 = rng_u01(rng);
    const Eigen::Vector3d p = (1 - r1) * mesh.vertices[tri.v0] +
                              r1 * (1 - r2) * mesh.vertices[tri.v1] +
                              r1 * r2 * mesh.vertices[tri.v2];
    int seen = 0;
    for (const auto& pc : ground_cams) {
      if (point_visible(mesh, pc.cam, p)) {
        if (++seen >= min_ground_views) break;
      }
    }
    if (seen < min_ground_views) continue;
    cloud.positions.push_back(p.cast<float>());
    cloud.colors.push_back(albedo(p, tri.tag, spec).cast<float>());
  }
  CVGS_CHECK_MSG(!cloud.positions.empty(),
                 "no surface point is visible from " << min_ground_views
                                                     << " ground cameras");
  return cloud;
}

}  // namespace cvgs
