// Copyright Contributors to the crossview-gs Project
// SPDX-License-Identifier: Apache-2.0

#include "cvgs/scene_io.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cvgs/check.h"
#include "cvgs/io.h"

namespace fs = std::filesystem;

namespace cvgs {
namespace {

constexpr const char* kManifestVersion = "SCENE-UC/1";

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_points(const std::string& path, const PointCloud& cloud) {
  std::ofstream out(path, std::ios::binary);
  CVGS_CHECK_MSG(out.good(), "cannot open " << path << " for writing");
  for (size_t i = 0; i < cloud.positions.size(); ++i) {
    out.write(reinterpret_cast<const char*>(cloud.positions[i].data()),
              3 * sizeof(float));
    out.write(reinterpret_cast<const char*>(cloud.colors[i].data()),
              3 * sizeof(float));
  }
  CVGS_CHECK_MSG(out.good(), "short write to " << path);
}

PointCloud read_points(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  CVGS_CHECK_MSG(in.good(), "cannot open point cloud " << path);
  const std::streamoff bytes = in.tellg();
  CVGS_CHECK_MSG(bytes % (6 * sizeof(float)) == 0,
                 path << " is not a whole number of xyzrgb records");
  const size_t count = size_t(bytes) / (6 * sizeof(float));
  in.seekg(0);
  PointCloud cloud;
  cloud.positions.resize(count);
  cloud.colors.resize(count);
  for (size_t i = 0; i < count; ++i) {
    in.read(reinterpret_cast<char*>(cloud.positions[i].data()), 3 * sizeof(float));
    in.read(reinterpret_cast<char*>(cloud.colors[i].data()), 3 * sizeof(float));
  }
  CVGS_CHECK_MSG(in.good(), "truncated point cloud " << path);
  return cloud;
}

}  // namespace

const LoadedCamera* LoadedScene::find_camera(const std::string& id) const {
  for (const auto& split : splits) {
    for (const auto& cam : split) {
      if (cam.id == id) return &cam;
    }
  }
  return nullptr;
}

std::string LoadedScene::resolve(const std::string& rel_path) const {
  return (fs::path(dir) / rel_path).string();
}

void write_scene(const SceneBundle& bundle, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "images");
  fs::create_directories(fs::path(dir) / "depth");

  struct Job {
    const PosedCamera* pc;
    SplitId split;
  };
  std::vector<Job> jobs;
  for (int s = 0; s < kSplitCount; ++s) {
    for (const auto& pc : bundle.splits[s]) jobs.push_back({&pc, SplitId(s)});
  }

  std::vector<GroundTruth> renders(jobs.size());
#pragma omp parallel for schedule(dynamic)
  for (size_t j = 0; j < jobs.size(); ++j) {
    renders[j] = render_ground_truth(bundle.mesh, jobs[j].pc->cam, bundle.spec);
  }

  std::ofstream man(fs::path(dir) / "manifest.txt");
  CVGS_CHECK_MSG(man.good(), "cannot write manifest in " << dir);
  man << kManifestVersion << "\n";
  for (const auto& [k, v] : bundle.spec.echo()) {
    man << "spec " << k << " " << v << "\n";
  }
  man << "points points.bin\n";
  for (size_t j = 0; j < jobs.size(); ++j) {
    const PosedCamera& pc = *jobs[j].pc;
    const std::string image_rel = "images/" + pc.id + ".png";
    const std::string depth_rel = "depth/" + pc.id + ".ucmap";
    write_png((fs::path(dir) / image_rel).string(), renders[j].color);
    write_ucmap((fs::path(dir) / depth_rel).string(), renders[j].depth);

    const Camera& cam = pc.cam;
    const Eigen::Quaterniond& q = cam.world_to_cam.rotation;
    const Eigen::Vector3d& t = cam.world_to_cam.translation;
    man << "camera " << pc.id << " " << split_name(jobs[j].split) << " "
        << cam.width << " " << cam.height << " " << fmt(cam.fx) << " "
        << fmt(cam.fy) << " " << fmt(cam.cx) << " " << fmt(cam.cy) << " "
        << fmt(q.w()) << " " << fmt(q.x()) << " " << fmt(q.y()) << " "
        << fmt(q.z()) << " " << fmt(t.x()) << " " << fmt(t.y()) << " "
        << fmt(t.z()) << " " << image_rel << " " << depth_rel << "\n";
  }
  CVGS_CHECK_MSG(man.good(), "short manifest write in " << dir);
  man.close();

  const PointCloud cloud =
      sample_init_points(bundle.mesh, bundle.split(SplitId::kGroundTrain),
                         bundle.spec, bundle.spec.init_points);
  write_points((fs::path(dir) / "points.bin").string(), cloud);
}

LoadedScene load_scene(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  CVGS_CHECK_MSG(in.good(), "cannot open manifest " << manifest_path);

  LoadedScene scene;
  scene.dir = fs::path(manifest_path).parent_path().string();
  if (scene.dir.empty()) scene.dir = ".";

  std::string line;
  CVGS_CHECK_MSG(std::getline(in, line) && line == kManifestVersion,
                 manifest_path << " is not a " << kManifestVersion
                               << " manifest (got '" << line << "')");

  Config spec_cfg;
  std::string points_rel;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "spec") {
      std::string key, value;
      ls >> key >> value;
      CVGS_CHECK_MSG(!key.empty() && !value.empty(),
                     "bad spec line " << lineno << " in " << manifest_path);
      spec_cfg.set(key, value);
    } else if (tag == "points") {
      ls >> points_rel;
      CVGS_CHECK_MSG(!points_rel.empty(),
                     "bad points line " << lineno << " in " << manifest_path);
    } else if (tag == "camera") {
      LoadedCamera lc;
      std::string split;
      double qw, qx, qy, qz, tx, ty, tz;
      ls >> lc.id >> split >> lc.cam.width >> lc.cam.height >> lc.cam.fx >>
          lc.cam.fy >> lc.cam.cx >> lc.cam.cy >> qw >> qx >> qy >> qz >> tx >>
          ty >> tz >> lc.image_path >> lc.depth_path;
      CVGS_CHECK_MSG(!ls.fail(),
                     "bad camera line " << lineno << " in " << manifest_path);
      const auto sid = split_from_name(split);
      CVGS_CHECK_MSG(sid.has_value(), "unknown split '" << split << "' on line "
                                                        << lineno);
      lc.split = *sid;
      lc.cam.world_to_cam.rotation = Eigen::Quaterniond(qw, qx, qy, qz);
      lc.cam.world_to_cam.translation = Eigen::Vector3d(tx, ty, tz);
      lc.cam.validate();
      scene.splits[int(*sid)].push_back(std::move(lc));
    } else {
      CVGS_CHECK_MSG(false, "unknown manifest tag '" << tag << "' on line "
                                                     << lineno);
    }
  }
  scene.spec = SceneSpec::from_config(spec_cfg);
  CVGS_CHECK_MSG(!points_rel.empty(), manifest_path << " lists no point cloud");
  scene.points = read_points(scene.resolve(points_rel));
  return scene;
}

ImageF load_view_image(const LoadedScene& scene, const LoadedCamera& cam) {
  ImageF img = read_png(scene.resolve(cam.image_path));
  CVGS_CHECK_MSG(img.width == cam.cam.width && img.height == cam.cam.height,
                 "image " << cam.image_path << " does not match camera size");
  return img;
}

ImageF load_view_depth(const LoadedScene& scene, const LoadedCamera& cam) {
  ImageF depth = read_ucmap(scene.resolve(cam.depth_path));
  CVGS_CHECK_MSG(depth.width == cam.cam.width && depth.height == cam.cam.height,
                 "depth " << cam.depth_path << " does not match camera size");
  return depth;
}

}  // namespace cvgs
