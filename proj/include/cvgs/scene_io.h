// Copyright Contributors to the crossview-gs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <string>
#include <vector>

#include "cvgs/scene.h"

namespace cvgs {

// A camera row of the manifest; paths are relative to the manifest's
// directory.
struct LoadedCamera {
  std::string id;
  SplitId split = SplitId::kGroundTrain;
  Camera cam;
  std::string image_path;
  std::string depth_path;
};

struct LoadedScene {
  SceneSpec spec;
  std::array<std::vector<LoadedCamera>, kSplitCount> splits;
  PointCloud points;
  std::string dir;

  const std::vector<LoadedCamera>& split(SplitId s) const {
    return splits[int(s)];
  }
  const LoadedCamera* find_camera(const std::string& id) const;
  std::string resolve(const std::string& rel_path) const;
};

// Renders ground truth for every camera, samples the initialization cloud,
// and lays the scene out under `dir`:
//   manifest.txt, images/*.png, depth/*.ucmap, points.bin
void write_scene(const SceneBundle& bundle, const std::string& dir);

// Parses a "SCENE-UC/1" manifest and the point cloud it references.
LoadedScene load_scene(const std::string& manifest_path);

ImageF load_view_image(const LoadedScene& scene, const LoadedCamera& cam);
ImageF load_view_depth(const LoadedScene& scene, const LoadedCamera& cam);

}  // namespace cvgs
