// Copyright Contributors to the crossview-gs Project
// SPDX-License-Identifier: Apache-2.0

#include "cvgs/uncertainty.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <vector>

#include "cvgs/check.h"

namespace cvgs {

namespace {

// Order-independent mean/variance of a small sample. Sorting first makes the
// reduction invariant to the caller's ordering; taking deviations against the
// smallest element makes an all-equal sample come out with exactly zero
// variance instead of picking up rounding from the division by count.
struct MeanVar {
  double mean = 0;
  double var = 0;
};

MeanVar sorted_mean_var(std::vector<double>& vals) {
  std::sort(vals.begin(), vals.end());
  const double base = vals.front();
  const double inv_n = 1.0 / static_cast<double>(vals.size());
  double shifted_sum = 0;
  for (double v : vals) shifted_sum += v - base;
  const double shifted_mean = shifted_sum * inv_n;
  double sq = 0;
  for (double v : vals) {
    const double d = (v - base) - shifted_mean;
    sq += d * d;
  }
  return {base + shifted_mean, sq * inv_n};
}

void check_same_shape(const std::vector<ImageF>& images, int channels,
                      const char* what) {
  CVGS_CHECK_MSG(!images.empty(), what << ": empty image list");
  for (const ImageF& im : images) {
    CVGS_CHECK_MSG(im.width == images.front().width &&
                       im.height == images.front().height,
                   what << ": inconsistent image sizes");
    CVGS_CHECK_MSG(im.channels == channels,
                   what << ": expected " << channels << " channel(s), got "
                        << im.channels);
  }
}

void check_camera_image(const Camera& cam, const ImageF& im, const char* what) {
  CVGS_CHECK_MSG(im.width == cam.width && im.height == cam.height,
                 what << ": image size " << im.width << "x" << im.height
                      << " does not match camera " << cam.width << "x"
                      << cam.height);
}

}  // namespace

EnsembleStats ensemble_stats(const std::vector<ImageF>& renders) {
  CVGS_CHECK_MSG(renders.size() >= 2,
                 "ensemble_stats: need at least 2 members, got "
                     << renders.size());
  check_same_shape(renders, renders.front().channels, "ensemble_stats");
  const int w = renders.front().width;
  const int h = renders.front().height;
  const int c = renders.front().channels;
  EnsembleStats out{ImageF(w, h, c), ImageF(w, h, c)};
  const size_t n = renders.front().data.size();
  const size_t m = renders.size();
#pragma omp parallel
  {
    std::vector<double> vals(m);
#pragma omp for schedule(static)
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
      for (size_t k = 0; k < m; ++k) vals[k] = renders[k].data[i];
      const MeanVar mv = sorted_mean_var(vals);
      out.mean.data[i] = static_cast<float>(mv.mean);
      out.variance.data[i] = static_cast<float>(mv.var);
    }
  }
  return out;
}

ImageF fuse_channels(const ImageF& variance) {
  CVGS_CHECK_MSG(variance.channels == 3,
                 "fuse_channels: expected 3 channels, got " << variance.channels);
  ImageF fused(variance.width, variance.height, 1);
  const size_t pixels = fused.data.size();
  for (size_t i = 0; i < pixels; ++i) {
    double acc = 0;
    for (int ch = 0; ch < 3; ++ch) {
      const float v = variance.data[i * 3 + ch];
      CVGS_CHECK_MSG(v >= 0.0f, "fuse_channels: negative variance " << v);
      acc += std::log1p(static_cast<double>(v));
    }
    fused.data[i] = static_cast<float>(acc / 3.0);
  }
  return fused;
}

ImageF ensemble_mean_depth(const std::vector<ImageF>& depths) {
  CVGS_CHECK_MSG(!depths.empty(), "ensemble_mean_depth: empty depth list");
  check_same_shape(depths, 1, "ensemble_mean_depth");
  const int w = depths.front().width;
  const int h = depths.front().height;
  ImageF mean(w, h, 1);
  const size_t n = mean.data.size();
  const size_t m = depths.size();
  std::vector<double> vals(m);
  for (size_t i = 0; i < n; ++i) {
    bool all_valid = true;
    for (size_t k = 0; k < m; ++k) {
      vals[k] = depths[k].data[i];
      all_valid = all_valid && pixel_valid(depths[k].data[i]);
    }
    if (!all_valid) {
      mean.data[i] = std::numeric_limits<float>::quiet_NaN();
      continue;
    }
    mean.data[i] = static_cast<float>(sorted_mean_var(vals).mean);
  }
  return mean;
}

std::vector<ImageF> project_uncertainty(const ProjectionInputs& in,
                                        std::vector<MatchSet>* matches) {
  CVGS_CHECK_MSG(in.ground_cams.size() == in.ground_maps.size() &&
                     in.ground_cams.size() == in.ground_depths.size(),
                 "project_uncertainty: ground camera/map/depth counts differ");
  CVGS_CHECK_MSG(in.aerial_cams.size() == in.aerial_depths.size(),
                 "project_uncertainty: aerial camera/depth counts differ");
  CVGS_CHECK_MSG(!in.ground_cams.empty(), "project_uncertainty: no ground views");
  CVGS_CHECK_MSG(!in.aerial_cams.empty(), "project_uncertainty: no aerial views");
  CVGS_CHECK_MSG(in.tau_occ >= 0, "project_uncertainty: negative tau_occ");
  for (size_t g = 0; g < in.ground_cams.size(); ++g) {
    in.ground_cams[g].validate();
    CVGS_CHECK_MSG(in.ground_maps[g].channels == 1 &&
                       in.ground_depths[g].channels == 1,
                   "project_uncertainty: ground maps must be single channel");
    check_camera_image(in.ground_cams[g], in.ground_maps[g],
                       "project_uncertainty");
    check_camera_image(in.ground_cams[g], in.ground_depths[g],
                       "project_uncertainty");
  }
  for (size_t a = 0; a < in.aerial_cams.size(); ++a) {
    in.aerial_cams[a].validate();
    CVGS_CHECK_MSG(in.aerial_depths[a].channels == 1,
                   "project_uncertainty: aerial depths must be single channel");
    check_camera_image(in.aerial_cams[a], in.aerial_depths[a],
                       "project_uncertainty");
  }

  // Unproject every valid ground pixel once; the per-aerial loops below only
  // reproject these shared world points.
  struct GroundPoint {
    Eigen::Vector3d world;
    float value;
  };
  std::vector<GroundPoint> points;
  for (size_t g = 0; g < in.ground_cams.size(); ++g) {
    const Camera& cam = in.ground_cams[g];
    const ImageF& map = in.ground_maps[g];
    const ImageF& depth = in.ground_depths[g];
    for (int y = 0; y < cam.height; ++y) {
      for (int x = 0; x < cam.width; ++x) {
        const float d = depth.at(x, y, 0);
        if (!pixel_valid(d)) continue;
        CVGS_CHECK_MSG(d > 0, "project_uncertainty: non-positive depth " << d);
        points.push_back(
            {unproject_pixel(cam, Eigen::Vector2d(x, y), d), map.at(x, y, 0)});
      }
    }
  }

  std::vector<ImageF> out(in.aerial_cams.size());
  if (matches) {
    matches->assign(in.aerial_cams.size(), MatchSet{});
  }
#pragma omp parallel for schedule(dynamic)
  for (long long a = 0; a < static_cast<long long>(in.aerial_cams.size()); ++a) {
    const Camera& cam = in.aerial_cams[a];
    const ImageF& aerial_depth = in.aerial_depths[a];
    std::vector<double> sum(static_cast<size_t>(cam.width) * cam.height, 0.0);
    std::vector<int> count(sum.size(), 0);
    std::vector<std::vector<float>> lists;
    if (matches) lists.resize(sum.size());
    for (const GroundPoint& gp : points) {
      const PointProjection proj = project_point(cam, gp.world);
      if (proj.behind) continue;
      const long px = std::lround(proj.pixel.x());
      const long py = std::lround(proj.pixel.y());
      if (px < 0 || px >= cam.width || py < 0 || py >= cam.height) continue;
      const float ad = aerial_depth.at(static_cast<int>(px),
                                       static_cast<int>(py), 0);
      if (pixel_valid(ad) && proj.depth > static_cast<double>(ad) + in.tau_occ) {
        continue;  // hidden behind aerial geometry
      }
      const size_t idx = static_cast<size_t>(py) * cam.width + px;
      sum[idx] += static_cast<double>(gp.value);
      ++count[idx];
      if (matches) lists[idx].push_back(gp.value);
    }
    ImageF map(cam.width, cam.height, 1,
               std::numeric_limits<float>::quiet_NaN());
    for (size_t i = 0; i < sum.size(); ++i) {
      if (count[i] > 0) {
        map.data[i] = static_cast<float>(sum[i] / count[i]);
      }
    }
    out[a] = std::move(map);
    if (matches) {
      MatchSet& ms = (*matches)[a];
      for (size_t i = 0; i < lists.size(); ++i) {
        if (!lists[i].empty()) {
          ms.entries.push_back({static_cast<int>(i), std::move(lists[i])});
        }
      }
    }
  }
  return out;
}

NormalizedMaps normalize_maps(const std::vector<ImageF>& raw, double n,
                              bool quiet) {
  CVGS_CHECK_MSG(!raw.empty(), "normalize_maps: no maps");
  CVGS_CHECK_MSG(n >= 1.0, "normalize_maps: root order must be >= 1, got " << n);
  for (const ImageF& m : raw) {
    CVGS_CHECK_MSG(m.channels == 1, "normalize_maps: maps must be single channel");
  }

  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const ImageF& m : raw) {
    for (float v : m.data) {
      if (!pixel_valid(v)) continue;
      lo = std::min(lo, static_cast<double>(v));
      hi = std::max(hi, static_cast<double>(v));
    }
  }

  NormalizedMaps out;
  out.maps.reserve(raw.size());
  if (!(hi > lo)) {  // no valid pixels, or a flat field
    out.degenerate = true;
    if (!quiet) {
      std::fprintf(stderr,
                   "normalize_maps: degenerate value spread (max == min); "
                   "emitting all-zero maps\n");
    }
    for (const ImageF& m : raw) {
      out.maps.emplace_back(m.width, m.height, 1, 0.0f);
    }
    return out;
  }

  const double inv_span = 1.0 / (hi - lo);
  const double inv_n = 1.0 / n;
  for (const ImageF& m : raw) {
    ImageF norm(m.width, m.height, 1, 0.0f);
    for (size_t i = 0; i < m.data.size(); ++i) {
      const float v = m.data[i];
      if (!pixel_valid(v)) continue;
      const double scaled = static_cast<double>(v) * inv_span;
      const double rooted = std::pow(std::max(scaled, 0.0), inv_n);
      norm.data[i] = static_cast<float>(std::clamp(rooted, 0.0, 1.0));
    }
    out.maps.push_back(std::move(norm));
  }
  return out;
}

CrossViewWeights build_cross_view_weights(
    const std::vector<std::vector<Gaussian3f>>& members,
    const std::vector<Camera>& ground_cams,
    const std::vector<Camera>& aerial_cams, const RenderOptions& opt,
    double n_root, double tau_occ, bool quiet) {
  CVGS_CHECK_MSG(members.size() >= 2,
                 "build_cross_view_weights: need at least 2 ensemble members");
  ProjectionInputs in;
  in.ground_cams = ground_cams;
  in.aerial_cams = aerial_cams;
  in.tau_occ = tau_occ;

  for (const Camera& cam : ground_cams) {
    std::vector<ImageF> colors;
    std::vector<ImageF> depths;
    colors.reserve(members.size());
    depths.reserve(members.size());
    for (const std::vector<Gaussian3f>& field : members) {
      RenderOutputT<float> render_out = render(field, cam, opt);
      colors.push_back(std::move(render_out.color));
      depths.push_back(std::move(render_out.depth));
    }
    const EnsembleStats stats = ensemble_stats(colors);
    in.ground_maps.push_back(fuse_channels(stats.variance));
    in.ground_depths.push_back(ensemble_mean_depth(depths));
  }
  for (const Camera& cam : aerial_cams) {
    std::vector<ImageF> depths;
    depths.reserve(members.size());
    for (const std::vector<Gaussian3f>& field : members) {
      depths.push_back(render_depth(field, cam, opt));
    }
    in.aerial_depths.push_back(ensemble_mean_depth(depths));
  }

  CrossViewWeights out;
  out.raw_aerial = project_uncertainty(in);
  NormalizedMaps norm = normalize_maps(out.raw_aerial, n_root, quiet);
  out.weights = std::move(norm.maps);
  out.degenerate = norm.degenerate;
  return out;
}

}  // namespace cvgs
