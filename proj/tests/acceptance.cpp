// Copyright Contributors to the crossview-gs Project
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end acceptance gate. Each numbered check prints exactly one
// PASS/FAIL line with a short measurement summary; the process exits
// nonzero if any check fails. Usage: cvgs_acceptance <path-to-cvgs-cli>

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cvgs/check.h"
#include "cvgs/gaussian.h"
#include "cvgs/geometry.h"
#include "cvgs/image.h"
#include "cvgs/io.h"
#include "cvgs/losses.h"
#include "cvgs/pipeline.h"
#include "cvgs/rasterizer.h"
#include "cvgs/reference_renderer.h"
#include "cvgs/scene.h"
#include "cvgs/scene_io.h"
#include "cvgs/trainer.h"
#include "cvgs/uncertainty.h"
#include "test_util.h"

using namespace cvgs;
using testutil::make_rng;
using testutil::random_uniform;
using testutil::random_unit_quat;
using testutil::random_vec3;

namespace {

constexpr float kNaN = std::numeric_limits<float>::quiet_NaN();

int g_failures = 0;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

void report(int index, const char* name, bool ok, const std::string& detail) {
  std::printf("%s: criterion %d (%s): %s\n", ok ? "PASS" : "FAIL", index, name,
              detail.c_str());
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

std::string format(const char* fmt, ...) {
  char buf[1024];
  va_list args;
  va_start(args, fmt);
  std::vsnprintf(buf, sizeof(buf), fmt, args);
  va_end(args);
  return buf;
}

std::string acceptance_dir(const std::string& leaf) {
  const auto dir =
      std::filesystem::temp_directory_path() / "cvgs_acceptance" / leaf;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

// ---------------------------------------------------------------------------
// 1. Training-objective gradients vs central finite differences.

Camera square_camera(int size, double f) {
  Camera cam;
  cam.width = cam.height = size;
  cam.fx = cam.fy = f;
  cam.cx = cam.cy = (size - 1) / 2.0;
  return cam;
}

// Wide, soft splats in front of the camera: every support box spans the
// whole image and blending stays far from the transmittance cutoff, so the
// objective is smooth at the finite-difference scale.
std::vector<Gaussian3d> smooth_field(std::mt19937_64& rng, int count) {
  std::vector<Gaussian3d> field(count);
  for (auto& g : field) {
    g.mu = Eigen::Vector3d(random_uniform(rng, -0.3, 0.3),
                           random_uniform(rng, -0.3, 0.3),
                           random_uniform(rng, 0.8, 1.5));
    g.rot = random_unit_quat(rng);
    g.log_scale = random_vec3(rng, std::log(0.5), std::log(1.2));
    g.opacity_logit = random_uniform(rng, -3.0, -0.3);
    g.color = random_vec3(rng, 0.1, 0.9);
  }
  return field;
}

template <typename T>
T* param_ptr(Gaussian3<T>* g, int j) {
  switch (j) {
    case 0: case 1: case 2: return &g->mu[j];
    case 3: return &g->rot.w();
    case 4: return &g->rot.x();
    case 5: return &g->rot.y();
    case 6: return &g->rot.z();
    case 7: case 8: case 9: return &g->log_scale[j - 7];
    case 10: return &g->opacity_logit;
    default: return &g->color[j - 11];
  }
}

template <typename T>
double grad_component(const ParamGrad<T>& pg, int j) {
  switch (j) {
    case 0: case 1: case 2: return pg.d_mu[j];
    case 3: case 4: case 5: case 6: return pg.d_rot[j - 3];
    case 7: case 8: case 9: return pg.d_log_scale[j - 7];
    case 10: return pg.d_opacity_logit;
    default: return pg.d_color[j - 11];
  }
}

double objective_f64(const std::vector<Gaussian3d>& field, const Camera& cam,
                     const RenderOptions& opt, const ImageD& weights,
                     const ImageD& target) {
  const auto out = render(field, cam, opt);
  return total_loss(weights, out.color, target, field).total;
}

// Analytic gradient of the full objective w.r.t. parameter j of Gaussian
// gi: rasterizer backward plus the volume-regularizer scale term.
template <typename T>
double full_gradient(const std::vector<Gaussian3<T>>& field, const Camera& cam,
                     const RenderOptions& opt, const ImageT<T>& weights,
                     const ImageT<T>& target, size_t gi, int j) {
  const auto out = render(field, cam, opt);
  const auto lb = total_loss(weights, out.color, target, field);
  const auto grads = render_backward(field, cam, opt, out, lb.d_color, lb.d_alpha);
  double g = grad_component(grads.params[gi], j);
  if (j >= 7 && j <= 9) g += double(lb.d_log_scale[gi][j - 7]);
  return g;
}

void criterion_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  auto rng = make_rng(401);
  const Camera cam = square_camera(16, 20.0);
  RenderOptions opt;
  opt.background = Eigen::Vector3d(0.25, 0.2, 0.3);

  int checked = 0;
  double worst32 = 0, worst64 = 0;
  bool ok = true;
  for (int trial = 0; trial < 20; ++trial) {
    const int count = 3 + trial % 8;  // 3..10 Gaussians
    auto field = smooth_field(rng, count);
    ImageD weights(16, 16, 1);
    for (auto& v : weights.data) v = random_uniform(rng, 0.25, 1.75);

    // The photometric term is an absolute difference, so its derivative
    // jumps wherever a rendered channel crosses its target. Offsetting the
    // target 0.05 from the unperturbed render keeps every kink two orders
    // of magnitude outside the finite-difference window; a target touching
    // a kink would corrupt the difference quotient without any gradient
    // being wrong.
    ImageD target(16, 16, 3);
    {
      const auto base = render(field, cam, opt);
      for (size_t i = 0; i < target.data.size(); ++i) {
        const double c = base.color.data[i];
        target.data[i] = c > 0.5 ? c - 0.05 : c + 0.05;
      }
    }

    // f32 mirror of the same configuration.
    std::vector<Gaussian3f> field32(count);
    for (int i = 0; i < count; ++i) {
      field32[i].mu = field[i].mu.cast<float>();
      field32[i].rot = field[i].rot.cast<float>();
      field32[i].log_scale = field[i].log_scale.cast<float>();
      field32[i].opacity_logit = float(field[i].opacity_logit);
      field32[i].color = field[i].color.cast<float>();
    }
    const ImageF weights32 = weights.cast<float>();
    const ImageF target32 = target.cast<float>();

    // One backward pass per precision serves every parameter.
    const auto out64 = render(field, cam, opt);
    const auto lb64 = total_loss(weights, out64.color, target, field);
    const auto g64 =
        render_backward(field, cam, opt, out64, lb64.d_color, lb64.d_alpha);
    const auto out32 = render(field32, cam, opt);
    const auto lb32 = total_loss(weights32, out32.color, target32, field32);
    const auto g32 =
        render_backward(field32, cam, opt, out32, lb32.d_color, lb32.d_alpha);

    const double h = 1e-4;
    for (size_t gi = 0; gi < field.size(); ++gi) {
      for (int j = 0; j < 14; ++j) {
        double* p = param_ptr(&field[gi], j);
        const double saved = *p;
        *p = saved + h;
        const double lp = objective_f64(field, cam, opt, weights, target);
        *p = saved - h;
        const double lm = objective_f64(field, cam, opt, weights, target);
        *p = saved;
        const double fd = (lp - lm) / (2 * h);

        double an64 = grad_component(g64.params[gi], j);
        double an32 = grad_component(g32.params[gi], j);
        if (j >= 7 && j <= 9) {
          an64 += lb64.d_log_scale[gi][j - 7];
          an32 += double(lb32.d_log_scale[gi][j - 7]);
        }
        const double e64 =
            std::abs(fd - an64) / std::max({std::abs(fd), std::abs(an64), 1e-3});
        const double e32 =
            std::abs(fd - an32) / std::max({std::abs(fd), std::abs(an32), 1e-3});
        worst64 = std::max(worst64, e64);
        worst32 = std::max(worst32, e32);
        ++checked;
      }
    }
  }
  const double secs = seconds_since(t0);
  ok = worst32 < 1e-3 && worst64 < 1e-6 && secs < 120.0;
  report(1, "objective gradients match finite differences", ok,
         format("%d parameter checks over 20 configs; max rel err %.3g (f32, "
                "tol 1e-3) / %.3g (f64, tol 1e-6); %.1fs (limit 120s)",
                checked, worst32, worst64, secs));
}

// ---------------------------------------------------------------------------
// 2. Tiled renderer vs brute-force full-sort reference.

void criterion_render_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  auto rng = make_rng(402);
  const Camera cam = [&] {
    Camera c = square_camera(32, 24.0);
    c.width = 48;
    c.cx = (48 - 1) / 2.0;
    return c;
  }();
  RenderOptions opt;
  opt.background = Eigen::Vector3d(0.15, 0.45, 0.3);

  double worst = 0;
  for (int scene = 0; scene < 10; ++scene) {
    const int count = 40 + scene * 12;
    std::vector<Gaussian3d> field(count);
    for (auto& g : field) {
      const double z = random_uniform(rng, 0.6, 5.0);
      g.mu = Eigen::Vector3d(random_uniform(rng, -1.2, 1.2),
                             random_uniform(rng, -0.8, 0.8), z);
      g.rot = random_unit_quat(rng);
      g.log_scale = random_vec3(rng, std::log(0.01), std::log(0.25));
      g.opacity_logit = random_uniform(rng, -2.5, 2.5);
      g.color = random_vec3(rng, 0.0, 1.0);
    }
    std::vector<Gaussian3f> field32(count);
    for (int i = 0; i < count; ++i) {
      field32[i].mu = field[i].mu.cast<float>();
      field32[i].rot = field[i].rot.cast<float>();
      field32[i].log_scale = field[i].log_scale.cast<float>();
      field32[i].opacity_logit = float(field[i].opacity_logit);
      field32[i].color = field[i].color.cast<float>();
    }

    const auto tiled = render(field32, cam, opt);
    const auto ref = render_reference(field, cam, opt);
    for (size_t i = 0; i < tiled.color.data.size(); ++i) {
      worst = std::max(worst,
                       std::abs(double(tiled.color.data[i]) - ref.color.data[i]));
    }
    for (size_t i = 0; i < tiled.alpha.data.size(); ++i) {
      worst = std::max(worst,
                       std::abs(double(tiled.alpha.data[i]) - ref.alpha.data[i]));
    }
  }
  const double secs = seconds_since(t0);
  const bool ok = worst <= 1e-4 && secs < 60.0;
  report(2, "tiled render matches the full-sort reference", ok,
         format("10 scenes at 48x32; max per-channel deviation %.3g "
                "(tol 1e-4); %.1fs (limit 60s)",
                worst, secs));
}

// ---------------------------------------------------------------------------
// 3. Uncertainty arithmetic on hand-computed values.

Camera oriented_cam(int w, int h, double f, const Eigen::Matrix3d& rows,
                    const Eigen::Vector3d& center) {
  Camera cam;
  cam.width = w;
  cam.height = h;
  cam.fx = cam.fy = f;
  cam.cx = (w - 1) / 2.0;
  cam.cy = (h - 1) / 2.0;
  cam.world_to_cam.rotation = Eigen::Quaterniond(rows).normalized();
  cam.world_to_cam.translation = -(rows * center);
  return cam;
}

void criterion_uncertainty_chain() {
  const auto t0 = std::chrono::steady_clock::now();
  bool ok = true;
  std::string why;

  // Two-member statistics at values 0 and 1: mean 1/2, variance 1/4, both
  // exact in float.
  {
    const std::vector<ImageF> members = {ImageF(2, 1, 3, 0.0f),
                                         ImageF(2, 1, 3, 1.0f)};
    const EnsembleStats stats = ensemble_stats(members);
    for (const float m : stats.mean.data) {
      if (m != 0.5f) { ok = false; why = "mean(0,1) != 0.5 exactly"; }
    }
    for (const float v : stats.variance.data) {
      if (v != 0.25f) { ok = false; why = "var(0,1) != 0.25 exactly"; }
    }
  }
  // Identical members: exactly zero variance.
  {
    auto rng = make_rng(403);
    ImageF img(5, 4, 3);
    for (auto& v : img.data) v = float(random_uniform(rng, 0.0, 1.0));
    const EnsembleStats stats = ensemble_stats({img, img, img});
    for (const float v : stats.variance.data) {
      if (v != 0.0f) { ok = false; why = "identical members gave nonzero variance"; }
    }
  }
  // Channel fusion: (0,0,0) -> exactly 0; (e-1,e-1,e-1) -> 1; and the
  // hand-computed log-average for (0.1,0.2,0.3). The latter two pass
  // through float transcendentals, so they carry a 1e-6 tolerance.
  {
    ImageF var(3, 1, 3, 0.0f);
    for (int c = 0; c < 3; ++c) {
      var.at(1, 0, c) = float(M_E - 1.0);
      var.at(2, 0, c) = 0.1f * float(c + 1);
    }
    const ImageF fused = fuse_channels(var);
    const double hand2 = (std::log(1.1) + std::log(1.2) + std::log(1.3)) / 3.0;
    if (fused.at(0, 0, 0) != 0.0f) { ok = false; why = "fuse(0,0,0) != 0"; }
    if (std::abs(fused.at(1, 0, 0) - 1.0) > 1e-6) {
      ok = false;
      why = "fuse(e-1) != 1";
    }
    if (std::abs(fused.at(2, 0, 0) - hand2) > 1e-6) {
      ok = false;
      why = "fuse(0.1,0.2,0.3) mismatch";
    }
    if (std::abs(hand2 - 0.17999866702192355) > 1e-12) {
      ok = false;
      why = "fusion oracle drifted from hand value";
    }
  }
  // Range normalization: span 2, value 0.5 -> 0.25 at n=1 and 0.25^(1/6)
  // at n=6; the map maximum lands exactly on 1 and zero stays exactly 0.
  {
    ImageF raw(3, 1, 1);
    raw.at(0, 0, 0) = 0.0f;
    raw.at(1, 0, 0) = 0.5f;
    raw.at(2, 0, 0) = 2.0f;
    for (const double n : {1.0, 2.0, 6.0, 10.0}) {
      const NormalizedMaps norm = normalize_maps({raw}, n, true);
      if (norm.degenerate) { ok = false; why = "normalization degenerate"; }
      if (norm.maps[0].at(0, 0, 0) != 0.0f) {
        ok = false;
        why = "zero did not stay zero";
      }
      if (norm.maps[0].at(2, 0, 0) != 1.0f) {
        ok = false;
        why = "max value did not normalize to 1";
      }
      const double expect = std::pow(0.25, 1.0 / n);
      if (std::abs(norm.maps[0].at(1, 0, 0) - expect) > 1e-6) {
        ok = false;
        why = format("0.25^(1/%g) mismatch", n);
      }
    }
    const double hand = std::pow(0.25, 1.0 / 6.0);
    if (std::abs(hand - 0.79370052598409979) > 1e-15) {
      ok = false;
      why = "sixth-root oracle drifted";
    }
  }
  // Identical ensemble members: the whole chain collapses to all-zero
  // weight maps.
  {
    auto rng = make_rng(404);
    std::vector<Gaussian3f> field(24);
    for (auto& g : field) {
      g.mu = random_vec3(rng, -0.8, 0.8).cast<float>();
      g.rot = random_unit_quat(rng).cast<float>();
      g.log_scale =
          Eigen::Vector3f::Constant(float(random_uniform(rng, std::log(0.05), std::log(0.3))));
      g.opacity_logit = float(random_uniform(rng, -1.0, 1.0));
      g.color = random_vec3(rng, 0.1, 0.9).cast<float>();
    }
    const Camera ground =
        oriented_cam(32, 20, 24.0, Eigen::Matrix3d::Identity(),
                     Eigen::Vector3d(0, 0, -3));
    Eigen::Matrix3d rows;
    rows << 1, 0, 0, 0, 0, 1, 0, -1, 0;
    const Camera aerial = oriented_cam(32, 20, 24.0, rows,
                                       Eigen::Vector3d(0, 4, 0));
    const std::vector<std::vector<Gaussian3f>> members(4, field);
    const CrossViewWeights weights = build_cross_view_weights(
        members, {ground}, {aerial}, RenderOptions{}, 6.0, 0.1, true);
    if (!weights.degenerate) { ok = false; why = "identical members not degenerate"; }
    for (const auto& map : weights.weights) {
      for (const float v : map.data) {
        if (v != 0.0f) { ok = false; why = "identical members gave nonzero weight"; }
      }
    }
  }

  const double secs = seconds_since(t0);
  ok = ok && secs < 30.0;
  report(3, "uncertainty arithmetic reproduces hand values", ok,
         ok ? format("stats/fusion/normalization exact, including "
                     "0.25^(1/6)=0.793701; identical members -> all-zero "
                     "maps; %.1fs",
                     secs)
            : why);
}

// ---------------------------------------------------------------------------
// 4. Ground->aerial projection vs the closed-form plane homography.

void criterion_projection() {
  const auto t0 = std::chrono::steady_clock::now();
  const int w = 48, h = 32;
  const double f = 40.0;
  const double a = -25.0 * M_PI / 180.0;
  Eigen::Matrix3d tilt;
  tilt << 1, 0, 0, 0, std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a);
  const Camera ground = oriented_cam(w, h, f, tilt, {0.0, 1.5, -4.0});
  Eigen::Matrix3d rows;
  rows << 1, 0, 0, 0, 0, 1, 0, -1, 0;
  const Camera aerial = oriented_cam(w, h, f, rows, {0.0, 8.0, 0.0});

  // Analytic ray/plane depths over the ground plane y=0; map values encode
  // the source pixel id so every contribution can be traced back.
  ImageF depth(w, h, 1, kNaN);
  ImageF value(w, h, 1, 0.0f);
  const Eigen::Matrix3d r_g = ground.world_to_cam.rotation_matrix();
  const Eigen::Vector3d c_g = ground.center();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Eigen::Vector3d v_cam((x - ground.cx) / ground.fx,
                                  (y - ground.cy) / ground.fy, 1.0);
      const Eigen::Vector3d dir = r_g.transpose() * v_cam;
      if (dir.y() >= -1e-9) continue;
      const double s = -c_g.y() / dir.y();
      if (s <= kZNear) continue;
      depth.at(x, y, 0) = float(s);
      value.at(x, y, 0) = float(y * w + x);
    }
  }

  ProjectionInputs in;
  in.ground_cams = {ground};
  in.aerial_cams = {aerial};
  in.ground_maps = {value};
  in.ground_depths = {depth};
  in.aerial_depths = {ImageF(w, h, 1, kNaN)};

  std::vector<MatchSet> matches;
  const auto maps = project_uncertainty(in, &matches);

  // Closed-form homography for the plane n.X = 0 with n = (0,1,0).
  const Eigen::Matrix3d r_a = aerial.world_to_cam.rotation_matrix();
  const Eigen::Vector3d t_g = ground.world_to_cam.translation;
  const Eigen::Vector3d t_a = aerial.world_to_cam.translation;
  const Eigen::Matrix3d r_rel = r_a * r_g.transpose();
  const Eigen::Vector3d t_rel = t_a - r_rel * t_g;
  const Eigen::Vector3d n_g = r_g * Eigen::Vector3d::UnitY();
  const double d_g = n_g.dot(t_g);
  Eigen::Matrix3d k_g = Eigen::Matrix3d::Identity();
  k_g(0, 0) = ground.fx; k_g(1, 1) = ground.fy;
  k_g(0, 2) = ground.cx; k_g(1, 2) = ground.cy;
  Eigen::Matrix3d k_a = Eigen::Matrix3d::Identity();
  k_a(0, 0) = aerial.fx; k_a(1, 1) = aerial.fy;
  k_a(0, 2) = aerial.cx; k_a(1, 2) = aerial.cy;
  const Eigen::Matrix3d hom =
      k_a * (r_rel + t_rel * n_g.transpose() / d_g) * k_g.inverse();

  int checked = 0, within = 0;
  for (const MatchSet::Entry& entry : matches[0].entries) {
    const double ax = entry.pixel % w;
    const double ay = entry.pixel / w;
    for (const float contribution : entry.contributions) {
      const int src = int(std::lround(contribution));
      const Eigen::Vector3d mapped =
          hom * Eigen::Vector3d(src % w, src / w, 1.0);
      const double ex = mapped.x() / mapped.z();
      const double ey = mapped.y() / mapped.z();
      ++checked;
      if (std::max(std::abs(ax - ex), std::abs(ay - ey)) <= 0.5 + 1e-6) ++within;
    }
  }

  // Independent accumulation oracle: re-derive every aerial map value by
  // brute force from scratch.
  std::vector<double> sum(size_t(w) * h, 0.0);
  std::vector<int> count(size_t(w) * h, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!pixel_valid(depth.at(x, y, 0))) continue;
      const Eigen::Vector3d world =
          unproject_pixel(ground, {double(x), double(y)},
                          double(depth.at(x, y, 0)));
      const auto proj = project_point(aerial, world);
      if (proj.behind) continue;
      const long px = std::lround(proj.pixel.x());
      const long py = std::lround(proj.pixel.y());
      if (px < 0 || px >= w || py < 0 || py >= h) continue;
      sum[size_t(py) * w + px] += double(value.at(x, y, 0));
      count[size_t(py) * w + px] += 1;
    }
  }
  double worst_map = 0;
  bool mask_ok = true;
  for (int i = 0; i < w * h; ++i) {
    const float got = maps[0].data[i];
    if (count[i] == 0) {
      if (pixel_valid(got)) mask_ok = false;
      continue;
    }
    if (!pixel_valid(got)) { mask_ok = false; continue; }
    const double expect = sum[i] / count[i];
    const double scale = std::max(1.0, std::abs(expect));
    worst_map = std::max(worst_map, std::abs(got - expect) / scale);
  }

  const double secs = seconds_since(t0);
  const double frac = checked > 0 ? double(within) / checked : 0.0;
  const bool ok = checked > 500 && frac >= 0.99 && mask_ok &&
                  worst_map < 1e-6 && secs < 60.0;
  report(4, "plane projection matches the closed-form homography", ok,
         format("%d matches, %.2f%% within 0.5 px (need 99%%); accumulation "
                "oracle rel err %.3g (tol 1e-6); %.1fs (limit 60s)",
                checked, 100.0 * frac, worst_map, secs));
}

// ---------------------------------------------------------------------------
// Shared small scene for reduction-equivalence and CLI determinism checks.

SceneSpec tiny_scene_spec() {
  SceneSpec spec;
  spec.image_width = 48;
  spec.image_height = 24;
  spec.focal = 33.0;
  spec.ground_count = 6;
  spec.aerial_count = 5;
  spec.test_count = 2;
  spec.building_count = 4;
  spec.init_points = 100;
  return spec;
}

// ---------------------------------------------------------------------------
// 5. All-ones weight maps reduce to the unweighted joint regime.

void criterion_reduction() {
  const auto t0 = std::chrono::steady_clock::now();
  bool ok = true;
  std::string why;

  // Loss level: explicit unit weights equal the unweighted reductions.
  {
    auto rng = make_rng(405);
    ImageD a(13, 9, 3), b(13, 9, 3);
    for (auto& v : a.data) v = random_uniform(rng, 0.0, 1.0);
    for (auto& v : b.data) v = random_uniform(rng, 0.0, 1.0);
    const ImageD ones(13, 9, 1, 1.0);
    const double eps = std::numeric_limits<double>::epsilon();
    const auto wl1 = weighted_l1(ones, a, b);
    const auto pl1 = l1_loss(a, b);
    if (std::abs(wl1.value - pl1.value) > eps) { ok = false; why = "weighted L1 != plain L1"; }
    const auto wss = weighted_ssim_loss(ones, a, b);
    const auto pss = ssim_loss(a, b);
    if (std::abs(wss.value - pss.value) > eps) { ok = false; why = "weighted SSIM != plain SSIM"; }
  }

  // Trainer level: a weight file of literal ones, loaded through the same
  // path the uncertainty regime uses, must leave the whole loss trace
  // bit-identical to the unweighted joint run.
  const std::string dir = acceptance_dir("reduction");
  const SceneBundle bundle = generate_scene(tiny_scene_spec());
  write_scene(bundle, dir + "/scene");
  const LoadedScene scene = load_scene(dir + "/scene/manifest.txt");

  const std::string weights_dir = dir + "/ones";
  std::filesystem::create_directories(weights_dir);
  for (const auto& cam : scene.split(SplitId::kAerialTrain)) {
    write_ucmap(weight_map_path(weights_dir, cam.id),
                ImageF(scene.spec.image_width, scene.spec.image_height, 1, 1.0f));
  }

  TrainConfig cfg;
  cfg.iterations = 60;
  cfg.seed = 21;
  cfg.densify_start = 1000000;

  const TrainResult joint = train_regime(scene, Regime::kJoint, cfg, "");
  const TrainResult uc =
      train_regime(scene, Regime::kUncertainty, cfg, weights_dir);
  if (joint.trace.size() != uc.trace.size()) {
    ok = false;
    why = "trace lengths differ";
  } else if (std::memcmp(joint.trace.data(), uc.trace.data(),
                         joint.trace.size() * sizeof(TraceRow)) != 0) {
    ok = false;
    why = "loss traces differ between all-ones and unweighted training";
  }
  write_trace_csv(dir + "/joint.csv", joint.trace);
  write_trace_csv(dir + "/uc.csv", uc.trace);
  std::ifstream fa(dir + "/joint.csv", std::ios::binary);
  std::ifstream fb(dir + "/uc.csv", std::ios::binary);
  const std::string ta((std::istreambuf_iterator<char>(fa)), {});
  const std::string tb((std::istreambuf_iterator<char>(fb)), {});
  if (ta != tb || ta.empty()) { ok = false; why = "trace CSVs differ"; }

  const double secs = seconds_since(t0);
  report(5, "all-ones weights reduce to the unweighted objective", ok,
         ok ? format("60-step traces bitwise identical through the weight-file "
                     "path; loss-level reductions exact; %.1fs",
                     secs)
            : why);
}

// ---------------------------------------------------------------------------
// 6+7. Directional training claims on the acceptance scene.

// Street-canyon variant of the synthetic scene: buildings tall and close
// enough that the above-horizon region is structured rather than open sky,
// matching the kind of imagery the training comparison is about. Reduced
// resolution keeps three seeds tractable on one core.
SceneSpec canyon_scene_spec() {
  SceneSpec spec;
  spec.image_width = 96;
  spec.image_height = 48;
  spec.focal = 68.0;
  spec.road_width = 5.0;
  spec.building_count = 14;
  spec.building_height_min = 10.0;
  spec.building_height_max = 16.0;
  spec.aerial_height = 18.0;
  spec.ground_count = 16;
  spec.aerial_count = 10;
  spec.test_count = 6;
  spec.init_points = 1000;
  return spec;
}

RunSettings canyon_settings() {
  RunSettings settings;
  settings.train.iterations = 2000;
  settings.train.seed = 1;
  settings.train.ensemble_size = 3;
  settings.train.densify_start = 300;
  settings.train.densify_interval = 100;
  settings.train.densify_stop = 0.7;
  settings.protocol_seeds = 3;
  settings.seed_stride = 1000;
  return settings;
}

struct DirectionalOutcome {
  ProtocolResult result;
  double secs = 0;
};

DirectionalOutcome run_directional_protocol(const LoadedScene& scene) {
  const auto t0 = std::chrono::steady_clock::now();
  DirectionalOutcome out;
  out.result = run_protocol(scene, canyon_settings(), /*quiet=*/false);
  out.secs = seconds_since(t0);
  return out;
}

void criterion_claim_a(const DirectionalOutcome& d) {
  const auto uc = d.result.seed_values(Regime::kUncertainty, SplitId::kHeldOut, true);
  const auto joint = d.result.seed_values(Regime::kJoint, SplitId::kHeldOut, true);
  std::string deltas;
  double mean_delta = 0;
  for (size_t i = 0; i < uc.size(); ++i) {
    const double delta = uc[i] - joint[i];
    mean_delta += delta / double(uc.size());
    deltas += format("%s%+.3f", i ? ", " : "", delta);
  }
  const bool ok = uc.size() >= 3 && mean_delta > 0.0;
  report(6, "uncertainty weighting beats equal-weight joint on held-out ground",
         ok,
         format("held-out PSNR delta per seed [%s] dB, mean %+.3f dB over %zu "
                "seeds (need > 0); protocol %.0fs",
                deltas.c_str(), mean_delta, uc.size(), d.secs));
}

void criterion_claim_b(const DirectionalOutcome& d) {
  auto drop = [&](Regime r) {
    return d.result.mean_psnr(r, SplitId::kHeldOut) -
           d.result.mean_psnr(r, SplitId::kShiftedRot);
  };
  const double ground = drop(Regime::kGround);
  const double joint = drop(Regime::kJoint);
  const double uc = drop(Regime::kUncertainty);
  const bool ok = joint < ground && uc < ground;
  report(7, "joint training mitigates the shifted+rotated decline", ok,
         format("mean held-out -> shifted+rot PSNR drop: ground-only %+.3f dB, "
                "equal-weight joint %+.3f dB, uncertainty-weighted %+.3f dB "
                "(joint regimes must drop less)",
                ground, joint, uc));
}

// ---------------------------------------------------------------------------
// 8. Root-exponent sweep.

void criterion_ablation(const LoadedScene& scene) {
  const auto t0 = std::chrono::steady_clock::now();
  bool ok = true;
  std::string why;

  RunSettings settings = canyon_settings();
  settings.train.iterations = 800;  // map properties are training-free; the
                                    // metric sweep itself is qualitative

  // Shared ensemble + one projection pass, renormalized per n.
  const auto views = build_train_views(scene, Regime::kGround, "");
  const auto members = train_ensemble(scene.points, views, settings.train);
  std::vector<std::vector<Gaussian3f>> member_fields;
  for (const auto& m : members) member_fields.push_back(m.field.gaussians);
  const CrossViewWeights shared =
      compute_scene_weights(scene, member_fields, settings.train.render,
                            settings.n_root, settings.tau_occ, true);
  if (shared.degenerate) { ok = false; why = "weight maps degenerate"; }

  const std::vector<double> grid = {1, 2, 3, 4, 6, 8, 10};
  std::vector<NormalizedMaps> per_n;
  for (const double n : grid) {
    per_n.push_back(normalize_maps(shared.raw_aerial, n, true));
    for (const auto& map : per_n.back().maps) {
      for (const float v : map.data) {
        if (!(v >= 0.0f && v <= 1.0f)) { ok = false; why = "weight out of [0,1]"; }
      }
    }
    if (per_n.size() > 1) {
      const auto& prev = per_n[per_n.size() - 2].maps;
      const auto& curr = per_n.back().maps;
      for (size_t m = 0; m < curr.size(); ++m) {
        for (size_t i = 0; i < curr[m].data.size(); ++i) {
          if (curr[m].data[i] + 0.0f < prev[m].data[i]) {
            ok = false;
            why = format("map value decreased from n=%g to n=%g",
                         grid[per_n.size() - 2], grid[per_n.size() - 1]);
          }
        }
      }
    }
  }

  // Aerial pixels that actually see ground-matched geometry must mostly
  // receive nonzero weight at the default root.
  {
    const auto& n6 = per_n[4];  // n = 6
    size_t matched = 0, nonzero = 0;
    for (size_t m = 0; m < n6.maps.size(); ++m) {
      for (size_t i = 0; i < n6.maps[m].data.size(); ++i) {
        if (!pixel_valid(shared.raw_aerial[m].data[i])) continue;
        ++matched;
        if (n6.maps[m].data[i] > 0.0f) ++nonzero;
      }
    }
    const double frac = matched ? double(nonzero) / matched : 0.0;
    if (frac < 0.3) { ok = false; why = format("only %.0f%% of matched aerial pixels weighted", 100 * frac); }
  }

  // Train an uncertainty-weighted model per n and report where the metric
  // settles; the plateau is reported, not asserted.
  const auto joint_views = build_train_views(scene, Regime::kJoint, "");
  const auto& aerial = scene.split(SplitId::kAerialTrain);
  const size_t ground_count = views.size();
  std::string table;
  std::vector<double> psnrs;
  for (size_t k = 0; k < grid.size(); ++k) {
    auto uc_views = joint_views;
    for (size_t i = 0; i < aerial.size(); ++i) {
      uc_views[ground_count + i].weight = per_n[k].maps[i];
    }
    GaussianField field = init_field(scene.points, settings.train);
    const TrainResult run = train(field, uc_views, settings.train);
    const auto eval = evaluate_field(scene, run.field.gaussians,
                                     SplitId::kHeldOut, settings.train.render);
    psnrs.push_back(eval.mean_psnr);
    table += format("%sn=%g: %.2f", k ? ", " : "", grid[k], eval.mean_psnr);
  }
  const double best = *std::max_element(psnrs.begin(), psnrs.end());
  size_t plateau = grid.size() - 1;
  for (size_t k = 0; k < grid.size(); ++k) {
    bool settled = true;
    for (size_t j = k; j < grid.size(); ++j) {
      if (psnrs[j] < best - 0.05) { settled = false; break; }
    }
    if (settled) { plateau = k; break; }
  }

  const double secs = seconds_since(t0);
  report(8, "root-exponent sweep is well behaved", ok,
         ok ? format("maps in [0,1] and pointwise non-decreasing in n; "
                     "held-out PSNR %s dB; within 0.05 dB of best from n=%g "
                     "onward (reported, not asserted); %.0fs",
                     table.c_str(), grid[plateau], secs)
            : why);
}

// ---------------------------------------------------------------------------
// 9. CLI stages are bit-reproducible; rasterizer is thread-invariant.

bool same_file_bytes(const std::filesystem::path& a,
                     const std::filesystem::path& b) {
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  if (!fa.good() || !fb.good()) return false;
  const std::string ba((std::istreambuf_iterator<char>(fa)), {});
  const std::string bb((std::istreambuf_iterator<char>(fb)), {});
  return !ba.empty() && ba == bb;
}

// Compares two directory trees file by file (names and bytes).
bool same_tree(const std::string& a, const std::string& b, std::string* why) {
  std::set<std::string> names;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(a)) {
    if (entry.is_regular_file()) {
      names.insert(std::filesystem::relative(entry.path(), a).string());
    }
  }
  std::set<std::string> names_b;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(b)) {
    if (entry.is_regular_file()) {
      names_b.insert(std::filesystem::relative(entry.path(), b).string());
    }
  }
  if (names != names_b) {
    *why = "file lists differ under " + a;
    return false;
  }
  for (const auto& name : names) {
    if (!same_file_bytes(std::filesystem::path(a) / name,
                         std::filesystem::path(b) / name)) {
      *why = "bytes differ: " + name + " under " + a;
      return false;
    }
  }
  return true;
}

void criterion_determinism(const std::string& cli) {
  const auto t0 = std::chrono::steady_clock::now();
  bool ok = true;
  std::string why;
  const std::string dir = acceptance_dir("determinism");

  const auto run = [&](const std::string& args) {
    const std::string cmd = cli + " " + args + " >> " + dir + "/cli.log 2>&1";
    const int rc = std::system(cmd.c_str());
    if (rc != 0 && ok) {
      ok = false;
      why = "command failed: " + args;
    }
  };

  // Scene + training settings shared by every stage below.
  {
    std::ofstream spec(dir + "/scene.cfg");
    spec << "image_width = 48\nimage_height = 24\nfocal = 33\n"
            "ground_count = 6\naerial_count = 5\ntest_count = 2\n"
            "building_count = 4\ninit_points = 100\n";
    std::ofstream train(dir + "/train.cfg");
    train << "iterations = 40\nmembers = 2\ndensify_start = 1000000\n"
             "protocol_seeds = 2\nseed_stride = 10\n";
  }
  const std::string common = " --threads 1 --quiet --seed 5 ";

  run("generate-scene" + common + "--spec " + dir + "/scene.cfg --out " + dir + "/sceneA");
  run("generate-scene" + common + "--spec " + dir + "/scene.cfg --out " + dir + "/sceneB");
  if (ok && !same_tree(dir + "/sceneA", dir + "/sceneB", &why)) ok = false;

  const std::string scene = dir + "/sceneA";
  const std::string cfg = " --config " + dir + "/train.cfg";
  for (const char* regime : {"ground", "joint"}) {
    run(std::string("train") + common + "--manifest " + scene + cfg +
        " --regime " + regime + " --out " + dir + "/" + regime + "A.ckpt");
    run(std::string("train") + common + "--manifest " + scene + cfg +
        " --regime " + regime + " --out " + dir + "/" + regime + "B.ckpt");
    if (ok && !same_file_bytes(dir + "/" + regime + "A.ckpt",
                               dir + "/" + regime + "B.ckpt")) {
      ok = false;
      why = std::string("training not reproducible: ") + regime;
    }
  }

  run("train-ensemble" + common + "--manifest " + scene + cfg + " --out " + dir + "/ensA");
  run("train-ensemble" + common + "--manifest " + scene + cfg + " --out " + dir + "/ensB");
  if (ok && !same_tree(dir + "/ensA", dir + "/ensB", &why)) ok = false;

  run("uncertainty" + common + "--manifest " + scene + cfg +
      " --ensemble " + dir + "/ensA --out " + dir + "/ucA");
  run("uncertainty" + common + "--manifest " + scene + cfg +
      " --ensemble " + dir + "/ensA --out " + dir + "/ucB");
  if (ok && !same_tree(dir + "/ucA", dir + "/ucB", &why)) ok = false;

  run(std::string("train") + common + "--manifest " + scene + cfg +
      " --regime uc --weights " + dir + "/ucA --out " + dir + "/ucrA.ckpt");
  run(std::string("train") + common + "--manifest " + scene + cfg +
      " --regime uc --weights " + dir + "/ucA --out " + dir + "/ucrB.ckpt");
  if (ok && !same_file_bytes(dir + "/ucrA.ckpt", dir + "/ucrB.ckpt")) {
    ok = false;
    why = "uncertainty-weighted training not reproducible";
  }

  const LoadedScene loaded = load_scene(scene + "/manifest.txt");
  const std::string held = loaded.split(SplitId::kHeldOut).front().id;
  run("render" + common + "--manifest " + scene + " --ckpt " + dir +
      "/groundA.ckpt --camera " + held + " --out " + dir + "/rA.png");
  run("render" + common + "--manifest " + scene + " --ckpt " + dir +
      "/groundA.ckpt --camera " + held + " --out " + dir + "/rB.png");
  if (ok && !same_file_bytes(dir + "/rA.png", dir + "/rB.png")) {
    ok = false;
    why = "render stage not reproducible";
  }

  run("evaluate" + common + "--manifest " + scene + " --ckpt " + dir +
      "/groundA.ckpt --split heldout --out " + dir + "/eA.csv");
  run("evaluate" + common + "--manifest " + scene + " --ckpt " + dir +
      "/groundA.ckpt --split heldout --out " + dir + "/eB.csv");
  if (ok && !same_file_bytes(dir + "/eA.csv", dir + "/eB.csv")) {
    ok = false;
    why = "evaluate stage not reproducible";
  }

  run("protocol" + common + "--manifest " + scene + cfg + " --out " + dir + "/pA");
  run("protocol" + common + "--manifest " + scene + cfg + " --out " + dir + "/pB");
  if (ok && !same_tree(dir + "/pA", dir + "/pB", &why)) ok = false;

  run("ablate-n" + common + "--manifest " + scene + cfg +
      " --values 1,2 --out " + dir + "/aA");
  run("ablate-n" + common + "--manifest " + scene + cfg +
      " --values 1,2 --out " + dir + "/aB");
  if (ok && !same_tree(dir + "/aA", dir + "/aB", &why)) ok = false;

  // Thread-count invariance of the rasterizer, forward and backward.
  {
    auto rng = make_rng(409);
    std::vector<Gaussian3f> field(150);
    for (auto& g : field) {
      g.mu = Eigen::Vector3f(float(random_uniform(rng, -1.0, 1.0)),
                             float(random_uniform(rng, -0.7, 0.7)),
                             float(random_uniform(rng, 0.6, 4.0)));
      g.rot = random_unit_quat(rng).cast<float>();
      g.log_scale = random_vec3(rng, std::log(0.02), std::log(0.2)).cast<float>();
      g.opacity_logit = float(random_uniform(rng, -2.0, 2.0));
      g.color = random_vec3(rng, 0.0, 1.0).cast<float>();
    }
    const Camera cam = [&] {
      Camera c = square_camera(40, 30.0);
      c.width = 64;
      c.cx = (64 - 1) / 2.0;
      return c;
    }();
    RenderOptions opt;
    opt.background = Eigen::Vector3d(0.2, 0.1, 0.4);
    ImageF d_color(64, 40, 3), d_alpha(64, 40, 1);
    for (auto& v : d_color.data) v = float(random_uniform(rng, -1.0, 1.0));
    for (auto& v : d_alpha.data) v = float(random_uniform(rng, -1.0, 1.0));

    omp_set_num_threads(1);
    const auto out1 = render(field, cam, opt);
    const auto back1 = render_backward(field, cam, opt, out1, d_color, d_alpha);
    omp_set_num_threads(3);
    const auto out3 = render(field, cam, opt);
    const auto back3 = render_backward(field, cam, opt, out3, d_color, d_alpha);
    omp_set_num_threads(1);

    const bool forward_same =
        std::memcmp(out1.color.data.data(), out3.color.data.data(),
                    out1.color.data.size() * sizeof(float)) == 0 &&
        std::memcmp(out1.alpha.data.data(), out3.alpha.data.data(),
                    out1.alpha.data.size() * sizeof(float)) == 0;
    bool backward_same = back1.params.size() == back3.params.size();
    for (size_t i = 0; backward_same && i < back1.params.size(); ++i) {
      const ParamGrad<float>& a = back1.params[i];
      const ParamGrad<float>& b = back3.params[i];
      backward_same =
          std::memcmp(a.d_mu.data(), b.d_mu.data(), 3 * sizeof(float)) == 0 &&
          std::memcmp(a.d_rot.data(), b.d_rot.data(), 4 * sizeof(float)) == 0 &&
          std::memcmp(a.d_log_scale.data(), b.d_log_scale.data(),
                      3 * sizeof(float)) == 0 &&
          std::memcmp(&a.d_opacity_logit, &b.d_opacity_logit,
                      sizeof(float)) == 0 &&
          std::memcmp(a.d_color.data(), b.d_color.data(), 3 * sizeof(float)) == 0;
    }
    if (!forward_same || !backward_same) {
      ok = false;
      why = "rasterizer differs across thread counts";
    }
  }

  const double secs = seconds_since(t0);
  report(9, "every pipeline stage is bit-reproducible", ok,
         ok ? format("8 stages double-run byte-identical at fixed seed and "
                     "threads; rasterizer forward+backward invariant to "
                     "thread count; %.0fs",
                     secs)
            : why);
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: %s <path-to-cvgs-cli>\n", argv[0]);
    return 2;
  }
  const std::string cli = argv[1];

  criterion_gradients();
  criterion_render_oracle();
  criterion_uncertainty_chain();
  criterion_projection();
  criterion_reduction();

  const std::string scene_dir = acceptance_dir("canyon");
  write_scene(generate_scene(canyon_scene_spec()), scene_dir);
  const LoadedScene canyon = load_scene(scene_dir + "/manifest.txt");
  const DirectionalOutcome directional = run_directional_protocol(canyon);
  criterion_claim_a(directional);
  criterion_claim_b(directional);
  criterion_ablation(canyon);

  criterion_determinism(cli);

  if (g_failures == 0) {
    std::printf("acceptance: all 9 criteria passed\n");
  } else {
    std::printf("acceptance: %d criterion(s) FAILED\n", g_failures);
  }
  return g_failures == 0 ? 0 : 1;
}
