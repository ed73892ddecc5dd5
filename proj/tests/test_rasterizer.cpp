// Copyright Contributors to the crossview-gs Project
// SPDX-License-Identifier: Apache-2.0

#include "cvgs/rasterizer.h"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>

#include "cvgs/check.h"
#include "cvgs/reference_renderer.h"
#include "doctest.h"
#include "test_util.h"

using namespace cvgs;
using testutil::make_rng;
using testutil::random_uniform;
using testutil::random_unit_quat;
using testutil::random_vec3;

namespace {

Camera tiny_camera(int size = 16, double f = 100.0) {
  Camera cam;
  cam.fx = cam.fy = f;
  cam.cx = cam.cy = (size - 1) / 2.0;
  cam.width = cam.height = size;
  return cam;
}

double logit(double p) { return std::log(p / (1.0 - p)); }

// Wide splat whose center projects exactly onto the principal point.
Gaussian3d flat_splat(double depth, double opacity, const Eigen::Vector3d& color) {
  Gaussian3d g;
  g.mu = Eigen::Vector3d(0, 0, depth);
  g.log_scale.setConstant(std::log(depth));  // ~100 px footprint at f=100
  g.opacity_logit = logit(opacity);
  g.color = color;
  return g;
}

// Random scene for render / reference comparisons: moderate footprints, all
// in front of the camera.
std::vector<Gaussian3d> random_scene(std::mt19937_64& rng, int count,
                                     const Camera& cam) {
  std::vector<Gaussian3d> field(count);
  for (auto& g : field) {
    const double z = random_uniform(rng, 0.5, 4.0);
    const Eigen::Vector2d px(random_uniform(rng, 0, cam.width - 1),
                             random_uniform(rng, 0, cam.height - 1));
    g.mu = unproject_pixel(cam, px, z);
    g.rot = random_unit_quat(rng);
    g.log_scale = random_vec3(rng, std::log(0.005), std::log(0.08));
    g.opacity_logit = random_uniform(rng, -2.0, 2.0);
    g.color = random_vec3(rng, 0.05, 0.95);
  }
  return field;
}

// Smooth configuration for finite-difference checks: every support box covers
// the whole image and total opacity stays far above the transmittance cutoff,
// so the render is differentiable at the sample point.
std::vector<Gaussian3d> smooth_scene(std::mt19937_64& rng, int count,
                                     const Camera& cam) {
  std::vector<Gaussian3d> field(count);
  for (auto& g : field) {
    const double z = random_uniform(rng, 0.8, 1.5);
    g.mu = Eigen::Vector3d(random_uniform(rng, -0.3, 0.3),
                           random_uniform(rng, -0.3, 0.3), z);
    g.rot = random_unit_quat(rng);
    g.log_scale = random_vec3(rng, std::log(0.5), std::log(1.2));
    g.opacity_logit = random_uniform(rng, -3.0, -0.3);
    g.color = random_vec3(rng, 0.1, 0.9);
  }
  return field;
}

ImageD random_image(std::mt19937_64& rng, int w, int h, int c) {
  ImageD img(w, h, c);
  for (auto& v : img.data) v = random_uniform(rng, -0.5, 0.5);
  return img;
}

double render_objective(const std::vector<Gaussian3d>& field, const Camera& cam,
                        const RenderOptions& opt, const ImageD& d_color,
                        const ImageD& d_alpha) {
  const auto out = render(field, cam, opt);
  double loss = 0;
  for (size_t i = 0; i < out.color.data.size(); ++i) {
    loss += d_color.data[i] * out.color.data[i];
  }
  for (size_t i = 0; i < out.alpha.data.size(); ++i) {
    loss += d_alpha.data[i] * out.alpha.data[i];
  }
  return loss;
}

// Pointer to the j-th raw scalar parameter of a Gaussian, in checkpoint
// order: mu, rot(w,x,y,z), log_scale, opacity_logit, color.
double* param_ptr(Gaussian3d* g, int j) {
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

double analytic_component(const ParamGrad<double>& pg, int j) {
  switch (j) {
    case 0: case 1: case 2: return pg.d_mu[j];
    case 3: case 4: case 5: case 6: return pg.d_rot[j - 3];
    case 7: case 8: case 9: return pg.d_log_scale[j - 7];
    case 10: return pg.d_opacity_logit;
    default: return pg.d_color[j - 11];
  }
}

}  // namespace

TEST_SUITE("rasterizer") {

TEST_CASE("two covering splats composite front to back") {
  // Front alpha 0.5 with white color over back alpha 0.5 black on a black
  // background: center pixel 0.5 gray, alpha 0.75, depth (0.5*1+0.25*2)/0.75.
  const Camera cam = tiny_camera(15);  // odd size: principal point on a pixel
  std::vector<Gaussian3d> field = {flat_splat(1.0, 0.5, {1, 1, 1}),
                                   flat_splat(2.0, 0.5, {0, 0, 0})};
  const auto out = render(field, cam, {});
  const int c = 7;
  for (int ch = 0; ch < 3; ++ch) {
    CHECK(out.color.at(c, c, ch) == doctest::Approx(0.5).epsilon(1e-6));
  }
  CHECK(out.alpha.at(c, c, 0) == doctest::Approx(0.75).epsilon(1e-6));
  CHECK(out.depth.at(c, c, 0) == doctest::Approx((0.5 + 0.5) / 0.75).epsilon(1e-6));
}

TEST_CASE("near-opaque splat saturates at the alpha clamp") {
  const Camera cam = tiny_camera(15);
  std::vector<Gaussian3d> field = {flat_splat(1.0, 0.5, {1, 0, 0})};
  field[0].opacity_logit = 12.0;  // sigmoid ~ 0.999994, clamped to 0.99
  const auto out = render(field, cam, {});
  CHECK(out.color.at(7, 7, 0) == doctest::Approx(0.99).epsilon(1e-6));
  CHECK(out.color.at(7, 7, 1) == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(out.alpha.at(7, 7, 0) == doctest::Approx(0.99).epsilon(1e-6));
}

TEST_CASE("expected depth averages equally weighted layers") {
  // alpha_1 = 1/3 and alpha_2 = 1/2 give both layers weight 1/3, so the
  // normalized depth of layers at 1 and 3 is exactly 2.
  const Camera cam = tiny_camera(15);
  std::vector<Gaussian3d> field = {flat_splat(1.0, 1.0 / 3.0, {1, 1, 1}),
                                   flat_splat(3.0, 0.5, {1, 1, 1})};
  const auto out = render(field, cam, {});
  CHECK(out.depth.at(7, 7, 0) == doctest::Approx(2.0).epsilon(1e-5));
}

TEST_CASE("empty field renders background with invalid depth") {
  const Camera cam = tiny_camera(8);
  RenderOptions opt;
  opt.background = Eigen::Vector3d(0.2, 0.3, 0.4);
  const auto out = render(std::vector<Gaussian3d>{}, cam, opt);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      CHECK(out.color.at(x, y, 0) == doctest::Approx(0.2));
      CHECK(out.color.at(x, y, 1) == doctest::Approx(0.3));
      CHECK(out.color.at(x, y, 2) == doctest::Approx(0.4));
      CHECK(out.alpha.at(x, y, 0) == 0.0);
      CHECK(std::isnan(out.depth.at(x, y, 0)));
    }
  }
}

TEST_CASE("output stays in [0,1] on black background and depth is nonnegative") {
  auto rng = make_rng(21);
  const Camera cam = tiny_camera(32, 40.0);
  for (int trial = 0; trial < 5; ++trial) {
    const auto field = random_scene(rng, 60, cam);
    const auto out = render(field, cam, {});
    for (const double v : out.color.data) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0 + 1e-9);
    }
    for (int y = 0; y < cam.height; ++y) {
      for (int x = 0; x < cam.width; ++x) {
        const double a = out.alpha.at(x, y, 0);
        CHECK(a >= 0.0);
        CHECK(a <= 1.0 + 1e-9);
        if (a > kDepthAlphaMin) CHECK(out.depth.at(x, y, 0) >= 0.0);
      }
    }
  }
}

TEST_CASE("input permutation leaves the render bit-identical") {
  auto rng = make_rng(22);
  const Camera cam = tiny_camera(32, 40.0);
  auto field = random_scene(rng, 50, cam);
  const auto base = render(field, cam, {});

  auto shuffled = field;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const auto perm = render(shuffled, cam, {});

  CHECK(std::memcmp(base.color.data.data(), perm.color.data.data(),
                    base.color.data.size() * sizeof(double)) == 0);
  CHECK(std::memcmp(base.alpha.data.data(), perm.alpha.data.data(),
                    base.alpha.data.size() * sizeof(double)) == 0);
  CHECK(std::memcmp(base.depth.data.data(), perm.depth.data.data(),
                    base.depth.data.size() * sizeof(double)) == 0);
}

TEST_CASE("render and backward are invariant to thread count and tile size") {
  auto rng = make_rng(23);
  const Camera cam = tiny_camera(48, 60.0);
  const auto fieldd = random_scene(rng, 80, cam);
  std::vector<Gaussian3f> field(fieldd.size());
  for (size_t i = 0; i < fieldd.size(); ++i) {
    const auto& g = fieldd[i];
    field[i].mu = g.mu.cast<float>();
    field[i].rot = Eigen::Quaternionf(float(g.rot.w()), float(g.rot.x()),
                                      float(g.rot.y()), float(g.rot.z()));
    field[i].log_scale = g.log_scale.cast<float>();
    field[i].opacity_logit = float(g.opacity_logit);
    field[i].color = g.color.cast<float>();
  }
  ImageF d_color(cam.width, cam.height, 3, 0.001f);
  ImageF d_alpha(cam.width, cam.height, 1, -0.0005f);

  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  const auto out1 = render(field, cam, {});
  const auto g1 = render_backward(field, cam, {}, out1, d_color, d_alpha);
  omp_set_num_threads(4);
  const auto out4 = render(field, cam, {});
  const auto g4 = render_backward(field, cam, {}, out4, d_color, d_alpha);
  omp_set_num_threads(saved);

  CHECK(std::memcmp(out1.color.data.data(), out4.color.data.data(),
                    out1.color.data.size() * sizeof(float)) == 0);
  CHECK(std::memcmp(out1.depth.data.data(), out4.depth.data.data(),
                    out1.depth.data.size() * sizeof(float)) == 0);
  REQUIRE(g1.params.size() == g4.params.size());
  for (size_t i = 0; i < g1.params.size(); ++i) {
    CHECK(g1.params[i].d_mu == g4.params[i].d_mu);
    CHECK(g1.params[i].d_rot == g4.params[i].d_rot);
    CHECK(g1.params[i].d_log_scale == g4.params[i].d_log_scale);
    CHECK(g1.params[i].d_opacity_logit == g4.params[i].d_opacity_logit);
    CHECK(g1.params[i].d_color == g4.params[i].d_color);
  }

  // Tile size is pure machinery: compositing order is global, so the image
  // must not change at all.
  RenderOptions opt8;
  opt8.tile_size = 8;
  RenderOptions opt64;
  opt64.tile_size = 64;
  const auto out8 = render(field, cam, opt8);
  const auto out64 = render(field, cam, opt64);
  CHECK(std::memcmp(out1.color.data.data(), out8.color.data.data(),
                    out1.color.data.size() * sizeof(float)) == 0);
  CHECK(std::memcmp(out1.color.data.data(), out64.color.data.data(),
                    out1.color.data.size() * sizeof(float)) == 0);
}

TEST_CASE("tiled render matches the brute-force reference") {
  auto rng = make_rng(24);
  for (int trial = 0; trial < 4; ++trial) {
    Camera cam = tiny_camera(48, 50.0);
    cam.world_to_cam.rotation = random_unit_quat(rng);
    cam.world_to_cam.translation = random_vec3(rng, -0.2, 0.2);
    // Scene around where this camera actually looks.
    std::vector<Gaussian3d> field(120);
    for (auto& g : field) {
      const double z = random_uniform(rng, 0.5, 4.0);
      const Eigen::Vector2d px(random_uniform(rng, 0, cam.width - 1),
                               random_uniform(rng, 0, cam.height - 1));
      g.mu = unproject_pixel(cam, px, z);
      g.rot = random_unit_quat(rng);
      g.log_scale = random_vec3(rng, std::log(0.01), std::log(0.1));
      g.opacity_logit = random_uniform(rng, -2.0, 2.0);
      g.color = random_vec3(rng, 0.05, 0.95);
    }
    RenderOptions opt;
    opt.background = Eigen::Vector3d(0.1, 0.2, 0.3);

    const auto tiled = render(field, cam, opt);
    const auto ref = render_reference(field, cam, opt);
    double max_diff = 0;
    for (size_t i = 0; i < tiled.color.data.size(); ++i) {
      max_diff = std::max(max_diff, std::abs(tiled.color.data[i] - ref.color.data[i]));
    }
    for (size_t i = 0; i < tiled.alpha.data.size(); ++i) {
      max_diff = std::max(max_diff, std::abs(tiled.alpha.data[i] - ref.alpha.data[i]));
    }
    CHECK(max_diff <= 1e-4);
  }
}

TEST_CASE("analytic gradients match central finite differences in double") {
  auto rng = make_rng(25);
  const Camera cam = tiny_camera(16, 20.0);
  RenderOptions opt;
  opt.background = Eigen::Vector3d(0.3, 0.2, 0.1);

  for (int trial = 0; trial < 4; ++trial) {
    auto field = smooth_scene(rng, 5, cam);
    const ImageD d_color = random_image(rng, 16, 16, 3);
    const ImageD d_alpha = random_image(rng, 16, 16, 1);

    const auto out = render(field, cam, opt);
    const auto grads = render_backward(field, cam, opt, out, d_color, d_alpha);

    const double h = 1e-5;
    for (size_t gi = 0; gi < field.size(); ++gi) {
      for (int j = 0; j < 14; ++j) {
        double* p = param_ptr(&field[gi], j);
        const double saved = *p;
        *p = saved + h;
        const double lp = render_objective(field, cam, opt, d_color, d_alpha);
        *p = saved - h;
        const double lm = render_objective(field, cam, opt, d_color, d_alpha);
        *p = saved;
        const double fd = (lp - lm) / (2 * h);
        const double an = analytic_component(grads.params[gi], j);
        const double err = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-7});
        CAPTURE(gi);
        CAPTURE(j);
        CHECK(err < 1e-6);
      }
    }
  }
}

TEST_CASE("backward rejects mismatched render state") {
  auto rng = make_rng(26);
  const Camera cam = tiny_camera(16, 20.0);
  auto field = smooth_scene(rng, 3, cam);
  const auto out = render(field, cam, {});
  const ImageD d_color(16, 16, 3, 0.0);
  const ImageD d_alpha(16, 16, 1, 0.0);
  auto bigger = field;
  bigger.push_back(field[0]);
  CHECK_THROWS_AS(render_backward(bigger, cam, {}, out, d_color, d_alpha), CheckError);
}

TEST_CASE("render_depth matches the depth channel of render") {
  auto rng = make_rng(27);
  const Camera cam = tiny_camera(24, 30.0);
  const auto field = random_scene(rng, 40, cam);
  const auto out = render(field, cam, {});
  const auto depth = render_depth(field, cam, {});
  CHECK(std::memcmp(out.depth.data.data(), depth.data.data(),
                    depth.data.size() * sizeof(double)) == 0);
}

}  // TEST_SUITE
