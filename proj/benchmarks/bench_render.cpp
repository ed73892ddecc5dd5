// Copyright Contributors to the crossview-gs Project
// SPDX-License-Identifier: Apache-2.0
//
// Compares the tile-parallel rasterizer against the serial full-sort
// reference, and shows how the OpenMP kernels scale with the worker count.

#include <benchmark/benchmark.h>
#include <omp.h>

#include <cmath>
#include <random>
#include <vector>

#include "cvgs/rasterizer.h"
#include "cvgs/reference_renderer.h"

namespace {

using namespace cvgs;

Camera bench_camera() {
  Camera cam;
  cam.width = 240;
  cam.height = 120;
  cam.fx = cam.fy = 170.0;
  cam.cx = (cam.width - 1) / 2.0;
  cam.cy = (cam.height - 1) / 2.0;
  return cam;
}

// A street-scale cloud of small splats filling the view frustum.
std::vector<Gaussian3f> bench_field(int count) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Gaussian3f> field(count);
  for (auto& g : field) {
    const double z = 1.0 + 14.0 * unit(rng);
    g.mu = Eigen::Vector3f(float((unit(rng) - 0.5) * 1.2 * z),
                           float((unit(rng) - 0.5) * 0.6 * z), float(z));
    Eigen::Quaterniond q(unit(rng) - 0.5, unit(rng) - 0.5, unit(rng) - 0.5,
                         unit(rng) - 0.5);
    g.rot = q.normalized().cast<float>();
    const double s = std::log(0.01 + 0.1 * unit(rng));
    g.log_scale = Eigen::Vector3f::Constant(float(s));
    g.opacity_logit = float(4.0 * unit(rng) - 2.0);
    g.color = Eigen::Vector3f(float(unit(rng)), float(unit(rng)), float(unit(rng)));
  }
  return field;
}

void bm_render_tiled(benchmark::State& state) {
  const auto field = bench_field(int(state.range(0)));
  const Camera cam = bench_camera();
  const RenderOptions opt;
  omp_set_num_threads(int(state.range(1)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(render(field, cam, opt));
  }
  state.SetItemsProcessed(state.iterations() * cam.width * cam.height);
}

void bm_render_reference(benchmark::State& state) {
  const auto field32 = bench_field(int(state.range(0)));
  std::vector<Gaussian3d> field(field32.size());
  for (size_t i = 0; i < field.size(); ++i) {
    field[i].mu = field32[i].mu.cast<double>();
    field[i].rot = field32[i].rot.cast<double>();
    field[i].log_scale = field32[i].log_scale.cast<double>();
    field[i].opacity_logit = double(field32[i].opacity_logit);
    field[i].color = field32[i].color.cast<double>();
  }
  const Camera cam = bench_camera();
  const RenderOptions opt;
  for (auto _ : state) {
    benchmark::DoNotOptimize(render_reference(field, cam, opt));
  }
  state.SetItemsProcessed(state.iterations() * cam.width * cam.height);
}

void bm_render_backward(benchmark::State& state) {
  const auto field = bench_field(int(state.range(0)));
  const Camera cam = bench_camera();
  const RenderOptions opt;
  const auto out = render(field, cam, opt);
  ImageF d_color(cam.width, cam.height, 3, 1.0f);
  ImageF d_alpha(cam.width, cam.height, 1, 0.0f);
  omp_set_num_threads(int(state.range(1)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        render_backward(field, cam, opt, out, d_color, d_alpha));
  }
  state.SetItemsProcessed(state.iterations() * cam.width * cam.height);
}

}  // namespace

// {field size, worker threads}
BENCHMARK(bm_render_tiled)
    ->Args({2000, 1})
    ->Args({2000, 2})
    ->Args({2000, 4})
    ->Args({8000, 1})
    ->Args({8000, 4})
    ->Unit(benchmark::kMillisecond);

// Serial double-precision oracle on the same fields, for scale.
BENCHMARK(bm_render_reference)
    ->Arg(2000)
    ->Arg(8000)
    ->Unit(benchmark::kMillisecond);

BENCHMARK(bm_render_backward)
    ->Args({2000, 1})
    ->Args({2000, 2})
    ->Args({2000, 4})
    ->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
