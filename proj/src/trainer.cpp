// Copyright Contributors to the crossview-gs Project
// SPDX-License-Identifier: Apache-2.0

#include "cvgs/trainer.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <vector>

#include "cvgs/check.h"
#include "cvgs/rng.h"

namespace cvgs {

namespace {

// Flat parameter order shared by the optimizer state and gradients:
// mu (3), rot w,x,y,z (4), log_scale (3), opacity_logit (1), color (3).
constexpr int kParamCount = 14;

void pack_params(const Gaussian3f& g, float* p) {
  p[0] = g.mu.x();
  p[1] = g.mu.y();
  p[2] = g.mu.z();
  p[3] = g.rot.w();
  p[4] = g.rot.x();
  p[5] = g.rot.y();
  p[6] = g.rot.z();
  p[7] = g.log_scale.x();
  p[8] = g.log_scale.y();
  p[9] = g.log_scale.z();
  p[10] = g.opacity_logit;
  p[11] = g.color.x();
  p[12] = g.color.y();
  p[13] = g.color.z();
}

void unpack_params(const float* p, Gaussian3f& g) {
  g.mu = Eigen::Vector3f(p[0], p[1], p[2]);
  g.rot = Eigen::Quaternionf(p[3], p[4], p[5], p[6]);  // (w, x, y, z)
  g.log_scale = Eigen::Vector3f(p[7], p[8], p[9]);
  g.opacity_logit = p[10];
  g.color = Eigen::Vector3f(p[11], p[12], p[13]);
}

void pack_grad(const ParamGrad<float>& pg, float* p) {
  p[0] = pg.d_mu.x();
  p[1] = pg.d_mu.y();
  p[2] = pg.d_mu.z();
  p[3] = pg.d_rot[0];
  p[4] = pg.d_rot[1];
  p[5] = pg.d_rot[2];
  p[6] = pg.d_rot[3];
  p[7] = pg.d_log_scale.x();
  p[8] = pg.d_log_scale.y();
  p[9] = pg.d_log_scale.z();
  p[10] = pg.d_opacity_logit;
  p[11] = pg.d_color.x();
  p[12] = pg.d_color.y();
  p[13] = pg.d_color.z();
}

float sigmoidf(float x) { return 1.0f / (1.0f + std::exp(-x)); }

void check_views(const std::vector<TrainView>& views) {
  CVGS_CHECK_MSG(!views.empty(), "train: empty view set");
  for (const TrainView& v : views) {
    v.cam.validate();
    CVGS_CHECK_MSG(v.target.channels == 3 && v.target.width == v.cam.width &&
                       v.target.height == v.cam.height,
                   "train: view '" << v.id
                                   << "' target does not match its camera");
    if (!v.weight.empty()) {
      CVGS_CHECK_MSG(v.weight.channels == 1 &&
                         v.weight.width == v.cam.width &&
                         v.weight.height == v.cam.height,
                     "train: view '" << v.id
                                     << "' weight map does not match its camera");
    }
  }
}

}  // namespace

void TrainConfig::validate() const {
  CVGS_CHECK_MSG(iterations >= 1, "config: iterations must be >= 1");
  CVGS_CHECK_MSG(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1,
                 "config: Adam betas must lie in [0, 1)");
  CVGS_CHECK_MSG(adam_eps > 0, "config: Adam epsilon must be positive");
  CVGS_CHECK_MSG(lr_mu > 0 && lr_rot > 0 && lr_log_scale > 0 &&
                     lr_opacity > 0 && lr_color > 0,
                 "config: learning rates must be positive");
  CVGS_CHECK_MSG(lr_mu_decay > 0 && lr_mu_decay <= 1,
                 "config: position learning-rate decay must be in (0, 1]");
  CVGS_CHECK_MSG(densify_interval >= 1, "config: densify interval must be >= 1");
  CVGS_CHECK_MSG(densify_start >= 0, "config: densify start must be >= 0");
  CVGS_CHECK_MSG(densify_stop >= 0 && densify_stop <= 1,
                 "config: densify stop must be a fraction of the run");
  CVGS_CHECK_MSG(densify_grad_threshold >= 0 && prune_opacity >= 0 &&
                     split_scale > 0,
                 "config: densify thresholds must be non-negative");
  CVGS_CHECK_MSG(init_jitter >= 0, "config: init jitter must be >= 0");
  CVGS_CHECK_MSG(loss.lambda_ssim >= 0 && loss.lambda_ssim <= 1 &&
                     loss.lambda_vol >= 0,
                 "config: loss weights out of range");
}

GaussianField init_field(const PointCloud& points, const TrainConfig& config) {
  config.validate();
  const size_t n = points.positions.size();
  CVGS_CHECK_MSG(n >= 1, "init_field: empty point set");
  CVGS_CHECK_MSG(points.colors.size() == n,
                 "init_field: point/color count mismatch");

  // Isotropic scale from the mean distance to the 3 nearest neighbors of the
  // unjittered points, so all ensemble members share the same initial scales.
  const int want = static_cast<int>(std::min<size_t>(3, n - 1));
  std::vector<float> scale(n, std::log(0.1f));
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(n); ++i) {
    if (want == 0) continue;
    float best[3] = {std::numeric_limits<float>::infinity(),
                     std::numeric_limits<float>::infinity(),
                     std::numeric_limits<float>::infinity()};
    for (size_t j = 0; j < n; ++j) {
      if (j == static_cast<size_t>(i)) continue;
      const float d2 = (points.positions[j] - points.positions[i]).squaredNorm();
      if (d2 < best[2]) {
        best[2] = d2;
        if (best[2] < best[1]) std::swap(best[1], best[2]);
        if (best[1] < best[0]) std::swap(best[0], best[1]);
      }
    }
    double mean = 0;
    for (int k = 0; k < want; ++k) mean += std::sqrt(double(best[k]));
    mean /= want;
    scale[i] = static_cast<float>(std::log(std::max(mean, 1e-6)));
  }

  std::mt19937_64 jitter_rng(config.seed ^ 0x9e3779b97f4a7c15ull);
  const float opacity_logit = static_cast<float>(std::log(0.1 / 0.9));
  GaussianField field;
  field.gaussians.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    Gaussian3f g;
    Eigen::Vector3f jitter = Eigen::Vector3f::Zero();
    for (int a = 0; a < 3; ++a) {
      jitter[a] = static_cast<float>(config.init_jitter * rng_normal(jitter_rng));
    }
    g.mu = points.positions[i] + jitter;
    g.rot = Eigen::Quaternionf::Identity();
    g.log_scale = Eigen::Vector3f::Constant(scale[i]);
    g.opacity_logit = opacity_logit;
    g.color = points.colors[i];
    field.gaussians.push_back(g);
  }
  field.reset_densify_stats();
  return field;
}

void densify_and_prune(GaussianField& field, const TrainConfig& config,
                       std::vector<AdamSlot>* adam_slots) {
  const size_t n = field.gaussians.size();
  CVGS_CHECK_MSG(field.grad2d_accum.size() == n && field.grad2d_count.size() == n,
                 "densify_and_prune: statistics out of sync with field");
  if (adam_slots) {
    CVGS_CHECK_MSG(adam_slots->size() == n,
                   "densify_and_prune: optimizer state out of sync with field");
  }
  const float log_split = std::log(static_cast<float>(config.split_scale));
  const float log_shrink = std::log(1.6f);
  const float ls_min = static_cast<float>(std::log(kScaleMin));
  const float ls_max = static_cast<float>(std::log(kScaleMax));

  std::vector<Gaussian3f> next;
  std::vector<AdamSlot> next_slots;
  next.reserve(n + n / 4);
  if (adam_slots) next_slots.reserve(next.capacity());

  for (size_t i = 0; i < n; ++i) {
    const Gaussian3f& g = field.gaussians[i];
    if (sigmoidf(g.opacity_logit) < static_cast<float>(config.prune_opacity)) {
      continue;  // too transparent to keep
    }
    const float mean_grad =
        field.grad2d_count[i] > 0
            ? field.grad2d_accum[i] / static_cast<float>(field.grad2d_count[i])
            : 0.0f;
    const bool densify =
        mean_grad > static_cast<float>(config.densify_grad_threshold);
    if (!densify) {
      next.push_back(g);
      if (adam_slots) next_slots.push_back((*adam_slots)[i]);
      continue;
    }
    int major = 0;
    g.log_scale.maxCoeff(&major);
    if (g.log_scale[major] > log_split) {
      // Split: two children along the major axis, each 1.6x smaller.
      const Eigen::Matrix3f rot = g.rot.normalized().toRotationMatrix();
      const Eigen::Vector3f offset =
          0.5f * std::exp(g.log_scale[major]) * rot.col(major);
      Gaussian3f child = g;
      child.log_scale =
          (g.log_scale.array() - log_shrink).cwiseMax(ls_min).cwiseMin(ls_max);
      child.mu = g.mu - offset;
      next.push_back(child);
      child.mu = g.mu + offset;
      next.push_back(child);
      if (adam_slots) {
        next_slots.emplace_back();
        next_slots.emplace_back();
      }
    } else {
      // Clone: keep the original (with its optimizer state) plus a copy that
      // starts optimizing from scratch.
      next.push_back(g);
      next.push_back(g);
      if (adam_slots) {
        next_slots.push_back((*adam_slots)[i]);
        next_slots.emplace_back();
      }
    }
  }
  CVGS_CHECK_MSG(!next.empty(), "densify_and_prune: every Gaussian was pruned");
  field.gaussians = std::move(next);
  field.reset_densify_stats();
  if (adam_slots) *adam_slots = std::move(next_slots);
}

TrainResult train(GaussianField field, const std::vector<TrainView>& views,
                  const TrainConfig& config) {
  config.validate();
  check_views(views);
  CVGS_CHECK_MSG(!field.gaussians.empty(), "train: empty field");
  field.reset_densify_stats();

  std::vector<AdamSlot> slots(field.gaussians.size());
  std::vector<size_t> schedule(views.size());
  std::iota(schedule.begin(), schedule.end(), size_t{0});
  std::mt19937_64 shuffle_rng(config.seed ^ 0xd1b54a32d192ed03ull);

  const float ls_min = static_cast<float>(std::log(kScaleMin));
  const float ls_max = static_cast<float>(std::log(kScaleMax));
  const int last_densify_step =
      static_cast<int>(config.densify_stop * config.iterations);

  TrainResult result;
  result.trace.reserve(config.iterations);

  for (int step = 1; step <= config.iterations; ++step) {
    if ((step - 1) % static_cast<int>(views.size()) == 0) {
      rng_shuffle(schedule, shuffle_rng);
    }
    const TrainView& view = views[schedule[(step - 1) % views.size()]];

    const RenderOutput out = render(field.gaussians, view.cam, config.render);
    ImageF implicit_ones;
    if (view.weight.empty()) {
      implicit_ones = ImageF(view.cam.width, view.cam.height, 1, 1.0f);
    }
    const ImageF& weights = view.weight.empty() ? implicit_ones : view.weight;
    const LossBreakdown<float> lb =
        total_loss(weights, out.color, view.target, field.gaussians, config.loss);
    CVGS_CHECK_MSG(std::isfinite(lb.total),
                   "train: non-finite loss at iteration "
                       << step << " on view '" << view.id << "'");
    result.trace.push_back({step, lb.l_color, lb.l_ssim, lb.l_vol, lb.total});

    FieldGradients grads =
        render_backward(field.gaussians, view.cam, config.render, out,
                        lb.d_color, lb.d_alpha);
    const size_t n = field.gaussians.size();
    for (size_t i = 0; i < n; ++i) {
      grads.params[i].d_log_scale += lb.d_log_scale[i];
      if (grads.visible[i]) {
        field.grad2d_accum[i] += grads.grad2d_norm[i];
        field.grad2d_count[i] += 1;
      }
    }

    const double lr_mu_now =
        config.lr_mu * std::pow(config.lr_mu_decay,
                                static_cast<double>(step - 1) /
                                    static_cast<double>(config.iterations));
    const double lr_by_param[kParamCount] = {
        lr_mu_now,          lr_mu_now,          lr_mu_now,
        config.lr_rot,      config.lr_rot,      config.lr_rot,
        config.lr_rot,      config.lr_log_scale, config.lr_log_scale,
        config.lr_log_scale, config.lr_opacity, config.lr_color,
        config.lr_color,    config.lr_color};

#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
      AdamSlot& slot = slots[i];
      slot.beta1_pow *= config.beta1;
      slot.beta2_pow *= config.beta2;
      const double bc1 = 1.0 - slot.beta1_pow;
      const double bc2 = 1.0 - slot.beta2_pow;
      float p[kParamCount];
      float gr[kParamCount];
      pack_params(field.gaussians[i], p);
      pack_grad(grads.params[i], gr);
      for (int j = 0; j < kParamCount; ++j) {
        const double g = gr[j];
        slot.m[j] = config.beta1 * slot.m[j] + (1.0 - config.beta1) * g;
        slot.v[j] = config.beta2 * slot.v[j] + (1.0 - config.beta2) * g * g;
        const double update = lr_by_param[j] * (slot.m[j] / bc1) /
                              (std::sqrt(slot.v[j] / bc2) + config.adam_eps);
        p[j] = static_cast<float>(p[j] - update);
      }
      Gaussian3f& gauss = field.gaussians[i];
      unpack_params(p, gauss);
      gauss.rot.normalize();
      gauss.log_scale =
          gauss.log_scale.cwiseMax(ls_min).cwiseMin(ls_max);
    }

    if (step >= config.densify_start && step <= last_densify_step &&
        step % config.densify_interval == 0) {
      densify_and_prune(field, config, &slots);
    }
  }

  result.field = std::move(field);
  return result;
}

std::vector<TrainResult> train_ensemble(const PointCloud& points,
                                        const std::vector<TrainView>& views,
                                        const TrainConfig& config) {
  config.validate();
  CVGS_CHECK_MSG(config.ensemble_size >= 2,
                 "train_ensemble: need at least 2 members");
  std::vector<TrainResult> members;
  members.reserve(config.ensemble_size);
  for (int k = 0; k < config.ensemble_size; ++k) {
    TrainConfig member_config = config;
    member_config.seed = config.seed + static_cast<uint64_t>(k);
    try {
      members.push_back(
          train(init_field(points, member_config), views, member_config));
    } catch (const CheckError& e) {
      CVGS_CHECK_MSG(false, "train_ensemble: member " << k << ": " << e.what());
    }
  }
  return members;
}

void write_trace_csv(const std::string& path,
                     const std::vector<TraceRow>& trace) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  CVGS_CHECK_MSG(f != nullptr, "write_trace_csv: cannot open " << path);
  std::fprintf(f, "iter,l_color,l_ssim,l_vol,total\n");
  for (const TraceRow& row : trace) {
    std::fprintf(f, "%d,%.9g,%.9g,%.9g,%.9g\n", row.iter, row.l_color,
                 row.l_ssim, row.l_vol, row.total);
  }
  CVGS_CHECK_MSG(std::fclose(f) == 0, "write_trace_csv: close failed for " << path);
}

}  // namespace cvgs
