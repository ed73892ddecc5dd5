// Copyright Contributors to the crossview-gs Project
// SPDX-License-Identifier: Apache-2.0

#include "cvgs/pipeline.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>

#include "cvgs/check.h"
#include "cvgs/losses.h"

namespace cvgs {

namespace fs = std::filesystem;

const char* regime_name(Regime r) {
  switch (r) {
    case Regime::kGround: return "ground";
    case Regime::kJoint: return "joint";
    case Regime::kUncertainty: return "uc";
  }
  return "?";
}

Regime regime_from_name(const std::string& name) {
  if (name == "ground") return Regime::kGround;
  if (name == "joint") return Regime::kJoint;
  if (name == "uc") return Regime::kUncertainty;
  CVGS_CHECK_MSG(false, "unknown regime '" << name
                                           << "' (expected ground, joint, or uc)");
}

RunSettings settings_from_config(const Config& cfg) {
  RunSettings s;
  TrainConfig& t = s.train;
  t.iterations = cfg.get_int("iterations", t.iterations);
  t.seed = static_cast<uint64_t>(cfg.get_int("seed", static_cast<int>(t.seed)));
  t.loss.lambda_ssim = cfg.get_double("lambda_ssim", t.loss.lambda_ssim);
  t.loss.lambda_vol = cfg.get_double("lambda_vol", t.loss.lambda_vol);
  t.render.background.x() = cfg.get_double("background_r", t.render.background.x());
  t.render.background.y() = cfg.get_double("background_g", t.render.background.y());
  t.render.background.z() = cfg.get_double("background_b", t.render.background.z());
  t.render.tile_size = cfg.get_int("tile_size", t.render.tile_size);
  t.beta1 = cfg.get_double("beta1", t.beta1);
  t.beta2 = cfg.get_double("beta2", t.beta2);
  t.adam_eps = cfg.get_double("adam_eps", t.adam_eps);
  t.lr_mu = cfg.get_double("lr_mu", t.lr_mu);
  t.lr_mu_decay = cfg.get_double("lr_mu_decay", t.lr_mu_decay);
  t.lr_rot = cfg.get_double("lr_rot", t.lr_rot);
  t.lr_log_scale = cfg.get_double("lr_log_scale", t.lr_log_scale);
  t.lr_opacity = cfg.get_double("lr_opacity", t.lr_opacity);
  t.lr_color = cfg.get_double("lr_color", t.lr_color);
  t.densify_interval = cfg.get_int("densify_interval", t.densify_interval);
  t.densify_start = cfg.get_int("densify_start", t.densify_start);
  t.densify_stop = cfg.get_double("densify_stop", t.densify_stop);
  t.densify_grad_threshold =
      cfg.get_double("densify_grad_threshold", t.densify_grad_threshold);
  t.split_scale = cfg.get_double("split_scale", t.split_scale);
  t.prune_opacity = cfg.get_double("prune_opacity", t.prune_opacity);
  t.ensemble_size = cfg.get_int("members", t.ensemble_size);
  t.init_jitter = cfg.get_double("init_jitter", t.init_jitter);
  s.n_root = cfg.get_double("n_root", s.n_root);
  s.tau_occ = cfg.get_double("tau_occ", s.tau_occ);
  s.protocol_seeds = cfg.get_int("protocol_seeds", s.protocol_seeds);
  s.seed_stride = static_cast<uint64_t>(
      cfg.get_int("seed_stride", static_cast<int>(s.seed_stride)));
  t.validate();
  CVGS_CHECK_MSG(s.n_root >= 1.0, "settings: n_root must be >= 1");
  CVGS_CHECK_MSG(s.protocol_seeds >= 1, "settings: protocol_seeds must be >= 1");
  CVGS_CHECK_MSG(s.seed_stride >= static_cast<uint64_t>(t.ensemble_size),
                 "settings: seed_stride must exceed the ensemble size");
  return s;
}

std::string weight_map_path(const std::string& dir, const std::string& camera_id) {
  return dir + "/weight_" + camera_id + ".ucmap";
}

std::string raw_map_path(const std::string& dir, const std::string& camera_id) {
  return dir + "/raw_" + camera_id + ".ucmap";
}

std::string member_ckpt_path(const std::string& dir, int member) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "/member_%02d.ckpt", member);
  return dir + buf;
}

std::vector<TrainView> build_train_views(const LoadedScene& scene,
                                         Regime regime,
                                         const std::string& weights_dir) {
  std::vector<TrainView> views;
  for (const LoadedCamera& cam : scene.split(SplitId::kGroundTrain)) {
    TrainView v;
    v.id = cam.id;
    v.cam = cam.cam;
    v.target = load_view_image(scene, cam);
    views.push_back(std::move(v));
  }
  CVGS_CHECK_MSG(!views.empty(), "scene has no ground training views");
  if (regime == Regime::kGround) return views;

  const std::vector<LoadedCamera>& aerial = scene.split(SplitId::kAerialTrain);
  CVGS_CHECK_MSG(!aerial.empty(), "scene has no aerial training views");
  for (const LoadedCamera& cam : aerial) {
    TrainView v;
    v.id = cam.id;
    v.cam = cam.cam;
    v.target = load_view_image(scene, cam);
    if (regime == Regime::kUncertainty) {
      const std::string path = weight_map_path(weights_dir, cam.id);
      CVGS_CHECK_MSG(fs::exists(path),
                     "missing weight map '"
                         << path << "' for aerial view " << cam.id
                         << "; run the uncertainty stage over a trained "
                            "ensemble first");
      v.weight = read_ucmap(path);
      CVGS_CHECK_MSG(v.weight.width == cam.cam.width &&
                         v.weight.height == cam.cam.height,
                     "weight map '" << path << "' does not match camera "
                                    << cam.id);
      for (float w : v.weight.data) {
        CVGS_CHECK_MSG(std::isfinite(w) && w >= 0.0f,
                       "weight map '" << path << "' holds invalid weights");
      }
    }
    views.push_back(std::move(v));
  }
  return views;
}

TrainResult train_regime(const LoadedScene& scene, Regime regime,
                         const TrainConfig& config,
                         const std::string& weights_dir) {
  const std::vector<TrainView> views =
      build_train_views(scene, regime, weights_dir);
  return train(init_field(scene.points, config), views, config);
}

void save_ensemble(const std::vector<TrainResult>& members,
                   const std::string& dir) {
  fs::create_directories(dir);
  for (size_t k = 0; k < members.size(); ++k) {
    const std::string ckpt = member_ckpt_path(dir, static_cast<int>(k));
    members[k].field.save(ckpt);
    write_trace_csv(ckpt + ".trace.csv", members[k].trace);
  }
}

std::vector<std::vector<Gaussian3f>> load_ensemble(const std::string& dir) {
  std::vector<std::vector<Gaussian3f>> members;
  for (int k = 0;; ++k) {
    const std::string ckpt = member_ckpt_path(dir, k);
    if (!fs::exists(ckpt)) break;
    members.push_back(GaussianField::load(ckpt).gaussians);
  }
  CVGS_CHECK_MSG(members.size() >= 2,
                 "ensemble directory '" << dir
                                        << "' holds fewer than 2 member checkpoints");
  return members;
}

namespace {

std::vector<Camera> split_cameras(const LoadedScene& scene, SplitId split) {
  std::vector<Camera> cams;
  for (const LoadedCamera& cam : scene.split(split)) cams.push_back(cam.cam);
  return cams;
}

// Attaches in-memory weight maps to the aerial views, by camera id.
void attach_weights(std::vector<TrainView>& views, const LoadedScene& scene,
                    const std::vector<ImageF>& weights) {
  const std::vector<LoadedCamera>& aerial = scene.split(SplitId::kAerialTrain);
  CVGS_CHECK_MSG(weights.size() == aerial.size(),
                 "weight map count does not match aerial training views");
  std::map<std::string, size_t> index;
  for (size_t i = 0; i < aerial.size(); ++i) index[aerial[i].id] = i;
  for (TrainView& v : views) {
    auto it = index.find(v.id);
    if (it != index.end()) v.weight = weights[it->second];
  }
}

}  // namespace

CrossViewWeights compute_scene_weights(
    const LoadedScene& scene,
    const std::vector<std::vector<Gaussian3f>>& members,
    const RenderOptions& opt, double n_root, double tau_occ, bool quiet) {
  const std::vector<Camera> ground =
      split_cameras(scene, SplitId::kGroundTrain);
  const std::vector<Camera> aerial =
      split_cameras(scene, SplitId::kAerialTrain);
  CVGS_CHECK_MSG(!ground.empty() && !aerial.empty(),
                 "scene is missing ground or aerial training cameras");
  return build_cross_view_weights(members, ground, aerial, opt, n_root,
                                  tau_occ, quiet);
}

void save_weight_maps(const CrossViewWeights& weights, const LoadedScene& scene,
                      const std::string& dir) {
  const std::vector<LoadedCamera>& aerial = scene.split(SplitId::kAerialTrain);
  CVGS_CHECK_MSG(weights.weights.size() == aerial.size() &&
                     weights.raw_aerial.size() == aerial.size(),
                 "weight map count does not match aerial training views");
  fs::create_directories(dir);
  for (size_t i = 0; i < aerial.size(); ++i) {
    write_ucmap(weight_map_path(dir, aerial[i].id), weights.weights[i]);
    write_ucmap(raw_map_path(dir, aerial[i].id), weights.raw_aerial[i]);
    write_png(dir + "/weight_" + aerial[i].id + ".png", weights.weights[i]);
  }
}

EvalSummary evaluate_field(const LoadedScene& scene,
                           const std::vector<Gaussian3f>& field, SplitId split,
                           const RenderOptions& opt) {
  const std::vector<LoadedCamera>& cams = scene.split(split);
  CVGS_CHECK_MSG(!cams.empty(),
                 "split '" << split_name(split) << "' has no cameras");
  EvalSummary summary;
  double psnr_acc = 0;
  double ssim_acc = 0;
  for (const LoadedCamera& cam : cams) {
    const ImageF target = load_view_image(scene, cam);
    const RenderOutput out = render(field, cam.cam, opt);
    EvalRow row;
    row.image_id = cam.id;
    row.split = split;
    row.psnr_db = psnr(out.color, target);
    row.ssim = mean_ssim(out.color, target);
    psnr_acc += row.psnr_db;
    ssim_acc += row.ssim;
    summary.rows.push_back(std::move(row));
  }
  summary.mean_psnr = psnr_acc / static_cast<double>(cams.size());
  summary.mean_ssim = ssim_acc / static_cast<double>(cams.size());
  return summary;
}

void write_eval_csv(const std::string& path, const EvalSummary& summary) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  CVGS_CHECK_MSG(f != nullptr, "write_eval_csv: cannot open " << path);
  std::fprintf(f, "image_id,split,psnr_db,ssim\n");
  for (const EvalRow& row : summary.rows) {
    std::fprintf(f, "%s,%s,%.9g,%.9g\n", row.image_id.c_str(),
                 split_name(row.split), row.psnr_db, row.ssim);
  }
  CVGS_CHECK_MSG(std::fclose(f) == 0, "write_eval_csv: close failed");
}

double ProtocolResult::mean_psnr(Regime r, SplitId s) const {
  const std::vector<double> vals = seed_values(r, s, true);
  double acc = 0;
  for (double v : vals) acc += v;
  return vals.empty() ? 0.0 : acc / static_cast<double>(vals.size());
}

double ProtocolResult::mean_ssim(Regime r, SplitId s) const {
  const std::vector<double> vals = seed_values(r, s, false);
  double acc = 0;
  for (double v : vals) acc += v;
  return vals.empty() ? 0.0 : acc / static_cast<double>(vals.size());
}

std::vector<double> ProtocolResult::seed_values(Regime r, SplitId s,
                                                bool want_psnr) const {
  std::vector<double> vals;
  for (const ProtocolRow& row : rows) {
    if (row.regime == r && row.split == s) {
      vals.push_back(want_psnr ? row.psnr : row.ssim);
    }
  }
  return vals;
}

ProtocolResult run_protocol(const LoadedScene& scene,
                            const RunSettings& settings, bool quiet) {
  constexpr SplitId kTestSplits[] = {SplitId::kHeldOut, SplitId::kShifted,
                                     SplitId::kShiftedRot};
  ProtocolResult result;

  // The ground-regime views are a prefix of the joint views, so both are
  // derived from one load.
  std::vector<TrainView> joint_views =
      build_train_views(scene, Regime::kJoint, "");
  const size_t ground_count = scene.split(SplitId::kGroundTrain).size();
  const std::vector<TrainView> ground_views(
      joint_views.begin(), joint_views.begin() + ground_count);

  for (int rep = 0; rep < settings.protocol_seeds; ++rep) {
    TrainConfig cfg = settings.train;
    cfg.seed = settings.train.seed + settings.seed_stride * rep;
    if (!quiet) {
      std::fprintf(stderr,
                   "[protocol] seed %llu: training the %d-member ensemble\n",
                   static_cast<unsigned long long>(cfg.seed), cfg.ensemble_size);
    }
    const std::vector<TrainResult> members =
        train_ensemble(scene.points, ground_views, cfg);

    std::vector<std::vector<Gaussian3f>> member_fields;
    for (const TrainResult& m : members) member_fields.push_back(m.field.gaussians);
    const CrossViewWeights weights =
        compute_scene_weights(scene, member_fields, cfg.render,
                              settings.n_root, settings.tau_occ, quiet);

    if (!quiet) {
      std::fprintf(stderr, "[protocol] seed %llu: training joint regimes\n",
                   static_cast<unsigned long long>(cfg.seed));
    }
    // Member 0 trains on exactly the ground views with this seed, so it is
    // the ground-only regime for this repeat.
    const TrainResult& ground_run = members.front();
    const TrainResult joint_run =
        train(init_field(scene.points, cfg), joint_views, cfg);
    std::vector<TrainView> uc_views = joint_views;
    attach_weights(uc_views, scene, weights.weights);
    const TrainResult uc_run =
        train(init_field(scene.points, cfg), uc_views, cfg);

    const TrainResult* runs[kRegimeCount] = {&ground_run, &joint_run, &uc_run};
    const Regime regimes[kRegimeCount] = {Regime::kGround, Regime::kJoint,
                                          Regime::kUncertainty};
    for (int r = 0; r < kRegimeCount; ++r) {
      for (SplitId split : kTestSplits) {
        const EvalSummary eval = evaluate_field(scene, runs[r]->field.gaussians,
                                                split, cfg.render);
        result.rows.push_back(
            {regimes[r], split, cfg.seed, eval.mean_psnr, eval.mean_ssim});
      }
    }
  }
  return result;
}

void write_results_csv(const std::string& path, const ProtocolResult& result) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  CVGS_CHECK_MSG(f != nullptr, "write_results_csv: cannot open " << path);
  std::fprintf(f, "regime,split,seed,psnr,ssim\n");
  for (const ProtocolRow& row : result.rows) {
    std::fprintf(f, "%s,%s,%llu,%.9g,%.9g\n", regime_name(row.regime),
                 split_name(row.split),
                 static_cast<unsigned long long>(row.seed), row.psnr, row.ssim);
  }
  CVGS_CHECK_MSG(std::fclose(f) == 0, "write_results_csv: close failed");
}

namespace {

std::string cell(const ProtocolResult& result, Regime r, SplitId s,
                 bool want_psnr) {
  const std::vector<double> vals = result.seed_values(r, s, want_psnr);
  if (vals.empty()) return "-";
  double mean = 0, lo = vals[0], hi = vals[0];
  for (double v : vals) {
    mean += v;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  mean /= static_cast<double>(vals.size());
  char buf[64];
  if (want_psnr) {
    std::snprintf(buf, sizeof(buf), "%6.2f +-%.2f", mean, (hi - lo) / 2.0);
  } else {
    std::snprintf(buf, sizeof(buf), "%6.4f +-%.4f", mean, (hi - lo) / 2.0);
  }
  return buf;
}

}  // namespace

void write_summary_table(const std::string& path,
                         const ProtocolResult& result) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  CVGS_CHECK_MSG(f != nullptr, "write_summary_table: cannot open " << path);
  constexpr SplitId kTestSplits[] = {SplitId::kHeldOut, SplitId::kShifted,
                                     SplitId::kShiftedRot};
  constexpr Regime kRegimes[] = {Regime::kGround, Regime::kJoint,
                                 Regime::kUncertainty};

  std::fprintf(f, "Mean +- half-range over seeds\n\n");
  std::fprintf(f, "%-10s", "regime");
  for (SplitId s : kTestSplits) {
    std::fprintf(f, " | %-15s PSNR | %-15s SSIM", split_name(s), split_name(s));
  }
  std::fprintf(f, "\n");
  for (Regime r : kRegimes) {
    std::fprintf(f, "%-10s", regime_name(r));
    for (SplitId s : kTestSplits) {
      std::fprintf(f, " | %-20s | %-20s", cell(result, r, s, true).c_str(),
                   cell(result, r, s, false).c_str());
    }
    std::fprintf(f, "\n");
  }

  const std::vector<double> uc =
      result.seed_values(Regime::kUncertainty, SplitId::kHeldOut, true);
  const std::vector<double> joint =
      result.seed_values(Regime::kJoint, SplitId::kHeldOut, true);
  if (uc.size() == joint.size() && !uc.empty()) {
    std::fprintf(f, "\nHeld-out PSNR, uncertainty-weighted minus equal-weight:");
    double mean = 0;
    for (size_t i = 0; i < uc.size(); ++i) {
      std::fprintf(f, " %+.3f", uc[i] - joint[i]);
      mean += uc[i] - joint[i];
    }
    std::fprintf(f, " (mean %+.3f)\n", mean / static_cast<double>(uc.size()));
  }
  std::fprintf(f,
               "Full-scale reference deltas for the same comparison, for "
               "context: +0.66 and +0.59 dB (city-scale scenes).\n");
  CVGS_CHECK_MSG(std::fclose(f) == 0, "write_summary_table: close failed");
}

std::vector<AblationRow> run_n_ablation(const LoadedScene& scene,
                                        const RunSettings& settings,
                                        const std::vector<double>& n_values,
                                        bool quiet) {
  CVGS_CHECK_MSG(!n_values.empty(), "run_n_ablation: empty n list");
  for (double n : n_values) {
    CVGS_CHECK_MSG(n >= 1.0, "run_n_ablation: root order must be >= 1, got " << n);
  }
  TrainConfig cfg = settings.train;

  std::vector<TrainView> joint_views =
      build_train_views(scene, Regime::kJoint, "");
  const size_t ground_count = scene.split(SplitId::kGroundTrain).size();
  const std::vector<TrainView> ground_views(
      joint_views.begin(), joint_views.begin() + ground_count);

  if (!quiet) {
    std::fprintf(stderr, "[ablate-n] training the shared %d-member ensemble\n",
                 cfg.ensemble_size);
  }
  const std::vector<TrainResult> members =
      train_ensemble(scene.points, ground_views, cfg);
  std::vector<std::vector<Gaussian3f>> member_fields;
  for (const TrainResult& m : members) member_fields.push_back(m.field.gaussians);

  // One projection pass; only the normalization depends on n.
  CrossViewWeights shared =
      compute_scene_weights(scene, member_fields, cfg.render, settings.n_root,
                            settings.tau_occ, quiet);

  std::vector<AblationRow> rows;
  for (double n : n_values) {
    if (!quiet) {
      std::fprintf(stderr, "[ablate-n] n=%g: training and evaluating\n", n);
    }
    const NormalizedMaps maps = normalize_maps(shared.raw_aerial, n, quiet);
    std::vector<TrainView> uc_views = joint_views;
    attach_weights(uc_views, scene, maps.maps);
    const TrainResult run = train(init_field(scene.points, cfg), uc_views, cfg);
    const EvalSummary eval = evaluate_field(scene, run.field.gaussians,
                                            SplitId::kHeldOut, cfg.render);
    rows.push_back({n, eval.mean_psnr, eval.mean_ssim});
  }
  return rows;
}

void write_ablation_csv(const std::string& path,
                        const std::vector<AblationRow>& rows) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  CVGS_CHECK_MSG(f != nullptr, "write_ablation_csv: cannot open " << path);
  std::fprintf(f, "n,psnr,ssim\n");
  for (const AblationRow& row : rows) {
    std::fprintf(f, "%g,%.9g,%.9g\n", row.n, row.mean_psnr, row.mean_ssim);
  }
  CVGS_CHECK_MSG(std::fclose(f) == 0, "write_ablation_csv: close failed");
}

}  // namespace cvgs
