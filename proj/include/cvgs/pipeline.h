// Copyright Contributors to the crossview-gs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "cvgs/io.h"
#include "cvgs/scene_io.h"
#include "cvgs/trainer.h"
#include "cvgs/uncertainty.h"

namespace cvgs {

// Training regimes compared by the experimental protocol: ground views
// only, ground + aerial with uniform pixel weights, and ground + aerial
// with cross-view uncertainty weights on the aerial pixels.
enum class Regime { kGround, kJoint, kUncertainty };
inline constexpr int kRegimeCount = 3;

const char* regime_name(Regime r);
Regime regime_from_name(const std::string& name);  // throws CheckError

// Shared experiment settings layered from defaults and a key=value file.
struct RunSettings {
  TrainConfig train;
  double n_root = 6.0;
  double tau_occ = 0.1;
  int protocol_seeds = 3;
  // Protocol seeds are spaced far apart so ensemble member seeds
  // (seed + member index) never collide across protocol repeats.
  uint64_t seed_stride = 1000;
};
RunSettings settings_from_config(const Config& cfg);

// File layout inside an uncertainty output directory.
std::string weight_map_path(const std::string& dir, const std::string& camera_id);
std::string raw_map_path(const std::string& dir, const std::string& camera_id);
std::string member_ckpt_path(const std::string& dir, int member);

// Supervised views for one regime. The uncertainty regime loads a weight
// map per aerial camera from `weights_dir` and fails with a pointer to the
// uncertainty stage when one is missing; other regimes ignore the argument.
std::vector<TrainView> build_train_views(const LoadedScene& scene,
                                         Regime regime,
                                         const std::string& weights_dir);

// init_field + train over the regime's views.
TrainResult train_regime(const LoadedScene& scene, Regime regime,
                         const TrainConfig& config,
                         const std::string& weights_dir);

// Ground-only ensemble members saved as member_<k>.ckpt (+ trace CSVs).
void save_ensemble(const std::vector<TrainResult>& members,
                   const std::string& dir);
std::vector<std::vector<Gaussian3f>> load_ensemble(const std::string& dir);

// Cross-view weights for every aerial training camera of the scene.
CrossViewWeights compute_scene_weights(
    const LoadedScene& scene,
    const std::vector<std::vector<Gaussian3f>>& members,
    const RenderOptions& opt, double n_root, double tau_occ, bool quiet);

// weight_<id>.ucmap (normalized, ready for training), raw_<id>.ucmap
// (pre-normalization, for re-rooting), weight_<id>.png (visualization).
void save_weight_maps(const CrossViewWeights& weights, const LoadedScene& scene,
                      const std::string& dir);

struct EvalRow {
  std::string image_id;
  SplitId split = SplitId::kHeldOut;
  double psnr_db = 0;
  double ssim = 0;
};
struct EvalSummary {
  std::vector<EvalRow> rows;
  double mean_psnr = 0;
  double mean_ssim = 0;
};
EvalSummary evaluate_field(const LoadedScene& scene,
                           const std::vector<Gaussian3f>& field, SplitId split,
                           const RenderOptions& opt);
void write_eval_csv(const std::string& path, const EvalSummary& summary);

struct ProtocolRow {
  Regime regime = Regime::kGround;
  SplitId split = SplitId::kHeldOut;
  uint64_t seed = 0;
  double psnr = 0;
  double ssim = 0;
};
struct ProtocolResult {
  std::vector<ProtocolRow> rows;
  // Mean over seeds for one (regime, split) cell.
  double mean_psnr(Regime r, SplitId s) const;
  double mean_ssim(Regime r, SplitId s) const;
  std::vector<double> seed_values(Regime r, SplitId s, bool want_psnr) const;
};

// Full comparison: per seed, train the three regimes on shared budgets and
// evaluate each on the held-out, shifted, and shifted+rotated splits.
ProtocolResult run_protocol(const LoadedScene& scene,
                            const RunSettings& settings, bool quiet);

void write_results_csv(const std::string& path, const ProtocolResult& result);
void write_summary_table(const std::string& path, const ProtocolResult& result);

struct AblationRow {
  double n = 0;
  double mean_psnr = 0;
  double mean_ssim = 0;
};

// Shares one trained ensemble across all n values: the raw projected maps
// are renormalized per n, then an uncertainty-weighted model is trained and
// scored on the held-out split.
std::vector<AblationRow> run_n_ablation(const LoadedScene& scene,
                                        const RunSettings& settings,
                                        const std::vector<double>& n_values,
                                        bool quiet);
void write_ablation_csv(const std::string& path,
                        const std::vector<AblationRow>& rows);

}  // namespace cvgs
