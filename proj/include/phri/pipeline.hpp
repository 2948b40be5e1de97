// Copyright 2026 The phri Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#ifndef PHRI_PIPELINE_HPP
#define PHRI_PIPELINE_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "phri/dynamics.hpp"
#include "phri/game.hpp"
#include "phri/intent_net.hpp"
#include "phri/simulation.hpp"

namespace phri {

// ---------------------------------------------------------------------------
// Windows and datasets

enum class TargetSource { kMeasured, kTrueIntent };

/// L × 4d matrix of (x, v, u_h, x_ref_r) rows.
Mat episode_features(const Episode& episode);
/// L × d matrix of measured positions.
Mat episode_positions(const Episode& episode);

/// One sample per T ∈ [k−1, L−N−1] (0-based) whose rows T−k+1..T form the
/// input and positions T+1..T+N the target. Returns nothing when L < k + N.
std::vector<Sample> make_windows(const Episode& episode, int k, int N,
                                 TargetSource target = TargetSource::kMeasured,
                                 int stride = 1);

/// L − k − N + 1 for L ≥ k + N, otherwise 0.
std::size_t window_count(std::size_t length, int k, int N);

struct DatasetProvenance {
  std::string model_id;  // model in the loop during collection
  int iteration = 0;
  std::string context;   // user / object / trajectory id
};

struct Dataset {
  std::vector<Episode> episodes;
  std::vector<Sample> windows;
  std::optional<Normalization> normalization;
  DatasetProvenance provenance;
};

Dataset build_dataset(std::vector<Episode> episodes, const PredictorConfig& config,
                      int stride = 1, TargetSource target = TargetSource::kMeasured);

/// Per-feature mean and population standard deviation over every input row
/// and every target (in the model's output parametrization). Zero-variance
/// features get scale 1.
Normalization fit_normalization(std::span<const Sample> windows,
                                const PredictorConfig& config);

struct TrainOptions {
  int epochs = 25;
  int batch_size = 64;
  double learning_rate = 1e-3;
  FreezePolicy freeze = FreezePolicy::kNone;
};

struct TrainResult {
  PredictorModel model;
  std::vector<double> loss_trace;  // mean batch loss per epoch
  double seconds = 0.0;
};

/// Shuffled mini-batch training from `base` (or a fresh model). Embeds the
/// dataset's normalization, else the base model's, else one fitted on the
/// windows.
TrainResult train_model(const Dataset& dataset, const PredictorConfig& config,
                        const PredictorModel* base, const TrainOptions& options,
                        std::uint64_t seed);

/// FC-only fine-tuning: recurrent blocks frozen and left bit-identical.
TrainResult transfer_learn(const PredictorModel& base, const Dataset& dataset,
                           TrainOptions options, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Metrics

/// sqrt(mean over j = 1..n of ‖prediction[j−1] − measured[T+j]‖²).
double window_rms(const Mat& prediction, const Mat& measured, std::size_t T, int n);

/// Mean over every step T with a stored prediction (and n measured samples
/// ahead) of the per-window RMS. Throws InvalidArgument when a stored
/// prediction has fewer than n rows.
double e_rms(std::span<const Mat> predictions, const Mat& measured, int n);

/// Maximum of the same per-window RMS.
double e_max(std::span<const Mat> predictions, const Mat& measured, int n);

/// sqrt(mean over records of ‖u_h‖²).
double f_rms(const Episode& episode);

struct WelchResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;  // two-sided
};

/// Unequal-variance two-sample t-test.
WelchResult welch_t_test(std::span<const double> a, std::span<const double> b);

/// Survival function of Student's t distribution, P(T > t).
double student_t_sf(double t, double df);

/// Regularized incomplete beta I_x(a, b) by Lentz continued fraction.
double incomplete_beta(double a, double b, double x);

// ---------------------------------------------------------------------------
// Reports

struct HorizonMetrics {
  int horizon = 0;
  double e_rms = 0.0;
  double e_max = 0.0;
  double e_rms_std = 0.0;
  double e_max_std = 0.0;
};

struct EpisodeMetrics {
  std::string trajectory;
  std::uint64_t seed = 0;
  std::vector<double> e_rms;  // per horizon
  std::vector<double> e_max;
  double f_rms = 0.0;
};

struct EvalReport {
  std::string model_id;
  std::uint64_t seed = 0;
  std::vector<HorizonMetrics> horizons;
  double f_rms = 0.0;
  std::vector<EpisodeMetrics> episodes;

  const HorizonMetrics& at(int horizon) const;
  nlohmann::json to_json() const;
};

/// Closed-loop evaluation from predictions logged during rollouts.
EvalReport evaluate_rollouts(std::span<const Rollout> rollouts,
                             std::span<const int> horizons, std::string model_id,
                             std::uint64_t seed);

/// Open-loop evaluation: model predictions on every window of the episodes.
EvalReport evaluate_offline(const PredictorModel& model,
                            std::span<const Episode> episodes,
                            std::span<const int> horizons, std::string model_id,
                            std::uint64_t seed);

inline constexpr const char* kReportCsvHeader = "model,horizon,e_rms,e_max,f_rms,seed";
/// Appends one CSV row per horizon.
void append_csv_rows(const EvalReport& report, std::string& csv);

// ---------------------------------------------------------------------------
// Experiment drivers

/// Scenario streams under one run seed.
inline constexpr std::uint64_t kHeldOutStream = 1;
inline constexpr std::uint64_t kTrainStream = 100;  // + iteration index
inline constexpr std::uint64_t kTransferStream = 200;
inline constexpr std::uint64_t kTransferEvalStream = 201;
inline constexpr std::uint64_t kCompareStream = 300;

/// Closed-loop setup shared by collection, evaluation and comparison.
struct Environment {
  PlantParams plant = PlantParams::defaults();
  GameWeights weights = GameWeights::defaults();
  HumanModel human = HumanModel::defaults();
  std::vector<TrajectoryKind> trajectories = {
      TrajectoryKind::kLinear, TrajectoryKind::kCurved, TrajectoryKind::kSinusoidal};
  double duration = 10.0;
  double obstacle_half_width = 0.02;
  bool obstacles = true;
  int pick_index = 20;
};

struct Scenario {
  TrajectorySpec trajectory;
  std::optional<Obstacle> obstacle;
  std::uint64_t noise_seed = 0;
};

/// Deterministic scenario `index` of stream `stream` under `seed`.
Scenario make_scenario(const Environment& env, std::uint64_t seed,
                       std::uint64_t stream, std::size_t index);

/// Runs one scenario under the given controller kind; GT uses `predictor`
/// when given, the nominal reference otherwise.
Rollout run_scenario(const Environment& env, const Scenario& scenario,
                     ControllerKind kind, const PredictorModel* predictor,
                     const std::string& model_id);

/// Collects `count` episodes of stream `stream`.
std::vector<Rollout> collect(const Environment& env, std::uint64_t seed,
                             std::uint64_t stream, std::size_t count,
                             ControllerKind kind, const PredictorModel* predictor,
                             const std::string& model_id);

/// Thrown when a rollout leaves the configured state bound.
class SimulationDiverged : public NumericalError {
 public:
  SimulationDiverged(const std::string& what, Episode partial)
      : NumericalError(what), partial_(std::move(partial)) {}
  const Episode& partial() const { return partial_; }

 private:
  Episode partial_;
};

struct IterateConfig {
  PredictorConfig predictor = PredictorConfig::desk();
  TrainOptions train;
  int episodes_per_iteration = 10;
  double holdout_fraction = 0.2;
  int max_iters = 4;
  double tol = 1e-4;  // m, on |Δe_RMS| at the largest horizon
  std::vector<int> horizons = {2, 5, 10};
  int window_stride = 4;
  TargetSource target = TargetSource::kMeasured;
};

struct IterationRecord {
  int index = 0;
  std::string model_id;
  EvalReport report;
  double collect_seconds = 0.0;
  double train_seconds = 0.0;
  std::vector<double> loss_trace;
};

struct IterateOutcome {
  std::vector<PredictorModel> models;  // M_0..M_K
  std::vector<IterationRecord> iterations;
  bool converged = false;
  std::string error;  // non-empty when an iteration aborted
};

using ProgressFn = std::function<void(const std::string&)>;

/// Collect–train loop: D_0 under GT with x̂_ref,h = x_ref,r trains M_0; each
/// later D_k is collected with M_{k−1} in the loop and warm-starts M_k.
/// Every model is evaluated in closed loop on held-out scenarios that are the
/// same for all iterations. Stops when |Δe_RMS| < tol or after max_iters.
IterateOutcome iterate(const Environment& env, const IterateConfig& config,
                       std::uint64_t seed, const ProgressFn& progress = {});

std::string iteration_csv(const IterateOutcome& outcome);

enum class TransferKind { kNewTrajectory, kNewUser, kObject };

std::string to_string(TransferKind kind);
TransferKind parse_transfer_kind(std::string_view name);

struct TransferContext {
  TransferKind kind = TransferKind::kNewUser;
  double gain_scale = 1.5;
  double object_mass = 5.0;
  double object_damping_scale = 2.0;
};

/// Environment of the new user / object / trajectory.
Environment apply_context(const Environment& env, const TransferContext& context);

struct TransferConfig {
  int episodes = 3;
  int eval_episodes = 4;
  TrainOptions train = {10, 64, 1e-4, FreezePolicy::kFreezeRecurrent};
  std::vector<int> horizons = {2, 5, 10};
  int window_stride = 4;
};

struct TransferOutcome {
  PredictorModel model;
  EvalReport before;
  EvalReport after;
  double seconds = 0.0;  // TL data collection plus fine-tuning
};

TransferOutcome run_transfer(const Environment& env, const TransferContext& context,
                             const PredictorModel& base, const TransferConfig& config,
                             std::uint64_t seed);

struct ControllerSummary {
  std::string controller;
  std::vector<double> f_rms;
  double mean = 0.0;
  double stddev = 0.0;
};

struct PairwiseTest {
  std::string a;
  std::string b;
  WelchResult result;
};

struct ComparisonReport {
  std::vector<ControllerSummary> controllers;  // MG, IMP, GT (GT only with a model)
  std::vector<PairwiseTest> tests;
  nlohmann::json to_json() const;
  std::string to_csv() const;
};

/// Matched-seed f_RMS comparison of MG, IMP and GT.
ComparisonReport compare_controllers(const Environment& env, const PredictorModel* model,
                                     std::size_t episodes, std::uint64_t seed);

}  // namespace phri

#endif  // PHRI_PIPELINE_HPP
