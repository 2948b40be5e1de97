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


#ifndef PHRI_SIMULATION_HPP
#define PHRI_SIMULATION_HPP

#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "phri/dynamics.hpp"
#include "phri/game.hpp"
#include "phri/intent_net.hpp"

namespace phri {

/// Anything that maps the last k feature rows to N predicted positions.
class IntentPredictor {
 public:
  virtual ~IntentPredictor() = default;
  virtual int window_length() const = 0;
  virtual int horizon() const = 0;
  /// `window` is k × 4d in physical units; `t` is the time of its last row.
  virtual Mat predict(const Mat& window, double t) const = 0;
  virtual std::string id() const { return {}; }
};

/// Adapter running a PredictorModel. The model must outlive the adapter.
class ModelPredictor final : public IntentPredictor {
 public:
  ModelPredictor(const PredictorModel& model, std::string id)
      : model_(&model), id_(std::move(id)) {}

  int window_length() const override { return model_->config().window_k; }
  int horizon() const override { return model_->config().horizon_N; }
  Mat predict(const Mat& window, double) const override {
    return forward(*model_, window);
  }
  std::string id() const override { return id_; }

 private:
  const PredictorModel* model_;
  std::string id_;
};

struct ControllerSetup {
  ControllerKind kind = ControllerKind::kGT;
  std::shared_ptr<const GameController> game;  // required for kGT
  int pick_index = 20;                         // 1-based point of the horizon
};

/// The plant to simulate for a controller: the impedance variant for IMP,
/// the base plant otherwise.
PlantParams controller_plant(ControllerKind kind, const PlantParams& base);

/// Stateful fixed-step closed loop shared by offline rollouts, replay and
/// the live service. Each step holds u_h and u_r constant over dt (exact
/// ZOH). IMP and GT render the impedance around the moving nominal
/// reference; MG is a passive admittance.
class ClosedLoop {
 public:
  ClosedLoop(PlantParams plant, TrajectorySpec trajectory,
             ControllerSetup controller, const IntentPredictor* predictor);

  /// Starts at rest on the trajectory start unless given an explicit state.
  void reset(std::optional<PlantState> initial = std::nullopt);

  const PlantState& state() const { return state_; }
  std::size_t step_index() const { return step_; }
  double dt() const { return plant_.dt; }
  const PlantParams& plant() const { return plant_; }
  const TrajectorySpec& trajectory() const { return trajectory_; }
  const ControllerSetup& controller() const { return controller_; }

  /// Records the current sample with the given human force, then advances
  /// the plant by one period.
  EpisodeRecord step(const Vec& u_h, const Vec& x_ref_h_true);

  /// Prediction used at the last step (empty when none was available).
  const Mat& last_prediction() const { return last_prediction_; }
  /// Shared reference z_ref used at the last step (GT only).
  const Vec& last_reference() const { return last_reference_; }

 private:
  Vec robot_effort(const Vec& u_h);

  PlantParams plant_;
  TrajectorySpec trajectory_;
  ControllerSetup controller_;
  const IntentPredictor* predictor_;
  DiscreteSystem discrete_;
  PlantState state_;
  std::size_t step_ = 0;
  std::deque<Eigen::RowVectorXd> history_;
  Mat last_prediction_;
  Vec last_reference_;
};

struct SimulationOptions {
  double blowup_bound = 1e3;  // any |x| or |v| above this aborts
  std::string model_id;
};

struct Rollout {
  Episode episode;
  std::vector<Mat> predictions;  // per record; empty when unavailable
};

/// Rolls a synthetic human through one episode. Deterministic in `seed`
/// (which only drives the force noise).
Rollout simulate_episode(const PlantParams& plant, const TrajectorySpec& spec,
                         const std::optional<Obstacle>& obstacle,
                         const HumanModel& human,
                         const ControllerSetup& controller,
                         const IntentPredictor* predictor, std::uint64_t seed,
                         const SimulationOptions& options = {});

/// Re-runs a logged episode feeding its recorded u_h sequence.
Rollout replay_episode(const Episode& logged, const ControllerSetup& controller,
                       const IntentPredictor* predictor);

}  // namespace phri

#endif  // PHRI_SIMULATION_HPP
