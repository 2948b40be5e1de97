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


#include "phri/simulation.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace phri {

namespace {

Mat nominal_horizon(const TrajectorySpec& spec, double t, int rows, double dt) {
  Mat out(rows, spec.dof());
  for (int j = 0; j < rows; ++j) out.row(j) = nominal_position(spec, t + (j + 1) * dt).transpose();
  return out;
}

bool within_bound(const PlantState& s, double bound) {
  const auto ok = [bound](const Vec& v) {
    return v.allFinite() && (v.size() == 0 || v.cwiseAbs().maxCoeff() <= bound);
  };
  return ok(s.x) && ok(s.v);
}

}  // namespace

PlantParams controller_plant(ControllerKind kind, const PlantParams& base) {
  return kind == ControllerKind::kIMP ? impedance_variant(base) : base;
}

ClosedLoop::ClosedLoop(PlantParams plant, TrajectorySpec trajectory, ControllerSetup controller,
                       const IntentPredictor* predictor)
    : plant_(controller_plant(controller.kind, plant)),
      trajectory_(std::move(trajectory)),
      controller_(std::move(controller)),
      predictor_(predictor) {
  plant_.validate();
  trajectory_.validate();
  if (trajectory_.dof() != plant_.dof()) {
    throw InvalidArgument("closed loop: trajectory and plant must have the same dof");
  }
  if (controller_.kind == ControllerKind::kGT) {
    if (!controller_.game) throw InvalidArgument("closed loop: GT requires a game controller");
    if (controller_.game->dof() != plant_.dof()) {
      throw InvalidArgument("closed loop: game controller dof differs from the plant");
    }
    if (controller_.pick_index < 1) throw InvalidArgument("closed loop: pick_index must be >= 1");
    if (predictor_ && controller_.pick_index > predictor_->horizon()) {
      throw InvalidArgument("closed loop: pick_index " + std::to_string(controller_.pick_index) +
                            " exceeds the predictor horizon " +
                            std::to_string(predictor_->horizon()));
    }
  }
  const StateSpace ss = build_state_space(plant_);
  discrete_ = discretize(ss.A, ss.B_h, plant_.dt);
  reset();
}

void ClosedLoop::reset(std::optional<PlantState> initial) {
  if (initial) {
    if (initial->x.size() != plant_.dof() || initial->v.size() != plant_.dof()) {
      throw InvalidArgument("closed loop: initial state must have length d");
    }
    state_ = *initial;
  } else {
    state_.x = nominal_position(trajectory_, 0.0);
    state_.v = Vec::Zero(plant_.dof());
  }
  step_ = 0;
  state_.t = 0.0;
  history_.clear();
  last_prediction_.resize(0, 0);
  last_reference_.resize(0);
}

Vec ClosedLoop::robot_effort(const Vec& u_h) {
  const int d = plant_.dof();
  const double t = state_.t;
  const double dt = plant_.dt;
  const Vec x_ref_r = nominal_position(trajectory_, t);

  if (predictor_) {
    Eigen::RowVectorXd row(4 * d);
    row << state_.x.transpose(), state_.v.transpose(), u_h.transpose(), x_ref_r.transpose();
    history_.push_back(std::move(row));
    const auto k = static_cast<std::size_t>(predictor_->window_length());
    while (history_.size() > k) history_.pop_front();
    if (history_.size() == k) {
      Mat window(static_cast<Eigen::Index>(k), 4 * d);
      for (std::size_t i = 0; i < k; ++i) window.row(static_cast<Eigen::Index>(i)) = history_[i];
      last_prediction_ = predictor_->predict(window, t);
    } else {
      last_prediction_.resize(0, 0);
    }
  }

  if (controller_.kind == ControllerKind::kMG) return Vec::Zero(d);

  // Exogenous term rendering the impedance around the moving nominal.
  const Vec feedforward = plant_.stiffness.cwiseProduct(x_ref_r) +
                          plant_.damping.cwiseProduct(nominal_velocity(trajectory_, t)) +
                          plant_.mass.cwiseProduct(nominal_acceleration(trajectory_, t));
  if (controller_.kind == ControllerKind::kIMP) return feedforward;

  const int pick = controller_.pick_index;
  const Vec z_ref_r = reference_from_prediction(nominal_horizon(trajectory_, t, pick, dt),
                                                state_.x, pick, dt);
  const Vec z_ref_h = last_prediction_.size() > 0
                          ? reference_from_prediction(last_prediction_, state_.x, pick, dt)
                          : z_ref_r;
  last_reference_ = controller_.game->shared_reference(z_ref_h, z_ref_r);
  Vec z(2 * d);
  z << state_.x, state_.v;
  return controller_.game->robot_action(z, last_reference_) + feedforward;
}

EpisodeRecord ClosedLoop::step(const Vec& u_h, const Vec& x_ref_h_true) {
  const int d = plant_.dof();
  if (u_h.size() != d) throw InvalidArgument("closed loop: u_h must have length d");
  if (!u_h.allFinite()) throw InvalidArgument("closed loop: u_h must be finite");
  state_.t = static_cast<double>(step_) * plant_.dt;
  const Vec effort = robot_effort(u_h);

  EpisodeRecord rec;
  rec.t = state_.t;
  rec.x = state_.x;
  rec.v = state_.v;
  rec.u_h = u_h;
  rec.x_ref_r = nominal_position(trajectory_, state_.t);
  rec.x_ref_h_true = x_ref_h_true;
  // Only the game controller's assistive action is reported as u_r; the
  // nominal-rendering term belongs to the impedance itself.
  rec.u_r = Vec::Zero(d);
  if (controller_.kind == ControllerKind::kGT) {
    Vec z(2 * d);
    z << state_.x, state_.v;
    rec.u_r = controller_.game->robot_action(z, last_reference_);
  }
  rec.tag = to_string(controller_.kind);

  Vec z(2 * d);
  z << state_.x, state_.v;
  const Vec next = discrete_.A_d * z + discrete_.B_d * (u_h + effort);
  state_.x = next.head(d);
  state_.v = next.tail(d);
  ++step_;
  state_.t = static_cast<double>(step_) * plant_.dt;
  return rec;
}

Rollout simulate_episode(const PlantParams& plant, const TrajectorySpec& spec,
                         const std::optional<Obstacle>& obstacle, const HumanModel& human,
                         const ControllerSetup& controller, const IntentPredictor* predictor,
                         std::uint64_t seed, const SimulationOptions& options) {
  human.validate();
  if (human.dof() != plant.dof()) {
    throw InvalidArgument("simulate_episode: human model and plant must have the same dof");
  }
  ClosedLoop loop(plant, spec, controller, predictor);
  const IntentGenerator intent(spec, obstacle, human);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);

  Rollout out;
  EpisodeMeta& meta = out.episode.meta;
  meta.plant = plant;
  meta.trajectory = spec;
  meta.obstacle = obstacle;
  meta.human = human;
  meta.controller = to_string(controller.kind);
  meta.model_id = predictor ? (options.model_id.empty() ? predictor->id() : options.model_id)
                            : std::string();
  meta.seed = seed;

  const std::size_t n = step_count(spec.duration, plant.dt);
  out.episode.records.reserve(n);
  out.predictions.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const PlantState& s = loop.state();
    const double t = static_cast<double>(i) * plant.dt;
    const Vec target = intent(t);
    Vec u_h = human_force(human, s.x, s.v, target);
    if (human.noise_std > 0.0) {
      for (Eigen::Index a = 0; a < u_h.size(); ++a) u_h(a) += human.noise_std * noise(rng);
      u_h = clamp_norm(u_h, human.force_cap);
    }
    out.episode.records.push_back(loop.step(u_h, target));
    out.predictions.push_back(loop.last_prediction());
    if (!within_bound(loop.state(), options.blowup_bound)) {
      std::ostringstream msg;
      msg << "state left the bound " << options.blowup_bound << " at t = "
          << static_cast<double>(i + 1) * plant.dt << " s";
      meta.aborted = true;
      meta.diagnostic = msg.str();
      break;
    }
  }
  return out;
}

Rollout replay_episode(const Episode& logged, const ControllerSetup& controller,
                       const IntentPredictor* predictor) {
  if (logged.records.empty()) throw InvalidArgument("replay_episode: episode has no records");
  ClosedLoop loop(logged.meta.plant, logged.meta.trajectory, controller, predictor);
  PlantState start;
  start.x = logged.records.front().x;
  start.v = logged.records.front().v;
  loop.reset(start);
  Rollout out;
  out.episode.meta = logged.meta;
  out.episode.meta.controller = to_string(controller.kind);
  out.episode.meta.model_id = predictor ? predictor->id() : std::string();
  out.episode.records.reserve(logged.records.size());
  for (const auto& rec : logged.records) {
    out.episode.records.push_back(loop.step(rec.u_h, rec.x_ref_h_true));
    out.predictions.push_back(loop.last_prediction());
  }
  return out;
}

}  // namespace phri
