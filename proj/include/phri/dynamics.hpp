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


#ifndef PHRI_DYNAMICS_HPP
#define PHRI_DYNAMICS_HPP

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "phri/common.hpp"

namespace phri {

/// Diagonal Cartesian impedance M·ẍ + C·ẋ + K·x = u on d translational axes.
struct PlantParams {
  Vec mass;       // kg
  Vec damping;    // N·s/m
  Vec stiffness;  // N/m
  double dt = 0.008;

  int dof() const { return static_cast<int>(mass.size()); }
  void validate() const;

  static PlantParams diagonal(int dof, double mass, double damping,
                              double stiffness, double dt);
  /// M = 10, C = 100, K = 0 per axis, sampled at 8 ms.
  static PlantParams defaults(int dof = 2);
};

/// Impedance-control variant of a plant: same mass, the given stiffness and
/// damping at `damping_ratio` of critical, C = ratio·2·sqrt(K·M).
PlantParams impedance_variant(const PlantParams& base, double stiffness = 200.0,
                              double damping_ratio = 0.9);

/// Adds a co-manipulated object's mass to every axis.
PlantParams with_object(const PlantParams& base, double object_mass);

struct PlantState {
  Vec x;
  Vec v;
  double t = 0.0;
};

struct StateSpace {
  Mat A;    // 2d×2d
  Mat B_h;  // 2d×d
  Mat B_r;  // 2d×d
  Mat B() const;  // [B_h B_r]
};

StateSpace build_state_space(const PlantParams& p);

struct DiscreteSystem {
  Mat A_d;
  Mat B_d;
};

/// Exact zero-order-hold discretization through the exponential of the
/// augmented matrix [[A, B], [0, 0]]·dt.
DiscreteSystem discretize(const Mat& A, const Mat& B, double dt);

// ---------------------------------------------------------------------------
// Nominal trajectories

enum class TrajectoryKind { kLinear, kCurved, kSinusoidal, kEval };

std::string to_string(TrajectoryKind kind);
/// Throws InvalidArgument naming the offending string.
TrajectoryKind parse_trajectory_kind(std::string_view name);

/// Planar reference path (first two axes; further axes hold the start value)
/// traversed with a minimum-jerk time law over `duration`.
struct TrajectorySpec {
  TrajectoryKind kind = TrajectoryKind::kLinear;
  Vec start;
  double length = 0.4;       // linear and sinusoidal extent along x (m)
  double radius = 0.2;       // curved half-arc radius; eval uses radius / 2
  double amplitude = 0.05;   // sinusoidal lateral amplitude (m)
  double wavelength = 0.2;   // sinusoidal wavelength (m)
  double duration = 10.0;    // s

  int dof() const { return static_cast<int>(start.size()); }
  void validate() const;
  static TrajectorySpec defaults(TrajectoryKind kind, int dof = 2);
};

/// Position on the path and its first two derivatives with respect to the
/// path parameter u ∈ [0, 1].
struct PathSample {
  Eigen::Vector2d p;
  Eigen::Vector2d dp;
  Eigen::Vector2d ddp;
};

PathSample path_sample(const TrajectorySpec& spec, double u);

/// Time law u = s(t / duration); clamps to [0, 1].
double path_parameter(const TrajectorySpec& spec, double t);

Vec nominal_position(const TrajectorySpec& spec, double t);
Vec nominal_velocity(const TrajectorySpec& spec, double t);
Vec nominal_acceleration(const TrajectorySpec& spec, double t);

// ---------------------------------------------------------------------------
// Obstacle and synthetic human

struct Obstacle {
  Vec center;
  double half_width = 0.02;
  double arc_fraction = 0.5;
  int side = 1;  // +1 detours to the left of the direction of travel
};

inline constexpr double kObstacleBandLow = 0.25;
inline constexpr double kObstacleBandHigh = 0.75;

/// Places an obstacle on the nominal path at the given fraction of arc length.
Obstacle place_obstacle(const TrajectorySpec& spec, double arc_fraction,
                        int side = 1, double half_width = 0.02);

/// arc_fraction ~ U[0.25, 0.75], side ~ ±1.
Obstacle random_obstacle(const TrajectorySpec& spec, std::mt19937_64& rng,
                         double half_width = 0.02);

struct HumanModel {
  std::string id = "h0";
  Vec stiffness;  // K_h, N/m
  Vec damping;    // C_h, N·s/m
  double detour_amplitude = 0.05;
  double detour_sigma = 0.05;
  double force_cap = 30.0;
  double noise_std = 0.2;  // additive Gaussian noise on u_h (N)

  int dof() const { return static_cast<int>(stiffness.size()); }
  void validate() const;
  /// K_h = 300, C_h = 30 per axis, detour amplitude tied to the obstacle size.
  static HumanModel defaults(int dof = 2, double obstacle_half_width = 0.02);
  /// Multiplies both gains by `factor`.
  HumanModel scaled(double factor, std::string new_id) const;
};

/// Nominal path plus a Gaussian lateral bump (in arc length) around the
/// obstacle. Precomputes an arc-length table so repeated queries are cheap.
class IntentGenerator {
 public:
  IntentGenerator(TrajectorySpec spec, std::optional<Obstacle> obstacle,
                  const HumanModel& human);

  Vec operator()(double t) const;

  /// Lateral offset vector (2D) added to the nominal path at parameter u.
  Eigen::Vector2d offset_at(double u) const;
  double arc_length_at(double u) const;
  double total_length() const { return arc_.back(); }

 private:
  TrajectorySpec spec_;
  std::optional<Obstacle> obstacle_;
  double amplitude_;
  double sigma_;
  double obstacle_arc_ = 0.0;
  std::vector<double> arc_;  // cumulative length at u = i / (size - 1)
  mutable Eigen::Vector2d last_tangent_{1.0, 0.0};
};

Vec human_intent(const TrajectorySpec& spec, const std::optional<Obstacle>& obstacle,
                 const HumanModel& human, double t);

/// Attractive PD toward the intent, u_h = K_h(x_ref_h − x) − C_h·v, with the
/// vector norm clamped to the force cap.
Vec human_force(const HumanModel& human, const Vec& x, const Vec& v,
                const Vec& x_ref_h);

Vec clamp_norm(const Vec& f, double cap);

// ---------------------------------------------------------------------------
// Episodes

enum class ControllerKind { kMG, kIMP, kGT };

std::string to_string(ControllerKind kind);
ControllerKind parse_controller_kind(std::string_view name);

struct EpisodeRecord {
  double t = 0.0;
  Vec x;
  Vec v;
  Vec u_h;
  Vec x_ref_r;
  Vec x_ref_h_true;
  Vec u_r;
  std::string tag;
};

struct EpisodeMeta {
  PlantParams plant;
  TrajectorySpec trajectory;
  std::optional<Obstacle> obstacle;
  HumanModel human;
  std::string controller = "GT";
  std::string model_id;  // empty when no predictor was in the loop
  std::uint64_t seed = 0;
  bool aborted = false;
  std::string diagnostic;
};

struct Episode {
  EpisodeMeta meta;
  std::vector<EpisodeRecord> records;

  int dof() const { return meta.plant.dof(); }
  std::size_t size() const { return records.size(); }
};

/// Number of fixed steps covering `duration`: ceil(duration / dt), robust to
/// floating-point representation of the ratio.
std::size_t step_count(double duration, double dt);

}  // namespace phri

#endif  // PHRI_DYNAMICS_HPP
