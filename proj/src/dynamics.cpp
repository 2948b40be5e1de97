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


#include "phri/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <unsupported/Eigen/MatrixFunctions>

namespace phri {

namespace {

bool all_finite(const Vec& v) { return v.allFinite(); }

void require(bool ok, const std::string& message) {
  if (!ok) throw InvalidArgument(message);
}

// Minimum-jerk time law and its derivatives with respect to τ.
double min_jerk(double tau) {
  return tau * tau * tau * (10.0 + tau * (-15.0 + 6.0 * tau));
}
double min_jerk_d1(double tau) { return 30.0 * tau * tau * (1.0 - tau) * (1.0 - tau); }
double min_jerk_d2(double tau) { return 60.0 * tau * (1.0 - tau) * (1.0 - 2.0 * tau); }

Vec embed(const TrajectorySpec& spec, const Eigen::Vector2d& planar, bool offset) {
  Vec out = offset ? spec.start : Vec::Zero(spec.dof());
  out(0) += planar(0);
  if (spec.dof() >= 2) out(1) += planar(1);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

void PlantParams::validate() const {
  const int d = dof();
  require(d >= 1, "plant: dof must be >= 1");
  require(damping.size() == d && stiffness.size() == d,
          "plant: mass, damping and stiffness must have the same length");
  require((mass.array() > 0.0).all(), "plant: mass entries must be > 0");
  require((damping.array() >= 0.0).all(), "plant: damping entries must be >= 0");
  require((stiffness.array() >= 0.0).all(), "plant: stiffness entries must be >= 0");
  require(std::isfinite(dt) && dt > 0.0, "plant: dt must be > 0");
}

PlantParams PlantParams::diagonal(int dof, double mass, double damping,
                                  double stiffness, double dt) {
  PlantParams p;
  p.mass = Vec::Constant(dof, mass);
  p.damping = Vec::Constant(dof, damping);
  p.stiffness = Vec::Constant(dof, stiffness);
  p.dt = dt;
  p.validate();
  return p;
}

PlantParams PlantParams::defaults(int dof) {
  return diagonal(dof, 10.0, 100.0, 0.0, 0.008);
}

PlantParams impedance_variant(const PlantParams& base, double stiffness,
                              double damping_ratio) {
  PlantParams p = base;
  p.stiffness = Vec::Constant(base.dof(), stiffness);
  p.damping = damping_ratio * 2.0 * (p.stiffness.array() * p.mass.array()).sqrt();
  p.validate();
  return p;
}

PlantParams with_object(const PlantParams& base, double object_mass) {
  PlantParams p = base;
  p.mass.array() += object_mass;
  p.validate();
  return p;
}

Mat StateSpace::B() const {
  Mat out(B_h.rows(), B_h.cols() + B_r.cols());
  out << B_h, B_r;
  return out;
}

StateSpace build_state_space(const PlantParams& p) {
  p.validate();
  const int d = p.dof();
  const Vec inv_mass = p.mass.cwiseInverse();
  StateSpace ss;
  ss.A = Mat::Zero(2 * d, 2 * d);
  ss.A.topRightCorner(d, d).setIdentity();
  ss.A.bottomLeftCorner(d, d) = (-inv_mass.cwiseProduct(p.stiffness)).asDiagonal();
  ss.A.bottomRightCorner(d, d) = (-inv_mass.cwiseProduct(p.damping)).asDiagonal();
  ss.B_h = Mat::Zero(2 * d, d);
  ss.B_h.bottomRows(d) = inv_mass.asDiagonal();
  ss.B_r = ss.B_h;
  return ss;
}

DiscreteSystem discretize(const Mat& A, const Mat& B, double dt) {
  require(A.rows() == A.cols(), "discretize: A must be square");
  require(B.rows() == A.rows(), "discretize: B must have as many rows as A");
  require(std::isfinite(dt) && dt > 0.0, "discretize: dt must be > 0");
  const Eigen::Index n = A.rows(), m = B.cols();
  Mat aug = Mat::Zero(n + m, n + m);
  aug.topLeftCorner(n, n) = A * dt;
  aug.topRightCorner(n, m) = B * dt;
  const Mat e = aug.exp();
  return {e.topLeftCorner(n, n), e.topRightCorner(n, m)};
}

std::size_t step_count(double duration, double dt) {
  const double ratio = duration / dt;
  const double nearest = std::round(ratio);
  if (std::abs(ratio - nearest) < 1e-9 * std::max(1.0, nearest)) {
    return static_cast<std::size_t>(nearest);
  }
  return static_cast<std::size_t>(std::ceil(ratio));
}

// ---------------------------------------------------------------------------

std::string to_string(TrajectoryKind kind) {
  switch (kind) {
    case TrajectoryKind::kLinear: return "linear";
    case TrajectoryKind::kCurved: return "curved";
    case TrajectoryKind::kSinusoidal: return "sinusoidal";
    case TrajectoryKind::kEval: return "eval";
  }
  return "unknown";
}

TrajectoryKind parse_trajectory_kind(std::string_view name) {
  if (name == "linear") return TrajectoryKind::kLinear;
  if (name == "curved") return TrajectoryKind::kCurved;
  if (name == "sinusoidal") return TrajectoryKind::kSinusoidal;
  if (name == "eval") return TrajectoryKind::kEval;
  throw InvalidArgument("unknown trajectory kind '" + std::string(name) + "'");
}

void TrajectorySpec::validate() const {
  require(dof() >= 1, "trajectory: start must have at least one component");
  require(all_finite(start), "trajectory: start must be finite");
  require(std::isfinite(duration) && duration > 0.0, "trajectory: duration must be > 0");
  require(length > 0.0 && radius > 0.0 && wavelength > 0.0,
          "trajectory: shape parameters must be > 0");
  require(amplitude >= 0.0, "trajectory: amplitude must be >= 0");
}

TrajectorySpec TrajectorySpec::defaults(TrajectoryKind kind, int dof) {
  TrajectorySpec s;
  s.kind = kind;
  s.start = Vec::Zero(dof);
  return s;
}

PathSample path_sample(const TrajectorySpec& spec, double u) {
  using std::cos;
  using std::sin;
  constexpr double pi = std::numbers::pi;
  u = std::clamp(u, 0.0, 1.0);
  PathSample s;
  switch (spec.kind) {
    case TrajectoryKind::kLinear:
      s.p = {spec.length * u, 0.0};
      s.dp = {spec.length, 0.0};
      s.ddp = {0.0, 0.0};
      break;
    case TrajectoryKind::kCurved: {
      // Upper half circle from the start to start + (2R, 0).
      const double r = spec.radius;
      const double th = pi * (1.0 - u);
      s.p = {r + r * cos(th), r * sin(th)};
      s.dp = {pi * r * sin(th), -pi * r * cos(th)};
      s.ddp = {-pi * pi * r * cos(th), -pi * pi * r * sin(th)};
      break;
    }
    case TrajectoryKind::kSinusoidal: {
      const double x = spec.length * u;
      const double w = 2.0 * pi / spec.wavelength;
      s.p = {x, spec.amplitude * sin(w * x)};
      s.dp = {spec.length, spec.amplitude * w * spec.length * cos(w * x)};
      s.ddp = {0.0, -spec.amplitude * w * w * spec.length * spec.length * sin(w * x)};
      break;
    }
    case TrajectoryKind::kEval: {
      // Left quarter arc then right quarter arc, radius R/2 each.
      const double r = 0.5 * spec.radius;
      if (u <= 0.5) {
        const double phi = pi * u;
        s.p = {r * sin(phi), r - r * cos(phi)};
        s.dp = {pi * r * cos(phi), pi * r * sin(phi)};
        s.ddp = {-pi * pi * r * sin(phi), pi * pi * r * cos(phi)};
      } else {
        const double psi = pi * (u - 0.5);
        s.p = {2.0 * r - r * cos(psi), r + r * sin(psi)};
        s.dp = {pi * r * sin(psi), pi * r * cos(psi)};
        s.ddp = {pi * pi * r * cos(psi), -pi * pi * r * sin(psi)};
      }
      break;
    }
  }
  return s;
}

double path_parameter(const TrajectorySpec& spec, double t) {
  return min_jerk(std::clamp(t / spec.duration, 0.0, 1.0));
}

Vec nominal_position(const TrajectorySpec& spec, double t) {
  if (!(t >= 0.0)) throw InvalidArgument("nominal_position: t must be >= 0");
  return embed(spec, path_sample(spec, path_parameter(spec, t)).p, true);
}

Vec nominal_velocity(const TrajectorySpec& spec, double t) {
  if (!(t >= 0.0)) throw InvalidArgument("nominal_velocity: t must be >= 0");
  if (t >= spec.duration) return Vec::Zero(spec.dof());
  const double tau = t / spec.duration;
  const PathSample s = path_sample(spec, min_jerk(tau));
  return embed(spec, s.dp * (min_jerk_d1(tau) / spec.duration), false);
}

Vec nominal_acceleration(const TrajectorySpec& spec, double t) {
  if (!(t >= 0.0)) throw InvalidArgument("nominal_acceleration: t must be >= 0");
  if (t >= spec.duration) return Vec::Zero(spec.dof());
  const double tau = t / spec.duration;
  const double rate = min_jerk_d1(tau) / spec.duration;
  const double accel = min_jerk_d2(tau) / (spec.duration * spec.duration);
  const PathSample s = path_sample(spec, min_jerk(tau));
  return embed(spec, s.ddp * (rate * rate) + s.dp * accel, false);
}

// ---------------------------------------------------------------------------

namespace {

constexpr int kArcTableSize = 4001;

std::vector<double> arc_table(const TrajectorySpec& spec) {
  std::vector<double> arc(kArcTableSize, 0.0);
  Eigen::Vector2d prev = path_sample(spec, 0.0).p;
  for (int i = 1; i < kArcTableSize; ++i) {
    const Eigen::Vector2d p = path_sample(spec, double(i) / (kArcTableSize - 1)).p;
    arc[i] = arc[i - 1] + (p - prev).norm();
    prev = p;
  }
  return arc;
}

double interpolate_arc(const std::vector<double>& arc, double u) {
  const double x = std::clamp(u, 0.0, 1.0) * (kArcTableSize - 1);
  const auto i = std::min<std::size_t>(static_cast<std::size_t>(x), kArcTableSize - 2);
  const double f = x - double(i);
  return arc[i] + f * (arc[i + 1] - arc[i]);
}

double parameter_at_arc(const std::vector<double>& arc, double s) {
  const auto it = std::lower_bound(arc.begin(), arc.end(), s);
  if (it == arc.begin()) return 0.0;
  if (it == arc.end()) return 1.0;
  const auto i = static_cast<std::size_t>(it - arc.begin());
  const double span = arc[i] - arc[i - 1];
  const double f = span > 0.0 ? (s - arc[i - 1]) / span : 0.0;
  return (double(i - 1) + f) / (kArcTableSize - 1);
}

}  // namespace

Obstacle place_obstacle(const TrajectorySpec& spec, double arc_fraction, int side,
                        double half_width) {
  require(arc_fraction >= 0.0 && arc_fraction <= 1.0,
          "obstacle: arc_fraction must lie in [0, 1]");
  require(half_width > 0.0, "obstacle: half_width must be > 0");
  require(side == 1 || side == -1, "obstacle: side must be +1 or -1");
  const auto arc = arc_table(spec);
  const double u = parameter_at_arc(arc, arc_fraction * arc.back());
  Obstacle o;
  o.center = embed(spec, path_sample(spec, u).p, true);
  o.half_width = half_width;
  o.arc_fraction = arc_fraction;
  o.side = side;
  return o;
}

Obstacle random_obstacle(const TrajectorySpec& spec, std::mt19937_64& rng,
                         double half_width) {
  std::uniform_real_distribution<double> band(kObstacleBandLow, kObstacleBandHigh);
  const double fraction = band(rng);
  const int side = (rng() & 1u) ? 1 : -1;
  return place_obstacle(spec, fraction, side, half_width);
}

void HumanModel::validate() const {
  require(dof() >= 1 && damping.size() == dof(), "human: gain vectors must match in size");
  require((stiffness.array() >= 0.0).all() && (damping.array() >= 0.0).all(),
          "human: gains must be >= 0");
  require(force_cap > 0.0, "human: force_cap must be > 0");
  require(detour_amplitude >= 0.0 && detour_sigma > 0.0,
          "human: detour amplitude must be >= 0 and sigma > 0");
  require(noise_std >= 0.0, "human: noise_std must be >= 0");
}

HumanModel HumanModel::defaults(int dof, double obstacle_half_width) {
  HumanModel h;
  h.stiffness = Vec::Constant(dof, 300.0);
  h.damping = Vec::Constant(dof, 30.0);
  h.detour_amplitude = obstacle_half_width + 0.03;
  h.detour_sigma = 0.05;
  h.force_cap = 30.0;
  return h;
}

HumanModel HumanModel::scaled(double factor, std::string new_id) const {
  HumanModel h = *this;
  h.stiffness *= factor;
  h.damping *= factor;
  h.id = std::move(new_id);
  h.validate();
  return h;
}

IntentGenerator::IntentGenerator(TrajectorySpec spec, std::optional<Obstacle> obstacle,
                                 const HumanModel& human)
    : spec_(std::move(spec)),
      obstacle_(std::move(obstacle)),
      amplitude_(human.detour_amplitude),
      sigma_(human.detour_sigma),
      arc_(arc_table(spec_)) {
  spec_.validate();
  if (obstacle_) {
    require(obstacle_->half_width > 0.0, "obstacle: half_width must be > 0");
    obstacle_arc_ = obstacle_->arc_fraction * arc_.back();
  }
}

double IntentGenerator::arc_length_at(double u) const { return interpolate_arc(arc_, u); }

Eigen::Vector2d IntentGenerator::offset_at(double u) const {
  if (!obstacle_ || amplitude_ == 0.0 || spec_.dof() < 2) return Eigen::Vector2d::Zero();
  const Eigen::Vector2d dp = path_sample(spec_, u).dp;
  const double speed = dp.norm();
  if (speed > 1e-12) last_tangent_ = dp / speed;  // else keep the previous tangent
  const Eigen::Vector2d normal(-last_tangent_(1), last_tangent_(0));
  const double ds = arc_length_at(u) - obstacle_arc_;
  const double bump = amplitude_ * std::exp(-0.5 * ds * ds / (sigma_ * sigma_));
  return double(obstacle_->side) * bump * normal;
}

Vec IntentGenerator::operator()(double t) const {
  if (!(t >= 0.0)) throw InvalidArgument("human_intent: t must be >= 0");
  const double u = path_parameter(spec_, t);
  return embed(spec_, path_sample(spec_, u).p + offset_at(u), true);
}

Vec human_intent(const TrajectorySpec& spec, const std::optional<Obstacle>& obstacle,
                 const HumanModel& human, double t) {
  return IntentGenerator(spec, obstacle, human)(t);
}

Vec clamp_norm(const Vec& f, double cap) {
  const double n = f.norm();
  if (n > cap && n > 0.0) return f * (cap / n);
  return f;
}

Vec human_force(const HumanModel& human, const Vec& x, const Vec& v, const Vec& x_ref_h) {
  require(x.size() == human.dof() && v.size() == human.dof() && x_ref_h.size() == human.dof(),
          "human_force: vectors must have length d");
  const Vec f = human.stiffness.cwiseProduct(x_ref_h - x) - human.damping.cwiseProduct(v);
  return clamp_norm(f, human.force_cap);
}

// ---------------------------------------------------------------------------

std::string to_string(ControllerKind kind) {
  switch (kind) {
    case ControllerKind::kMG: return "MG";
    case ControllerKind::kIMP: return "IMP";
    case ControllerKind::kGT: return "GT";
  }
  return "unknown";
}

ControllerKind parse_controller_kind(std::string_view name) {
  if (name == "MG") return ControllerKind::kMG;
  if (name == "IMP") return ControllerKind::kIMP;
  if (name == "GT") return ControllerKind::kGT;
  throw InvalidArgument("unknown controller '" + std::string(name) + "' (expected MG, IMP or GT)");
}

}  // namespace phri
