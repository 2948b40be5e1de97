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


#include <doctest.h>

#include <cmath>
#include <random>

#include "phri/dynamics.hpp"
#include "phri/simulation.hpp"

using namespace phri;

namespace {

// Classical fourth-order Runge–Kutta on ż = Az + Bu with u held constant.
Vec rk4(const Mat& A, const Mat& B, const Vec& z0, const Vec& u, double dt, int substeps) {
  const double h = dt / substeps;
  Vec z = z0;
  const Vec Bu = B * u;
  for (int i = 0; i < substeps; ++i) {
    const Vec k1 = A * z + Bu;
    const Vec k2 = A * (z + 0.5 * h * k1) + Bu;
    const Vec k3 = A * (z + 0.5 * h * k2) + Bu;
    const Vec k4 = A * (z + h * k3) + Bu;
    z += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return z;
}

HumanModel silent_human(int d = 2) {
  HumanModel h = HumanModel::defaults(d);
  h.stiffness.setZero();
  h.damping.setZero();
  h.noise_std = 0.0;
  return h;
}

}  // namespace

TEST_CASE("state space for the desk mass-damper") {
  const StateSpace ss = build_state_space(PlantParams::diagonal(1, 10.0, 100.0, 0.0, 0.008));
  CHECK(ss.A(0, 0) == 0.0);
  CHECK(ss.A(0, 1) == 1.0);
  CHECK(ss.A(1, 0) == 0.0);
  CHECK(ss.A(1, 1) == doctest::Approx(-10.0));
  CHECK(ss.B_h(0, 0) == 0.0);
  CHECK(ss.B_h(1, 0) == doctest::Approx(0.1));
  CHECK(ss.B_r.isApprox(ss.B_h));
}

TEST_CASE("state space of a unit oscillator") {
  const StateSpace ss = build_state_space(PlantParams::diagonal(1, 1.0, 0.0, 1.0, 0.01));
  Mat expected(2, 2);
  expected << 0, 1, -1, 0;
  CHECK(ss.A.isApprox(expected));
}

TEST_CASE("top-right block of A is the identity") {
  PlantParams p = PlantParams::defaults(3);
  p.mass << 1.0, 2.0, 3.0;
  const StateSpace ss = build_state_space(p);
  CHECK(ss.A.topRightCorner(3, 3).isApprox(Mat::Identity(3, 3)));
  CHECK(ss.A.topLeftCorner(3, 3).isZero());
}

TEST_CASE("plant invariants are enforced") {
  PlantParams p = PlantParams::defaults();
  p.mass(0) = 0.0;
  CHECK_THROWS_AS(p.validate(), InvalidArgument);
  p = PlantParams::defaults();
  p.damping(1) = -1.0;
  CHECK_THROWS_AS(p.validate(), InvalidArgument);
  p = PlantParams::defaults();
  p.dt = 0.0;
  CHECK_THROWS_AS(p.validate(), InvalidArgument);
}

TEST_CASE("zero dynamics discretize to a pure integrator") {
  const DiscreteSystem ds = discretize(Mat::Zero(2, 2), Mat::Identity(2, 2), 0.008);
  CHECK(ds.A_d.isApprox(Mat::Identity(2, 2)));
  CHECK((ds.B_d - 0.008 * Mat::Identity(2, 2)).norm() < 1e-15);
}

TEST_CASE("double integrator discretization is exact") {
  Mat A(2, 2);
  A << 0, 1, 0, 0;
  Mat B(2, 1);
  B << 0, 1;
  const double dt = 0.008;
  const DiscreteSystem ds = discretize(A, B, dt);
  CHECK(ds.A_d(0, 1) == doctest::Approx(dt).epsilon(1e-14));
  CHECK(ds.A_d(0, 0) == doctest::Approx(1.0));
  CHECK(ds.B_d(0, 0) == doctest::Approx(dt * dt / 2).epsilon(1e-12));
  CHECK(ds.B_d(1, 0) == doctest::Approx(dt).epsilon(1e-12));
}

TEST_CASE("discrete transition is a semigroup") {
  const StateSpace ss = build_state_space(PlantParams::defaults());
  const Mat a = discretize(ss.A, ss.B_h, 0.003).A_d;
  const Mat b = discretize(ss.A, ss.B_h, 0.005).A_d;
  const Mat ab = discretize(ss.A, ss.B_h, 0.008).A_d;
  CHECK((a * b - ab).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("one ZOH step matches fine-step integration") {
  const PlantParams p = PlantParams::defaults();
  const StateSpace ss = build_state_space(p);
  const Mat B = ss.B();
  const DiscreteSystem ds = discretize(ss.A, B, p.dt);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    Vec z(4), in(4);
    for (int i = 0; i < 4; ++i) {
      z(i) = u(rng);
      in(i) = 20.0 * u(rng);
    }
    const Vec exact = ds.A_d * z + ds.B_d * in;
    const Vec fine = rk4(ss.A, B, z, in, p.dt, 4000);
    CHECK((exact - fine).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("impedance variant uses ninety percent of critical damping") {
  const PlantParams imp = impedance_variant(PlantParams::defaults());
  CHECK(imp.stiffness(0) == 200.0);
  CHECK(imp.damping(0) == doctest::Approx(0.9 * 2.0 * std::sqrt(200.0 * 10.0)));
  CHECK(imp.damping(1) == doctest::Approx(80.4984).epsilon(1e-5));
  CHECK(imp.mass(1) == 10.0);
}

TEST_CASE("object case adds mass") {
  const PlantParams p = with_object(PlantParams::defaults(), 5.0);
  CHECK(p.mass(0) == 15.0);
  CHECK(p.mass(1) == 15.0);
}

TEST_CASE("nominal trajectories") {
  const TrajectorySpec lin = TrajectorySpec::defaults(TrajectoryKind::kLinear);
  CHECK(nominal_position(lin, 0.0).isApprox(lin.start));
  const Vec mid = nominal_position(lin, lin.duration / 2);
  CHECK(mid(0) == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(std::abs(mid(1)) < 1e-12);
  CHECK(nominal_position(lin, 2 * lin.duration).isApprox(nominal_position(lin, lin.duration)));
  CHECK_THROWS_AS(nominal_position(lin, -0.1), InvalidArgument);

  const TrajectorySpec sine = TrajectorySpec::defaults(TrajectoryKind::kSinusoidal);
  const PathSample quarter = path_sample(sine, sine.wavelength / 4 / sine.length);
  CHECK(quarter.p(0) == doctest::Approx(0.05));
  CHECK(quarter.p(1) == doctest::Approx(sine.amplitude).epsilon(1e-12));

  for (auto kind : {TrajectoryKind::kLinear, TrajectoryKind::kCurved, TrajectoryKind::kSinusoidal,
                    TrajectoryKind::kEval}) {
    const TrajectorySpec s = TrajectorySpec::defaults(kind);
    double max_jump = 0.0;
    for (int i = 1; i <= 1250; ++i) {
      max_jump = std::max(max_jump, (nominal_position(s, i * 0.008) -
                                     nominal_position(s, (i - 1) * 0.008)).norm());
    }
    // Path speed stays below 0.2 m/s.
    CHECK(max_jump < 0.2 * 0.008);
    CHECK(nominal_velocity(s, 0.0).norm() < 1e-12);
  }
}

TEST_CASE("trajectory names round-trip and bad names are named") {
  for (auto kind : {TrajectoryKind::kLinear, TrajectoryKind::kCurved, TrajectoryKind::kSinusoidal,
                    TrajectoryKind::kEval}) {
    CHECK(parse_trajectory_kind(to_string(kind)) == kind);
  }
  try {
    parse_trajectory_kind("zigzag");
    FAIL("expected an error");
  } catch (const InvalidArgument& e) {
    CHECK(std::string(e.what()).find("zigzag") != std::string::npos);
  }
}

TEST_CASE("human intent detours around the obstacle") {
  const TrajectorySpec spec = TrajectorySpec::defaults(TrajectoryKind::kLinear);
  const HumanModel human = HumanModel::defaults();
  const Obstacle ob = place_obstacle(spec, 0.5, 1, 0.02);
  CHECK(human.detour_amplitude == doctest::Approx(0.05));
  // Linear path: arc position 0.2 m is reached at t = duration / 2.
  const Vec peak = human_intent(spec, ob, human, spec.duration / 2);
  const Vec nominal = nominal_position(spec, spec.duration / 2);
  CHECK((peak - nominal).norm() == doctest::Approx(human.detour_amplitude).epsilon(1e-9));
  CHECK(std::abs(peak(0) - nominal(0)) < 1e-12);
  // Start point lies 0.2 m = 4 sigma from the obstacle.
  const Vec far = human_intent(spec, ob, human, 0.0);
  CHECK((far - nominal_position(spec, 0.0)).norm() < 1e-3 * human.detour_amplitude);
  for (double t : {0.0, 2.5, 5.0, 7.5, 10.0}) {
    CHECK(human_intent(spec, std::nullopt, human, t).isApprox(nominal_position(spec, t)));
  }
  double max_jump = 0.0;
  for (int i = 1; i <= 1250; ++i) {
    max_jump = std::max(max_jump, (human_intent(spec, ob, human, i * 0.008) -
                                   human_intent(spec, ob, human, (i - 1) * 0.008)).norm());
  }
  CHECK(max_jump < 2e-3);
}

TEST_CASE("obstacles stay inside the placement band") {
  const TrajectorySpec spec = TrajectorySpec::defaults(TrajectoryKind::kCurved);
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const Obstacle ob = random_obstacle(spec, rng);
    CHECK(ob.arc_fraction >= kObstacleBandLow);
    CHECK(ob.arc_fraction <= kObstacleBandHigh);
    CHECK(ob.half_width > 0.0);
  }
}

TEST_CASE("human force is an attractive clamped PD") {
  HumanModel h = HumanModel::defaults(1);
  h.stiffness(0) = 300.0;
  h.damping(0) = 30.0;
  Vec x(1), v(1), r(1);
  x << 0.0;
  v << 0.0;
  r << 0.01;
  CHECK(human_force(h, x, v, r)(0) == doctest::Approx(3.0));
  CHECK(human_force(h, r, v, r).norm() == 0.0);
  r << 10.0;
  CHECK(human_force(h, x, v, r).norm() == doctest::Approx(h.force_cap));
  const HumanModel big = HumanModel::defaults(2);
  Vec x2 = Vec::Zero(2), v2 = Vec::Constant(2, 5.0), r2 = Vec::Constant(2, -3.0);
  CHECK(human_force(big, x2, v2, r2).norm() <= big.force_cap + 1e-12);
}

TEST_CASE("manual guidance without force holds position") {
  const TrajectorySpec spec = TrajectorySpec::defaults(TrajectoryKind::kCurved);
  ControllerSetup mg;
  mg.kind = ControllerKind::kMG;
  const Rollout r = simulate_episode(PlantParams::defaults(), spec, std::nullopt, silent_human(),
                                     mg, nullptr, 1);
  REQUIRE(r.episode.size() == 1250);
  for (const auto& rec : r.episode.records) {
    CHECK(rec.x.isApprox(r.episode.records.front().x));
    CHECK(rec.u_r.norm() == 0.0);
  }
}

TEST_CASE("manual guidance step response reaches f / C") {
  const PlantParams p = PlantParams::diagonal(1, 10.0, 100.0, 0.0, 0.008);
  TrajectorySpec spec = TrajectorySpec::defaults(TrajectoryKind::kLinear, 1);
  ControllerSetup mg;
  mg.kind = ControllerKind::kMG;
  ClosedLoop loop(p, spec, mg, nullptr);
  Vec f(1);
  f << 1.0;
  // Five time constants of M / C = 0.1 s.
  for (int i = 0; i < 63; ++i) loop.step(f, Vec::Zero(1));
  CHECK(loop.state().v(0) == doctest::Approx(0.01).epsilon(0.01));
}

TEST_CASE("unforced plant is passive") {
  const PlantParams p = PlantParams::defaults();
  TrajectorySpec spec = TrajectorySpec::defaults(TrajectoryKind::kLinear);
  ControllerSetup mg;
  mg.kind = ControllerKind::kMG;
  ClosedLoop loop(p, spec, mg, nullptr);
  PlantState s;
  s.x = Vec::Zero(2);
  s.v = Vec::Constant(2, 0.3);
  loop.reset(s);
  double last = loop.state().v.norm();
  for (int i = 0; i < 200; ++i) {
    loop.step(Vec::Zero(2), Vec::Zero(2));
    const double now = loop.state().v.norm();
    CHECK(now <= last);
    last = now;
  }
  CHECK(last == doctest::Approx(0.3 * std::sqrt(2.0) * std::exp(-10.0 * 200 * 0.008)).epsilon(1e-9));
}

TEST_CASE("episodes have uniform timestamps and are deterministic") {
  const TrajectorySpec spec = TrajectorySpec::defaults(TrajectoryKind::kSinusoidal);
  const Obstacle ob = place_obstacle(spec, 0.4);
  ControllerSetup imp;
  imp.kind = ControllerKind::kIMP;
  const HumanModel h = HumanModel::defaults();
  const Rollout a = simulate_episode(PlantParams::defaults(), spec, ob, h, imp, nullptr, 42);
  const Rollout b = simulate_episode(PlantParams::defaults(), spec, ob, h, imp, nullptr, 42);
  const Rollout c = simulate_episode(PlantParams::defaults(), spec, ob, h, imp, nullptr, 43);
  CHECK(a.episode.size() == step_count(spec.duration, 0.008));
  CHECK(step_count(10.0, 0.008) == 1250);
  CHECK(step_count(10.0, 1.0 / 60.0) == 600);
  bool same = true, differs = false;
  for (std::size_t i = 0; i < a.episode.size(); ++i) {
    CHECK(a.episode.records[i].t == static_cast<double>(i) * 0.008);
    same = same && a.episode.records[i].x == b.episode.records[i].x &&
           a.episode.records[i].u_h == b.episode.records[i].u_h;
    differs = differs || a.episode.records[i].u_h != c.episode.records[i].u_h;
  }
  CHECK(same);
  CHECK(differs);
  CHECK(a.episode.meta.seed == 42);
}

TEST_CASE("divergence aborts with a diagnostic and keeps the partial episode") {
  PlantParams p = PlantParams::defaults();
  const TrajectorySpec spec = TrajectorySpec::defaults(TrajectoryKind::kLinear);
  ControllerSetup mg;
  mg.kind = ControllerKind::kMG;
  SimulationOptions opt;
  opt.blowup_bound = 0.05;
  HumanModel h = HumanModel::defaults();
  h.noise_std = 0.0;
  const Rollout r = simulate_episode(p, spec, std::nullopt, h, mg, nullptr, 1, opt);
  CHECK(r.episode.meta.aborted);
  CHECK_FALSE(r.episode.meta.diagnostic.empty());
  CHECK(r.episode.size() > 0);
  CHECK(r.episode.size() < 1250);
}

TEST_CASE("replay reproduces logged states") {
  const TrajectorySpec spec = TrajectorySpec::defaults(TrajectoryKind::kCurved);
  const Obstacle ob = place_obstacle(spec, 0.6, -1);
  for (ControllerKind kind : {ControllerKind::kMG, ControllerKind::kIMP, ControllerKind::kGT}) {
    ControllerSetup setup;
    setup.kind = kind;
    setup.pick_index = 4;
    if (kind == ControllerKind::kGT) {
      setup.game = std::make_shared<const GameController>(PlantParams::defaults(),
                                                          GameWeights::defaults());
    }
    const Rollout r = simulate_episode(PlantParams::defaults(), spec, ob, HumanModel::defaults(),
                                       setup, nullptr, 9);
    const Rollout again = replay_episode(r.episode, setup, nullptr);
    double worst = 0.0;
    for (std::size_t i = 0; i < r.episode.size(); ++i) {
      worst = std::max(worst, (r.episode.records[i].x - again.episode.records[i].x).cwiseAbs().maxCoeff());
      worst = std::max(worst, (r.episode.records[i].v - again.episode.records[i].v).cwiseAbs().maxCoeff());
    }
    CHECK(worst <= 1e-9);
  }
}

TEST_CASE("GT with an echo of the nominal reference matches GT without a predictor") {
  // A predictor returning the nominal future must behave like the nominal reference.
  struct NominalEcho final : IntentPredictor {
    TrajectorySpec spec;
    double dt = 0.008;
    int window_length() const override { return 5; }
    int horizon() const override { return 6; }
    Mat predict(const Mat&, double t) const override {
      Mat out(6, 2);
      for (int j = 0; j < 6; ++j) out.row(j) = nominal_position(spec, t + (j + 1) * dt).transpose();
      return out;
    }
  };
  const TrajectorySpec spec = TrajectorySpec::defaults(TrajectoryKind::kCurved);
  NominalEcho echo;
  echo.spec = spec;
  ControllerSetup gt;
  gt.kind = ControllerKind::kGT;
  gt.pick_index = 4;
  gt.game = std::make_shared<const GameController>(PlantParams::defaults(), GameWeights::defaults());
  HumanModel h = HumanModel::defaults();
  const Rollout with = simulate_episode(PlantParams::defaults(), spec, std::nullopt, h, gt, &echo, 5);
  const Rollout without = simulate_episode(PlantParams::defaults(), spec, std::nullopt, h, gt, nullptr, 5);
  double worst = 0.0;
  for (std::size_t i = 0; i < with.episode.size(); ++i) {
    worst = std::max(worst, (with.episode.records[i].x - without.episode.records[i].x).norm());
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("GT requires a game controller") {
  ControllerSetup gt;
  gt.kind = ControllerKind::kGT;
  CHECK_THROWS_AS(ClosedLoop(PlantParams::defaults(), TrajectorySpec::defaults(TrajectoryKind::kLinear),
                             gt, nullptr),
                  InvalidArgument);
}
