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

#include "phri/game.hpp"

using namespace phri;

namespace {

Mat diag(std::initializer_list<double> v) {
  Vec d(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) d(i++) = x;
  return d.asDiagonal();
}

Mat scalar(double a) { return Mat::Constant(1, 1, a); }

}  // namespace

TEST_CASE("blended costs for the planar weights") {
  const BlendedCosts c = combine_costs(GameWeights::defaults());
  CHECK((c.Q_c - diag({1, 1, 1e-4, 1e-4})).norm() < 1e-15);
  CHECK((c.R_c - diag({4e-4, 4e-4, 1e-4, 1e-4})).norm() < 1e-15);
}

TEST_CASE("equal weights at alpha one half") {
  GameWeights w = GameWeights::defaults(2, 0.5);
  w.Q_hr = w.Q_hh;
  w.Q_rh = w.Q_hh;
  w.Q_rr = w.Q_hh;
  const BlendedCosts c = combine_costs(w);
  CHECK(c.Q_c.isApprox(2.0 * w.Q_hh));
  CHECK(c.Q_h.isApprox(c.Q_r));
}

TEST_CASE("weights are validated") {
  GameWeights w = GameWeights::defaults();
  w.alpha = 1.0;
  CHECK_THROWS_AS(w.validate(), InvalidArgument);
  w = GameWeights::defaults();
  w.Q_hh(0, 1) = 0.5;
  CHECK_THROWS_AS(w.validate(), InvalidArgument);
  w = GameWeights::defaults();
  w.R_r(0, 0) = -1.0;
  CHECK_THROWS_AS(w.validate(), InvalidArgument);
  w = GameWeights::defaults();
  w.Q_rr(2, 2) = -1.0;
  CHECK_THROWS_AS(w.validate(), InvalidArgument);
}

TEST_CASE("scalar Riccati closed form") {
  const CareResult r = solve_care(scalar(-1), scalar(1), scalar(1), scalar(1));
  CHECK(std::abs(r.P(0, 0) - (std::sqrt(2.0) - 1.0)) < 1e-10);
  const Mat K = feedback_gain(r.P, scalar(1), scalar(1));
  CHECK(std::abs(K(0, 0) - (std::sqrt(2.0) - 1.0)) < 1e-10);
  CHECK(std::abs(-1.0 - K(0, 0) + std::sqrt(2.0)) < 1e-10);
}

TEST_CASE("integrator Riccati gives P squared equal to Q") {
  const CareResult r = solve_care(scalar(0), scalar(1), scalar(1), scalar(1));
  CHECK(std::abs(r.P(0, 0) - 1.0) < 1e-10);
}

TEST_CASE("zero solution gives zero gain") {
  CHECK(feedback_gain(Mat::Zero(4, 4), Mat::Ones(4, 4), Mat::Identity(4, 4)).isZero());
}

TEST_CASE("planar game controller solves the Riccati equation") {
  const GameController g(PlantParams::defaults(), GameWeights::defaults());
  const Mat res = care_residual(g.A(), g.B(), g.Q_c(), g.R_c(), g.P());
  CHECK(res.norm() < 1e-8);
  CHECK(g.care_residual_norm() < 1e-8);
  CHECK((g.P() - g.P().transpose()).norm() < 1e-10);
  Eigen::SelfAdjointEigenSolver<Mat> eig(g.P());
  CHECK(eig.eigenvalues().minCoeff() >= -1e-12);
  CHECK(is_hurwitz(g.A() - g.B() * g.K()));
  CHECK(g.K().rows() == 4);
  CHECK(g.K().isApprox(feedback_gain(g.P(), g.B(), g.R_c())));
}

TEST_CASE("Lyapunov solver") {
  Mat A(2, 2);
  A << -1, 2, 0, -3;
  const Mat Q = diag({1, 2});
  const Mat X = solve_lyapunov(A, Q);
  CHECK((A.transpose() * X + X * A + Q).norm() < 1e-12);
}

TEST_CASE("unstabilizable pair is reported") {
  Mat A = diag({1.0, -1.0});
  Mat B(2, 1);
  B << 0, 1;
  CHECK_THROWS_AS(solve_care(A, B, Mat::Identity(2, 2), scalar(1)), NumericalError);
}

TEST_CASE("closed loop stays continuous in the input weight scale") {
  const GameController g(PlantParams::defaults(), GameWeights::defaults());
  Mat previous;
  for (double c : {0.5, 0.99, 1.0, 1.01, 2.0}) {
    const CareResult r = solve_care(g.A(), g.B(), g.Q_c(), c * g.R_c());
    const Mat cl = g.A() - g.B() * feedback_gain(r.P, g.B(), c * g.R_c());
    CHECK(is_hurwitz(cl));
    if (c == 1.01) CHECK((cl - previous).norm() < 0.05 * previous.norm());
    previous = cl;
  }
}

TEST_CASE("shared reference equals the alpha blend") {
  const GameController g(PlantParams::defaults(), GameWeights::defaults());
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    Vec h(4), r(4);
    for (int j = 0; j < 4; ++j) {
      h(j) = u(rng);
      r(j) = u(rng);
    }
    worst = std::max(worst, (g.shared_reference(h, r) - (0.8 * h + 0.2 * r)).cwiseAbs().maxCoeff());
  }
  CHECK(worst <= 1e-12);
  Vec z = Vec::LinSpaced(4, 0.1, 0.4);
  CHECK(g.shared_reference(z, z).isApprox(z));
}

TEST_CASE("shared reference tends to the human reference as alpha grows") {
  const GameController g(PlantParams::defaults(), GameWeights::defaults(2, 0.999));
  const Vec h = Vec::Ones(4), r = Vec::Zero(4);
  CHECK((g.shared_reference(h, r) - h).norm() < 0.01);
}

TEST_CASE("singular blended weight names the coordinates") {
  GameWeights w = GameWeights::defaults();
  w.Q_hh(3, 3) = 0.0;
  w.Q_rr(3, 3) = 0.0;
  const BlendedCosts c = combine_costs(w);
  try {
    shared_reference(Vec::Zero(4), Vec::Zero(4), c);
    FAIL("expected an error");
  } catch (const InvalidArgument& e) {
    CHECK(std::string(e.what()).find("3") != std::string::npos);
  }
}

TEST_CASE("robot action slices the full feedback") {
  const GameController g(PlantParams::defaults(), GameWeights::defaults());
  const Vec z = Vec::Zero(4);
  CHECK(g.robot_action(z, z).norm() == 0.0);
  Vec e = Vec::Zero(4);
  e(0) = 1.0;
  const Vec ur = g.robot_action(e, Vec::Zero(4));
  CHECK(ur.isApprox(-g.K().block(2, 0, 2, 1)));
  CHECK(g.robot_action(2 * e, Vec::Zero(4)).isApprox(2 * ur));
  CHECK(g.control(e, Vec::Zero(4)).tail(2).isApprox(ur));
}

TEST_CASE("game cost quadrature") {
  const Mat Q = Mat::Identity(2, 2), R = Mat::Identity(2, 2);
  const int n = 101;
  const double dt = 0.01;
  Mat z = Mat::Zero(2, n), u = Mat::Zero(2, n), ref = Mat::Zero(2, n);
  CHECK(evaluate_game_cost(z, u, ref, Q, R, dt, 1.0) == 0.0);
  z.row(0).setConstant(3.0);
  z.row(1).setConstant(4.0);
  CHECK(evaluate_game_cost(z, u, ref, Q, R, dt, 1.0) == doctest::Approx(25.0).epsilon(1e-12));
  CHECK(evaluate_game_cost(z, u, ref, Q, R, dt, 0.5) == doctest::Approx(12.5).epsilon(1e-12));
}

TEST_CASE("optimal gain beats perturbed gains") {
  const GameController g(PlantParams::defaults(), GameWeights::defaults());
  Vec z0(4);
  z0 << 0.05, -0.03, 0.0, 0.0;
  const double best = regulation_cost(g.A(), g.B(), g.K(), z0, g.Q_c(), g.R_c(), 0.008, 20.0);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 10; ++i) {
    Mat d(4, 4);
    for (Eigen::Index j = 0; j < d.size(); ++j) d.data()[j] = n(rng);
    d *= 0.1 * g.K().norm() / d.norm();
    const double perturbed = regulation_cost(g.A(), g.B(), g.K() + d, z0, g.Q_c(), g.R_c(), 0.008, 20.0);
    CHECK(best <= perturbed);
  }
}

TEST_CASE("reference from a prediction") {
  Mat flat = Mat::Constant(5, 2, 0.3);
  Vec x = Vec::Constant(2, 0.3);
  const Vec z = reference_from_prediction(flat, x, 3, 0.008);
  CHECK(z.head(2).isApprox(Vec::Constant(2, 0.3)));
  CHECK(z.tail(2).norm() == 0.0);

  Mat line(5, 2);
  for (int j = 0; j < 5; ++j) line.row(j) << 0.001 * (j + 1), -0.002 * (j + 1);
  const Vec zl = reference_from_prediction(line, Vec::Zero(2), 4, 0.008);
  CHECK(zl(0) == doctest::Approx(0.004));
  CHECK(zl(2) == doctest::Approx(0.001 / 0.008));
  CHECK(zl(3) == doctest::Approx(-0.002 / 0.008));
  const Vec z1 = reference_from_prediction(line, Vec::Zero(2), 1, 0.008);
  CHECK(z1(2) == doctest::Approx(0.001 / 0.008));
  CHECK_THROWS_AS(reference_from_prediction(line, Vec::Zero(2), 6, 0.008), InvalidArgument);
  CHECK_THROWS_AS(reference_from_prediction(line, Vec::Zero(2), 0, 0.008), InvalidArgument);
}

TEST_CASE("controller dump carries full precision") {
  const GameController g(PlantParams::defaults(), GameWeights::defaults());
  const nlohmann::json j = g.dump();
  for (const char* key : {"A", "B", "Q_c", "R_c", "P", "K_gt"}) CHECK(j.contains(key));
  CHECK(j["P"][0][0].get<double>() == g.P()(0, 0));
}
