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

#include "phri/pipeline.hpp"

using namespace phri;

namespace {

// Episode whose position row i is (i, −i) · 1e-3 and other features vary too.
Episode ramp_episode(std::size_t length, double offset = 0.0) {
  Episode ep;
  ep.meta.plant = PlantParams::defaults();
  ep.meta.trajectory = TrajectorySpec::defaults(TrajectoryKind::kLinear);
  ep.meta.human = HumanModel::defaults();
  for (std::size_t i = 0; i < length; ++i) {
    EpisodeRecord r;
    r.t = static_cast<double>(i) * 0.008;
    const double s = offset + static_cast<double>(i);
    r.x = Vec(2);
    r.x << 1e-3 * s, -1e-3 * s;
    r.v = Vec::Constant(2, 0.125);
    r.u_h = Vec::Constant(2, std::sin(s));
    r.x_ref_r = r.x;
    r.x_ref_h_true = r.x * 2.0;
    r.u_r = Vec::Zero(2);
    r.tag = "GT";
    ep.records.push_back(r);
  }
  return ep;
}

PredictorConfig tiny() {
  PredictorConfig c;
  c.window_k = 6;
  c.horizon_N = 3;
  c.hidden_size = 5;
  c.fc_hidden = 7;
  return c;
}

// Two-sided p by trapezoidal integration of the Student-t density.
double t_pvalue_by_quadrature(double t, double df) {
  const double c = std::exp(std::lgamma((df + 1) / 2) - std::lgamma(df / 2)) / std::sqrt(df * M_PI);
  auto pdf = [&](double x) { return c * std::pow(1 + x * x / df, -(df + 1) / 2); };
  const int n = 400000;
  const double a = std::abs(t);
  const double h = a / n;
  double area = 0.5 * (pdf(0) + pdf(a));
  for (int i = 1; i < n; ++i) area += pdf(i * h);
  area *= h;
  return 1.0 - 2.0 * area;
}

}  // namespace

TEST_CASE("window count formula over a randomized sweep") {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> kd(1, 12), nd(1, 8), ld(0, 40);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = kd(rng), N = nd(rng);
    const std::size_t L = static_cast<std::size_t>(ld(rng));
    const std::size_t expected = L >= static_cast<std::size_t>(k + N) ? L - k - N + 1 : 0;
    CHECK(window_count(L, k, N) == expected);
    if (L > 0) CHECK(make_windows(ramp_episode(L), k, N).size() == expected);
  }
  CHECK(window_count(200, 125, 50) == 26);
}

TEST_CASE("smallest window") {
  const Episode ep = ramp_episode(2);
  const auto w = make_windows(ep, 1, 1);
  REQUIRE(w.size() == 1);
  CHECK(w[0].input.rows() == 1);
  CHECK(w[0].input.cols() == 8);
  CHECK(w[0].input.row(0).head(2).transpose().isApprox(ep.records[0].x));
  CHECK(w[0].input(0, 2) == 0.125);
  CHECK(w[0].input(0, 4) == ep.records[0].u_h(0));
  CHECK(w[0].target.row(0).transpose().isApprox(ep.records[1].x));
}

TEST_CASE("windows stay inside their episode") {
  const Episode a = ramp_episode(20), b = ramp_episode(20, 1000.0);
  const Dataset ds = build_dataset({a, b}, tiny());
  CHECK(ds.windows.size() == 2 * window_count(20, 6, 3));
  for (const auto& s : ds.windows) {
    const bool in_a = s.input(0, 0) < 0.5 && s.target(2, 0) < 0.5;
    const bool in_b = s.input(0, 0) > 0.5 && s.target(2, 0) > 0.5;
    CHECK((in_a || in_b));
  }
}

TEST_CASE("intent targets and stride") {
  const Episode ep = ramp_episode(30);
  const auto intent = make_windows(ep, 6, 3, TargetSource::kTrueIntent);
  CHECK(intent[0].target.row(0).transpose().isApprox(ep.records[6].x_ref_h_true));
  const auto strided = make_windows(ep, 6, 3, TargetSource::kMeasured, 4);
  CHECK(strided.size() == (window_count(30, 6, 3) + 3) / 4);
}

TEST_CASE("normalization statistics") {
  PredictorConfig c;
  c.dof = 1;
  c.window_k = 1;
  c.horizon_N = 1;
  c.residual_output = false;
  std::vector<Sample> w(3);
  for (int i = 0; i < 3; ++i) {
    w[i].input = Mat::Constant(1, 4, 5.0);
    w[i].input(0, 0) = i + 1.0;
    w[i].target = Mat::Constant(1, 1, i + 1.0);
  }
  const Normalization n = fit_normalization(w, c);
  CHECK(n.input_mean(0) == doctest::Approx(2.0));
  CHECK(n.input_scale(0) == doctest::Approx(std::sqrt(2.0 / 3.0)));
  CHECK(n.input_mean(1) == 5.0);
  CHECK(n.input_scale(1) == 1.0);
  CHECK(n.output_scale(0) == doctest::Approx(std::sqrt(2.0 / 3.0)));
  // Applying the statistics to their source data standardizes it.
  double mean = 0, var = 0;
  for (const auto& s : w) mean += (s.input(0, 0) - n.input_mean(0)) / n.input_scale(0);
  mean /= 3;
  for (const auto& s : w) var += std::pow((s.input(0, 0) - n.input_mean(0)) / n.input_scale(0), 2);
  var /= 3;
  CHECK(std::abs(mean) < 1e-9);
  CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-9);
}

TEST_CASE("zero epochs leave the base model unchanged") {
  const Dataset ds = build_dataset({ramp_episode(40)}, tiny());
  const PredictorModel base = init_model(tiny(), 3);
  TrainOptions o;
  o.epochs = 0;
  const TrainResult r = train_model(ds, tiny(), &base, o, 1);
  for (std::size_t b = 0; b < base.blocks().size(); ++b) {
    CHECK(bit_identical(base.blocks()[b].value, r.model.blocks()[b].value));
  }
  CHECK(r.loss_trace.empty());
}

TEST_CASE("training is deterministic and reduces the loss") {
  const Dataset ds = build_dataset({ramp_episode(60), ramp_episode(60, 7.0)}, tiny());
  TrainOptions o;
  o.epochs = 15;
  o.batch_size = 16;
  o.learning_rate = 3e-3;
  const TrainResult a = train_model(ds, tiny(), nullptr, o, 9);
  const TrainResult b = train_model(ds, tiny(), nullptr, o, 9);
  for (std::size_t i = 0; i < a.model.blocks().size(); ++i) {
    CHECK(bit_identical(a.model.blocks()[i].value, b.model.blocks()[i].value));
  }
  REQUIRE(a.loss_trace.size() == 15);
  CHECK(a.loss_trace.back() < a.loss_trace.front());
}

TEST_CASE("transfer learning touches only the head") {
  const Dataset ds = build_dataset({ramp_episode(60)}, tiny());
  const PredictorModel base = init_model(tiny(), 4);
  TrainOptions o;
  o.epochs = 3;
  const TrainResult r = transfer_learn(base, ds, o, 2);
  bool head_changed = false;
  for (std::size_t b = 0; b < base.blocks().size(); ++b) {
    const bool same = bit_identical(base.blocks()[b].value, r.model.blocks()[b].value);
    if (base.blocks()[b].recurrent) {
      CHECK(same);
    } else {
      head_changed = head_changed || !same;
    }
  }
  CHECK(head_changed);
}

TEST_CASE("prediction error metrics") {
  // Measured positions: row T = (T, 0) mm.
  Mat measured = Mat::Zero(6, 2);
  for (int i = 0; i < 6; ++i) measured(i, 0) = 1e-3 * i;
  auto perfect = [&](std::size_t T) { return measured.middleRows(T + 1, 2).eval(); };
  std::vector<Mat> preds(6);
  for (std::size_t T = 0; T < 4; ++T) preds[T] = perfect(T);
  CHECK(e_rms(preds, measured, 2) == 0.0);
  CHECK(e_max(preds, measured, 2) == 0.0);

  std::vector<Mat> shifted = preds;
  Vec delta(2);
  delta << 3e-3, 4e-3;
  for (std::size_t T = 0; T < 4; ++T) shifted[T].rowwise() += delta.transpose();
  CHECK(e_rms(shifted, measured, 2) == doctest::Approx(5e-3));

  Mat one = perfect(1);
  one(0, 0) += 3e-3;
  one(1, 1) += 4e-3;
  CHECK(window_rms(one, measured, 1, 2) == doctest::Approx(std::sqrt(12.5) * 1e-3));

  std::vector<Mat> single_bad = preds;
  single_bad[1] = one;
  const double bad = std::sqrt(12.5) * 1e-3;
  CHECK(e_max(single_bad, measured, 2) == doctest::Approx(bad));
  CHECK(e_rms(single_bad, measured, 2) == doctest::Approx(bad / 4));
  CHECK(e_max(single_bad, measured, 2) >= e_rms(single_bad, measured, 2));

  std::vector<Mat> short_pred = preds;
  short_pred[0] = measured.middleRows(1, 1);
  CHECK_THROWS_AS(e_rms(short_pred, measured, 2), InvalidArgument);
}

TEST_CASE("per-window error grows when worse steps are added") {
  Mat measured = Mat::Zero(5, 1);
  Mat pred(3, 1);
  pred << 1e-3, 2e-3, 3e-3;
  double last = 0.0;
  for (int n = 1; n <= 3; ++n) {
    const double w = window_rms(pred, measured, 0, n);
    CHECK(w >= last);
    last = w;
  }
}

TEST_CASE("interaction force RMS") {
  Episode ep = ramp_episode(2);
  ep.records[0].u_h << 3.0, 0.0;
  ep.records[1].u_h << 0.0, 4.0;
  CHECK(f_rms(ep) == doctest::Approx(std::sqrt(12.5)));
  for (auto& r : ep.records) r.u_h << 0.6, 0.8;
  CHECK(f_rms(ep) == doctest::Approx(1.0));
  for (auto& r : ep.records) r.u_h.setZero();
  CHECK(f_rms(ep) == 0.0);
}

TEST_CASE("Welch test") {
  const std::vector<double> a = {0.9, 1.0, 1.1}, b = {1.9, 2.0, 2.1};
  const WelchResult r = welch_t_test(a, b);
  CHECK(r.df == doctest::Approx(4.0));
  CHECK(r.p < 0.01);
  CHECK(r.p == doctest::Approx(t_pvalue_by_quadrature(r.t, r.df)).epsilon(1e-6));
  CHECK(welch_t_test(b, a).p == doctest::Approx(r.p).epsilon(1e-14));
  const WelchResult same = welch_t_test(a, a);
  CHECK(same.t == 0.0);
  CHECK(same.p == doctest::Approx(1.0));
  const std::vector<double> flat = {1.0, 1.0};
  CHECK_THROWS_AS(welch_t_test(flat, flat), InvalidArgument);
  const std::vector<double> one = {1.0};
  CHECK_THROWS_AS(welch_t_test(one, a), InvalidArgument);
}

TEST_CASE("Student t survival function against quadrature") {
  for (double df : {1.0, 2.5, 7.0, 30.0}) {
    for (double t : {0.3, 1.0, 2.2, 5.0}) {
      CHECK(2.0 * student_t_sf(t, df) == doctest::Approx(t_pvalue_by_quadrature(t, df)).epsilon(1e-7));
    }
  }
  CHECK(student_t_sf(0.0, 3.0) == doctest::Approx(0.5));
  CHECK(student_t_sf(-1.0, 3.0) == doctest::Approx(1.0 - student_t_sf(1.0, 3.0)));
  CHECK(incomplete_beta(2.0, 3.0, 0.0) == 0.0);
  CHECK(incomplete_beta(2.0, 3.0, 1.0) == 1.0);
  CHECK(incomplete_beta(1.0, 1.0, 0.3) == doctest::Approx(0.3));
}

TEST_CASE("report invariants and CSV columns") {
  Environment env;
  env.duration = 2.0;
  env.pick_index = 3;
  PredictorConfig c = tiny();
  const PredictorModel m = init_model(c, 1);
  const auto rollouts = collect(env, 1, kHeldOutStream, 2, ControllerKind::kGT, &m, "m");
  const std::vector<int> hs = {1, 3};
  const EvalReport r = evaluate_rollouts(rollouts, hs, "m", 1);
  REQUIRE(r.horizons.size() == 2);
  for (const auto& h : r.horizons) {
    CHECK(h.e_rms >= 0.0);
    CHECK(h.e_max >= h.e_rms);
  }
  CHECK(r.episodes.size() == 2);
  std::string csv;
  append_csv_rows(r, csv);
  CHECK(std::string(kReportCsvHeader) == "model,horizon,e_rms,e_max,f_rms,seed");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
  CHECK(csv.rfind("m,1,", 0) == 0);
}

TEST_CASE("scenarios are deterministic per stream") {
  Environment env;
  const Scenario a = make_scenario(env, 1, kTrainStream, 3);
  const Scenario b = make_scenario(env, 1, kTrainStream, 3);
  const Scenario c = make_scenario(env, 1, kHeldOutStream, 3);
  CHECK(a.noise_seed == b.noise_seed);
  CHECK(a.noise_seed != c.noise_seed);
  CHECK(a.trajectory.kind == env.trajectories[0]);
}

TEST_CASE("controller comparison shape") {
  Environment env;
  env.duration = 1.0;
  env.pick_index = 3;
  const PredictorModel m = init_model(tiny(), 1);
  const ComparisonReport with = compare_controllers(env, &m, 3, 1);
  CHECK(with.controllers.size() == 3);
  CHECK(with.tests.size() == 3);
  CHECK(with.controllers[2].controller == "GT");
  for (const auto& s : with.controllers) CHECK(s.f_rms.size() == 3);
  const ComparisonReport without = compare_controllers(env, nullptr, 3, 1);
  CHECK(without.controllers.size() == 2);
  CHECK(without.tests.size() == 1);
  CHECK(with.to_csv().find("MG-IMP") != std::string::npos);
  CHECK(with.to_json()["tests"].size() == 3);
}

TEST_CASE("manual guidance without human force has zero interaction force") {
  Environment env;
  env.duration = 1.0;
  env.human.stiffness.setZero();
  env.human.damping.setZero();
  env.human.noise_std = 0.0;
  const Rollout r = run_scenario(env, make_scenario(env, 1, kCompareStream, 0), ControllerKind::kMG,
                                 nullptr, "");
  CHECK(f_rms(r.episode) == 0.0);
}

TEST_CASE("iterate with an infinite tolerance stops after the first comparison") {
  Environment env;
  env.duration = 1.0;
  env.pick_index = 3;
  IterateConfig c;
  c.predictor = tiny();
  c.train.epochs = 1;
  c.episodes_per_iteration = 3;
  c.max_iters = 4;
  c.tol = std::numeric_limits<double>::infinity();
  c.horizons = {1, 3};
  const IterateOutcome o = iterate(env, c, 1);
  CHECK(o.models.size() == 2);
  CHECK(o.converged);
  CHECK(o.iterations[1].model_id == "M_1");
  const std::string csv = iteration_csv(o);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 2 * 2);
  const IterateOutcome again = iterate(env, c, 1);
  CHECK(iteration_csv(again) == csv);
}

TEST_CASE("transfer contexts") {
  Environment env;
  TransferContext ctx;
  ctx.kind = TransferKind::kNewUser;
  Environment user = apply_context(env, ctx);
  CHECK(user.human.stiffness(0) == doctest::Approx(1.5 * env.human.stiffness(0)));
  CHECK(user.human.damping(1) == doctest::Approx(1.5 * env.human.damping(1)));
  CHECK(user.human.id != env.human.id);
  ctx.kind = TransferKind::kObject;
  Environment obj = apply_context(env, ctx);
  CHECK(obj.plant.mass(0) == doctest::Approx(env.plant.mass(0) + 5.0));
  CHECK(obj.human.damping(0) == doctest::Approx(2.0 * env.human.damping(0)));
  ctx.kind = TransferKind::kNewTrajectory;
  CHECK(apply_context(env, ctx).trajectories == std::vector<TrajectoryKind>{TrajectoryKind::kEval});
  for (auto k : {TransferKind::kNewTrajectory, TransferKind::kNewUser, TransferKind::kObject}) {
    CHECK(parse_transfer_kind(to_string(k)) == k);
  }
  CHECK_THROWS_AS(parse_transfer_kind("robot"), InvalidArgument);
}
