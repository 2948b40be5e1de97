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


#include "phri/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace phri {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void require(bool ok, const std::string& message) {
  if (!ok) throw InvalidArgument(message);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double mean_of(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

double sample_std(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / double(v.size() - 1));
}

// Output parametrization of a target, matching the model head.
Vec flat_target(const Sample& s, const PredictorConfig& c) {
  Vec t(c.output_size());
  for (int j = 0; j < c.horizon_N; ++j) {
    for (int a = 0; a < c.dof; ++a) {
      const double anchor = c.residual_output ? s.input(c.window_k - 1, a) : 0.0;
      t(j * c.dof + a) = s.target(j, a) - anchor;
    }
  }
  return t;
}

struct Moments {
  explicit Moments(Eigen::Index n) : sum(Vec::Zero(n)), count(0) {}
  Vec sum;
  std::size_t count;
};

Vec population_scale(const Vec& variance, const Vec& mean) {
  Vec scale(variance.size());
  for (Eigen::Index i = 0; i < variance.size(); ++i) {
    const double sd = std::sqrt(std::max(variance(i), 0.0));
    scale(i) = sd <= 1e-12 * std::max(1.0, std::abs(mean(i))) ? 1.0 : sd;
  }
  return scale;
}

TrainResult train_impl(std::span<const Sample> windows, const PredictorConfig& config,
                       const PredictorModel* base, const Normalization& norm,
                       const TrainOptions& options, std::uint64_t seed) {
  require(options.epochs >= 0, "train: epochs must be >= 0");
  require(options.batch_size >= 1, "train: batch_size must be >= 1");
  require(options.learning_rate > 0.0, "train: learning_rate must be > 0");
  const auto start = Clock::now();
  TrainResult out;
  if (base) {
    if (!(base->config() == config)) {
      throw InvalidArgument("train: base model shape does not match the predictor config");
    }
    out.model = *base;
  } else {
    out.model = init_model(config, derive_seed(seed, 0x1417));
  }
  out.model.normalization() = norm;
  out.model.validate();
  set_freeze(out.model, options.freeze);
  if (options.epochs == 0) {
    out.seconds = seconds_since(start);
    return out;
  }
  require(!windows.empty(), "train: dataset has no windows");

  bool recurrent_trainable = false;
  for (const auto& b : out.model.blocks()) recurrent_trainable |= b.recurrent && !b.frozen;
  const GradientScope scope = recurrent_trainable ? GradientScope::kAll : GradientScope::kHeadOnly;

  TrainState state = TrainState::for_model(out.model, options.learning_rate, seed);
  std::vector<std::size_t> order(windows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::uint64_t shuffle_state = derive_seed(seed, 0x5187);
  std::vector<const Sample*> batch;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      shuffle_state = mix64(shuffle_state);
      std::swap(order[i - 1], order[shuffle_state % i]);
    }
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t first = 0; first < order.size(); first += options.batch_size) {
      const std::size_t last = std::min(order.size(), first + options.batch_size);
      batch.clear();
      for (std::size_t i = first; i < last; ++i) batch.push_back(&windows[order[i]]);
      LossAndGradients lg;
      try {
        lg = loss_and_gradients(out.model, batch, scope);
      } catch (const NumericalError& e) {
        std::ostringstream msg;
        msg << "training aborted in epoch " << epoch << " (window " << order[first] << " starts the batch): "
            << e.what() << "; loss trace:";
        for (double l : out.loss_trace) msg << ' ' << l;
        throw NumericalError(msg.str());
      }
      optimizer_step(out.model, state, lg.gradients);
      total += lg.loss;
      ++batches;
    }
    out.loss_trace.push_back(total / double(batches));
  }
  out.seconds = seconds_since(start);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Windows and datasets

Mat episode_features(const Episode& episode) {
  const int d = episode.dof();
  Mat f(static_cast<Eigen::Index>(episode.size()), 4 * d);
  for (std::size_t i = 0; i < episode.size(); ++i) {
    const auto& r = episode.records[i];
    f.row(static_cast<Eigen::Index>(i)) << r.x.transpose(), r.v.transpose(), r.u_h.transpose(),
        r.x_ref_r.transpose();
  }
  return f;
}

Mat episode_positions(const Episode& episode) {
  Mat p(static_cast<Eigen::Index>(episode.size()), episode.dof());
  for (std::size_t i = 0; i < episode.size(); ++i) {
    p.row(static_cast<Eigen::Index>(i)) = episode.records[i].x.transpose();
  }
  return p;
}

std::size_t window_count(std::size_t length, int k, int N) {
  const std::size_t need = static_cast<std::size_t>(k) + static_cast<std::size_t>(N);
  return length >= need ? length - need + 1 : 0;
}

std::vector<Sample> make_windows(const Episode& episode, int k, int N, TargetSource target,
                                 int stride) {
  require(k >= 1 && N >= 1, "make_windows: k and N must be >= 1");
  require(stride >= 1, "make_windows: stride must be >= 1");
  std::vector<Sample> out;
  const std::size_t count = window_count(episode.size(), k, N);
  if (count == 0) return out;
  const Mat features = episode_features(episode);
  const int d = episode.dof();
  out.reserve((count + stride - 1) / stride);
  for (std::size_t w = 0; w < count; w += stride) {
    const auto T = static_cast<Eigen::Index>(w) + k - 1;
    Sample s;
    s.input = features.middleRows(T - k + 1, k);
    s.target.resize(N, d);
    for (int j = 0; j < N; ++j) {
      const auto& rec = episode.records[static_cast<std::size_t>(T + 1 + j)];
      s.target.row(j) =
          (target == TargetSource::kMeasured ? rec.x : rec.x_ref_h_true).transpose();
    }
    out.push_back(std::move(s));
  }
  return out;
}

Dataset build_dataset(std::vector<Episode> episodes, const PredictorConfig& config, int stride,
                      TargetSource target) {
  Dataset ds;
  for (const auto& ep : episodes) {
    if (ep.dof() != config.dof) {
      throw InvalidArgument("build_dataset: episode dof differs from the predictor config");
    }
    auto w = make_windows(ep, config.window_k, config.horizon_N, target, stride);
    ds.windows.insert(ds.windows.end(), std::make_move_iterator(w.begin()),
                      std::make_move_iterator(w.end()));
  }
  ds.episodes = std::move(episodes);
  return ds;
}

Normalization fit_normalization(std::span<const Sample> windows, const PredictorConfig& config) {
  require(!windows.empty(), "fit_normalization: no windows");
  Moments in(config.input_features()), out(config.output_size());
  for (const auto& s : windows) {
    in.sum += s.input.colwise().sum().transpose();
    in.count += static_cast<std::size_t>(s.input.rows());
    out.sum += flat_target(s, config);
    ++out.count;
  }
  Normalization n;
  n.input_mean = in.sum / double(in.count);
  n.output_mean = out.sum / double(out.count);
  Vec in_var = Vec::Zero(config.input_features());
  Vec out_var = Vec::Zero(config.output_size());
  for (const auto& s : windows) {
    in_var += (s.input.rowwise() - n.input_mean.transpose()).colwise().squaredNorm().transpose();
    out_var += (flat_target(s, config) - n.output_mean).cwiseAbs2();
  }
  n.input_scale = population_scale(in_var / double(in.count), n.input_mean);
  n.output_scale = population_scale(out_var / double(out.count), n.output_mean);
  return n;
}

TrainResult train_model(const Dataset& dataset, const PredictorConfig& config,
                        const PredictorModel* base, const TrainOptions& options,
                        std::uint64_t seed) {
  config.validate();
  Normalization norm;
  if (dataset.normalization) {
    norm = *dataset.normalization;
  } else if (base) {
    norm = base->normalization();
  } else if (!dataset.windows.empty()) {
    norm = fit_normalization(dataset.windows, config);
  } else {
    norm = Normalization::identity(config);
  }
  return train_impl(dataset.windows, config, base, norm, options, seed);
}

TrainResult transfer_learn(const PredictorModel& base, const Dataset& dataset,
                           TrainOptions options, std::uint64_t seed) {
  options.freeze = FreezePolicy::kFreezeRecurrent;
  return train_impl(dataset.windows, base.config(), &base, base.normalization(), options, seed);
}

// ---------------------------------------------------------------------------
// Metrics

double window_rms(const Mat& prediction, const Mat& measured, std::size_t T, int n) {
  require(n >= 1, "window_rms: n must be >= 1");
  if (prediction.rows() < n) {
    throw InvalidArgument("prediction at step " + std::to_string(T) + " has " +
                          std::to_string(prediction.rows()) + " rows, horizon " +
                          std::to_string(n) + " requested");
  }
  require(static_cast<Eigen::Index>(T) + n < measured.rows(),
          "window_rms: horizon runs past the measured positions");
  double s = 0.0;
  for (int j = 1; j <= n; ++j) {
    s += (prediction.row(j - 1) - measured.row(static_cast<Eigen::Index>(T) + j)).squaredNorm();
  }
  return std::sqrt(s / n);
}

namespace {

std::vector<double> window_errors(std::span<const Mat> predictions, const Mat& measured, int n) {
  if (static_cast<Eigen::Index>(predictions.size()) != measured.rows()) {
    throw InvalidArgument("metrics: " + std::to_string(predictions.size()) +
                          " prediction slots for " + std::to_string(measured.rows()) +
                          " measured steps");
  }
  std::vector<double> errors;
  for (std::size_t T = 0; T + static_cast<std::size_t>(n) < predictions.size(); ++T) {
    if (predictions[T].size() == 0) continue;
    errors.push_back(window_rms(predictions[T], measured, T, n));
  }
  if (errors.empty()) {
    throw InvalidArgument("metrics: no stored prediction has " + std::to_string(n) +
                          " measured samples ahead");
  }
  return errors;
}

}  // namespace

double e_rms(std::span<const Mat> predictions, const Mat& measured, int n) {
  const auto errors = window_errors(predictions, measured, n);
  return mean_of(errors);
}

double e_max(std::span<const Mat> predictions, const Mat& measured, int n) {
  const auto errors = window_errors(predictions, measured, n);
  return *std::max_element(errors.begin(), errors.end());
}

double f_rms(const Episode& episode) {
  require(!episode.records.empty(), "f_rms: episode has no records");
  double s = 0.0;
  for (const auto& r : episode.records) s += r.u_h.squaredNorm();
  return std::sqrt(s / double(episode.records.size()));
}

double incomplete_beta(double a, double b, double x) {
  require(a > 0.0 && b > 0.0, "incomplete_beta: a and b must be > 0");
  require(x >= 0.0 && x <= 1.0, "incomplete_beta: x must lie in [0, 1]");
  if (x == 0.0 || x == 1.0) return x;
  if (x > (a + 1.0) / (a + b + 2.0)) return 1.0 - incomplete_beta(b, a, 1.0 - x);
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  // Modified Lentz evaluation of the continued fraction.
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-16;
  double c = 1.0;
  double d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double f = d;
  for (int m = 1; m <= 10000; ++m) {
    const double m2 = 2.0 * m;
    double num = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
    d = 1.0 + num * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + num / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    f *= d * c;
    num = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
    d = 1.0 + num * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + num / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    f *= delta;
    if (std::abs(delta - 1.0) < eps) return std::exp(log_front) * f / a;
  }
  throw NumericalError("incomplete_beta: continued fraction did not converge");
}

double student_t_sf(double t, double df) {
  require(df > 0.0, "student_t_sf: degrees of freedom must be > 0");
  if (std::isinf(t)) return t > 0 ? 0.0 : 1.0;
  const double tail = 0.5 * incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
  return t >= 0.0 ? tail : 1.0 - tail;
}

WelchResult welch_t_test(std::span<const double> a, std::span<const double> b) {
  require(a.size() >= 2 && b.size() >= 2, "welch_t_test: each sample needs at least 2 values");
  const double na = double(a.size()), nb = double(b.size());
  const double va = std::pow(sample_std(a), 2) / na;
  const double vb = std::pow(sample_std(b), 2) / nb;
  if (!(va + vb > 0.0)) throw InvalidArgument("welch_t_test: both samples have zero variance");
  WelchResult r;
  r.t = (mean_of(a) - mean_of(b)) / std::sqrt(va + vb);
  r.df = (va + vb) * (va + vb) / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
  r.p = std::min(1.0, 2.0 * student_t_sf(std::abs(r.t), r.df));
  return r;
}

// ---------------------------------------------------------------------------
// Reports

const HorizonMetrics& EvalReport::at(int horizon) const {
  for (const auto& h : horizons) {
    if (h.horizon == horizon) return h;
  }
  throw InvalidArgument("report has no horizon " + std::to_string(horizon));
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["schema_version"] = kSchemaVersion;
  j["model_id"] = model_id;
  j["seed"] = seed;
  j["f_rms"] = f_rms;
  j["horizons"] = nlohmann::json::array();
  for (const auto& h : horizons) {
    j["horizons"].push_back({{"horizon", h.horizon},
                             {"e_rms", h.e_rms},
                             {"e_max", h.e_max},
                             {"e_rms_std", h.e_rms_std},
                             {"e_max_std", h.e_max_std}});
  }
  j["episodes"] = nlohmann::json::array();
  for (const auto& e : episodes) {
    j["episodes"].push_back({{"trajectory", e.trajectory},
                             {"seed", e.seed},
                             {"e_rms", e.e_rms},
                             {"e_max", e.e_max},
                             {"f_rms", e.f_rms}});
  }
  return j;
}

namespace {

EvalReport summarize(std::vector<EpisodeMetrics> per_episode, std::span<const int> horizons,
                     std::string model_id, std::uint64_t seed) {
  EvalReport report;
  report.model_id = std::move(model_id);
  report.seed = seed;
  for (std::size_t h = 0; h < horizons.size(); ++h) {
    std::vector<double> rms, mx;
    for (const auto& e : per_episode) {
      rms.push_back(e.e_rms[h]);
      mx.push_back(e.e_max[h]);
    }
    report.horizons.push_back(
        {horizons[h], mean_of(rms), mean_of(mx), sample_std(rms), sample_std(mx)});
  }
  std::vector<double> f;
  for (const auto& e : per_episode) f.push_back(e.f_rms);
  report.f_rms = mean_of(f);
  report.episodes = std::move(per_episode);
  return report;
}

EpisodeMetrics episode_metrics(const Episode& ep, std::span<const Mat> predictions,
                               std::span<const int> horizons) {
  EpisodeMetrics m;
  m.trajectory = to_string(ep.meta.trajectory.kind);
  m.seed = ep.meta.seed;
  const Mat measured = episode_positions(ep);
  for (int n : horizons) {
    const auto errors = window_errors(predictions, measured, n);
    m.e_rms.push_back(mean_of(errors));
    m.e_max.push_back(*std::max_element(errors.begin(), errors.end()));
  }
  m.f_rms = f_rms(ep);
  return m;
}

}  // namespace

EvalReport evaluate_rollouts(std::span<const Rollout> rollouts, std::span<const int> horizons,
                             std::string model_id, std::uint64_t seed) {
  require(!rollouts.empty(), "evaluate_rollouts: no rollouts");
  std::vector<EpisodeMetrics> per_episode;
  for (const auto& r : rollouts) {
    per_episode.push_back(episode_metrics(r.episode, r.predictions, horizons));
  }
  return summarize(std::move(per_episode), horizons, std::move(model_id), seed);
}

EvalReport evaluate_offline(const PredictorModel& model, std::span<const Episode> episodes,
                            std::span<const int> horizons, std::string model_id,
                            std::uint64_t seed) {
  require(!episodes.empty(), "evaluate_offline: no episodes");
  const auto& c = model.config();
  std::vector<EpisodeMetrics> per_episode;
  for (const auto& ep : episodes) {
    const Mat features = episode_features(ep);
    std::vector<Mat> predictions(ep.size());
    std::vector<Mat> windows;
    for (std::size_t T = c.window_k - 1; T < ep.size(); ++T) {
      windows.push_back(features.middleRows(static_cast<Eigen::Index>(T) - c.window_k + 1,
                                            c.window_k));
    }
    std::vector<const Mat*> ptrs;
    for (const auto& w : windows) ptrs.push_back(&w);
    constexpr std::size_t chunk = 256;
    for (std::size_t first = 0; first < ptrs.size(); first += chunk) {
      const std::size_t last = std::min(ptrs.size(), first + chunk);
      auto out = forward_batch(model, std::span(ptrs).subspan(first, last - first));
      for (std::size_t i = 0; i < out.size(); ++i) {
        predictions[first + i + c.window_k - 1] = std::move(out[i]);
      }
    }
    per_episode.push_back(episode_metrics(ep, predictions, horizons));
  }
  return summarize(std::move(per_episode), horizons, std::move(model_id), seed);
}

void append_csv_rows(const EvalReport& report, std::string& csv) {
  for (const auto& h : report.horizons) {
    csv += report.model_id + "," + std::to_string(h.horizon) + "," + fmt(h.e_rms) + "," +
           fmt(h.e_max) + "," + fmt(report.f_rms) + "," + std::to_string(report.seed) + "\n";
  }
}

// ---------------------------------------------------------------------------
// Experiment drivers

Scenario make_scenario(const Environment& env, std::uint64_t seed, std::uint64_t stream,
                       std::size_t index) {
  require(!env.trajectories.empty(), "environment: no trajectory kinds configured");
  std::mt19937_64 rng(derive_seed(seed, stream, index));
  Scenario s;
  s.trajectory = TrajectorySpec::defaults(env.trajectories[index % env.trajectories.size()],
                                          env.plant.dof());
  s.trajectory.duration = env.duration;
  if (env.obstacles) s.obstacle = random_obstacle(s.trajectory, rng, env.obstacle_half_width);
  s.noise_seed = rng();
  return s;
}

Rollout run_scenario(const Environment& env, const Scenario& scenario, ControllerKind kind,
                     const PredictorModel* predictor, const std::string& model_id) {
  ControllerSetup setup;
  setup.kind = kind;
  setup.pick_index = env.pick_index;
  if (kind == ControllerKind::kGT) {
    setup.game = std::make_shared<const GameController>(env.plant, env.weights);
  }
  std::optional<ModelPredictor> adapter;
  if (predictor) adapter.emplace(*predictor, model_id);
  SimulationOptions options;
  options.model_id = model_id;
  return simulate_episode(env.plant, scenario.trajectory, scenario.obstacle, env.human, setup,
                          adapter ? &*adapter : nullptr, scenario.noise_seed, options);
}

std::vector<Rollout> collect(const Environment& env, std::uint64_t seed, std::uint64_t stream,
                             std::size_t count, ControllerKind kind,
                             const PredictorModel* predictor, const std::string& model_id) {
  std::vector<Rollout> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rollout r = run_scenario(env, make_scenario(env, seed, stream, i), kind, predictor, model_id);
    if (r.episode.meta.aborted) {
      throw SimulationDiverged("episode " + std::to_string(i) + " of stream " +
                                   std::to_string(stream) + " diverged: " +
                                   r.episode.meta.diagnostic,
                               std::move(r.episode));
    }
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

std::vector<Episode> episodes_of(std::vector<Rollout>&& rollouts) {
  std::vector<Episode> out;
  out.reserve(rollouts.size());
  for (auto& r : rollouts) out.push_back(std::move(r.episode));
  return out;
}

std::string model_name(int k) { return "M_" + std::to_string(k); }

}  // namespace

IterateOutcome iterate(const Environment& env, const IterateConfig& config, std::uint64_t seed,
                       const ProgressFn& progress) {
  require(config.max_iters >= 1, "iterate: max_iters must be >= 1");
  require(config.episodes_per_iteration >= 2,
          "iterate: episodes_per_iteration must be >= 2");
  require(config.holdout_fraction > 0.0 && config.holdout_fraction < 1.0,
          "iterate: holdout_fraction must lie in (0, 1)");
  require(!config.horizons.empty(), "iterate: no evaluation horizons");
  for (int h : config.horizons) {
    require(h >= 1 && h <= config.predictor.horizon_N,
            "iterate: evaluation horizon " + std::to_string(h) + " outside [1, horizon_N]");
  }
  require(env.pick_index >= 1 && env.pick_index <= config.predictor.horizon_N,
          "iterate: pick_index " + std::to_string(env.pick_index) +
              " must lie within the prediction horizon " +
              std::to_string(config.predictor.horizon_N));
  const auto note = [&](const std::string& s) {
    if (progress) progress(s);
  };

  const int holdout = std::max(
      1, static_cast<int>(std::lround(config.holdout_fraction * config.episodes_per_iteration)));
  const int train_count = config.episodes_per_iteration - holdout;
  require(train_count >= 1, "iterate: holdout leaves no training episodes");
  // Every model is scored on the same held-out scenarios.
  const std::size_t eval_count = static_cast<std::size_t>(holdout) * (config.max_iters + 1);

  IterateOutcome outcome;
  std::optional<Normalization> frozen_norm;
  for (int k = 0; k <= config.max_iters; ++k) {
    IterationRecord rec;
    rec.index = k;
    rec.model_id = model_name(k);
    const PredictorModel* previous = k == 0 ? nullptr : &outcome.models.back();
    const std::string previous_id = k == 0 ? std::string() : model_name(k - 1);
    try {
      auto start = Clock::now();
      Dataset ds = build_dataset(
          episodes_of(collect(env, seed, kTrainStream + k, train_count, ControllerKind::kGT,
                              previous, previous_id)),
          config.predictor, config.window_stride, config.target);
      ds.provenance = {previous_id, k, env.human.id};
      rec.collect_seconds = seconds_since(start);
      if (!frozen_norm) frozen_norm = fit_normalization(ds.windows, config.predictor);
      ds.normalization = frozen_norm;

      TrainResult trained = train_model(ds, config.predictor, previous, config.train,
                                        derive_seed(seed, 0x7A11, k));
      rec.train_seconds = trained.seconds;
      rec.loss_trace = std::move(trained.loss_trace);
      trained.model.set_version_tag("phri-predictor/1 " + rec.model_id);

      start = Clock::now();
      const auto held = collect(env, seed, kHeldOutStream, eval_count, ControllerKind::kGT,
                                &trained.model, rec.model_id);
      rec.report = evaluate_rollouts(held, config.horizons, rec.model_id, seed);
      rec.collect_seconds += seconds_since(start);
      outcome.models.push_back(std::move(trained.model));
    } catch (const NumericalError& e) {
      outcome.error = "iteration " + std::to_string(k) + " aborted: " + e.what();
      note(outcome.error);
      return outcome;
    }
    const double e_now = rec.report.at(config.horizons.back()).e_rms;
    {
      std::ostringstream msg;
      msg << rec.model_id << ": held-out e_rms(H=" << config.horizons.back() << ") = " << e_now
          << " m, train " << rec.train_seconds << " s";
      note(msg.str());
    }
    outcome.iterations.push_back(std::move(rec));
    if (k >= 1) {
      const double e_prev =
          outcome.iterations[k - 1].report.at(config.horizons.back()).e_rms;
      if (std::abs(e_now - e_prev) < config.tol) {
        outcome.converged = true;
        break;
      }
    }
  }
  return outcome;
}

std::string iteration_csv(const IterateOutcome& outcome) {
  std::string csv = std::string(kReportCsvHeader) + "\n";
  for (const auto& it : outcome.iterations) append_csv_rows(it.report, csv);
  return csv;
}

std::string to_string(TransferKind kind) {
  switch (kind) {
    case TransferKind::kNewTrajectory:
      return "new_trajectory";
    case TransferKind::kNewUser:
      return "new_user";
    case TransferKind::kObject:
      return "object";
  }
  return "unknown";
}

TransferKind parse_transfer_kind(std::string_view name) {
  if (name == "new_trajectory") return TransferKind::kNewTrajectory;
  if (name == "new_user") return TransferKind::kNewUser;
  if (name == "object") return TransferKind::kObject;
  throw InvalidArgument("unknown transfer context '" + std::string(name) +
                        "' (expected new_trajectory, new_user or object)");
}

Environment apply_context(const Environment& env, const TransferContext& context) {
  Environment out = env;
  std::ostringstream id;
  switch (context.kind) {
    case TransferKind::kNewTrajectory:
      out.trajectories = {TrajectoryKind::kEval};
      break;
    case TransferKind::kNewUser:
      require(context.gain_scale > 0.0, "transfer: gain_scale must be > 0");
      id << env.human.id << "-x" << context.gain_scale;
      out.human = env.human.scaled(context.gain_scale, id.str());
      break;
    case TransferKind::kObject:
      require(context.object_mass >= 0.0, "transfer: object_mass must be >= 0");
      out.plant = with_object(env.plant, context.object_mass);
      out.human.damping *= context.object_damping_scale;
      out.human.id = env.human.id + "-object";
      break;
  }
  return out;
}

TransferOutcome run_transfer(const Environment& env, const TransferContext& context,
                             const PredictorModel& base, const TransferConfig& config,
                             std::uint64_t seed) {
  require(config.episodes >= 1 && config.eval_episodes >= 1,
          "transfer: episode counts must be >= 1");
  const Environment target = apply_context(env, context);
  const std::string base_id = "base";
  const std::string tuned_id = "tl-" + to_string(context.kind);
  TransferOutcome out;

  const auto before = collect(target, seed, kTransferEvalStream, config.eval_episodes,
                              ControllerKind::kGT, &base, base_id);
  out.before = evaluate_rollouts(before, config.horizons, base_id, seed);

  const auto start = Clock::now();
  Dataset ds = build_dataset(episodes_of(collect(target, seed, kTransferStream, config.episodes,
                                                 ControllerKind::kGT, &base, base_id)),
                             base.config(), config.window_stride);
  ds.provenance = {base_id, 0, target.human.id};
  if (ds.windows.empty()) {
    throw InvalidArgument("transfer: recordings are shorter than window_k + horizon_N");
  }
  TrainResult tuned = transfer_learn(base, ds, config.train, derive_seed(seed, 0x71));
  out.seconds = seconds_since(start);
  out.model = std::move(tuned.model);
  out.model.set_version_tag("phri-predictor/1 " + tuned_id);

  const auto after = collect(target, seed, kTransferEvalStream, config.eval_episodes,
                             ControllerKind::kGT, &out.model, tuned_id);
  out.after = evaluate_rollouts(after, config.horizons, tuned_id, seed);
  return out;
}

nlohmann::json ComparisonReport::to_json() const {
  nlohmann::json j;
  j["schema_version"] = kSchemaVersion;
  j["controllers"] = nlohmann::json::array();
  for (const auto& c : controllers) {
    j["controllers"].push_back(
        {{"controller", c.controller}, {"mean", c.mean}, {"std", c.stddev}, {"f_rms", c.f_rms}});
  }
  j["tests"] = nlohmann::json::array();
  for (const auto& t : tests) {
    j["tests"].push_back({{"a", t.a},
                          {"b", t.b},
                          {"t", t.result.t},
                          {"df", t.result.df},
                          {"p", t.result.p}});
  }
  return j;
}

std::string ComparisonReport::to_csv() const {
  std::string csv = "controller,mean_f_rms,std_f_rms,episodes\n";
  for (const auto& c : controllers) {
    csv += c.controller + "," + fmt(c.mean) + "," + fmt(c.stddev) + "," +
           std::to_string(c.f_rms.size()) + "\n";
  }
  csv += "\npair,t,df,p\n";
  for (const auto& t : tests) {
    csv += t.a + "-" + t.b + "," + fmt(t.result.t) + "," + fmt(t.result.df) + "," +
           fmt(t.result.p) + "\n";
  }
  return csv;
}

ComparisonReport compare_controllers(const Environment& env, const PredictorModel* model,
                                     std::size_t episodes, std::uint64_t seed) {
  require(episodes >= 2, "compare: at least 2 episodes per controller are needed");
  if (model) {
    require(env.pick_index <= model->config().horizon_N,
            "compare: pick_index exceeds the model's prediction horizon");
  }
  ComparisonReport report;
  std::vector<ControllerKind> kinds = {ControllerKind::kMG, ControllerKind::kIMP};
  if (model) kinds.push_back(ControllerKind::kGT);
  for (ControllerKind kind : kinds) {
    ControllerSummary s;
    s.controller = to_string(kind);
    const auto rollouts = collect(env, seed, kCompareStream, episodes, kind,
                                  kind == ControllerKind::kGT ? model : nullptr,
                                  kind == ControllerKind::kGT ? "model" : "");
    for (const auto& r : rollouts) s.f_rms.push_back(f_rms(r.episode));
    s.mean = mean_of(s.f_rms);
    s.stddev = sample_std(s.f_rms);
    report.controllers.push_back(std::move(s));
  }
  for (std::size_t i = 0; i < report.controllers.size(); ++i) {
    for (std::size_t j = i + 1; j < report.controllers.size(); ++j) {
      const auto& a = report.controllers[i];
      const auto& b = report.controllers[j];
      report.tests.push_back({a.controller, b.controller, welch_t_test(a.f_rms, b.f_rms)});
    }
  }
  return report;
}

}  // namespace phri
