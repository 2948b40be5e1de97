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


#include "phri/config.hpp"

#include <fstream>
#include <set>

namespace phri {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& section, std::set<std::string> allowed) {
  if (!j.is_object()) throw InvalidArgument("config: '" + section + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) {
      throw InvalidArgument("config: unknown key '" + (section.empty() ? key : section + "." + key) +
                            "'");
    }
  }
}

// A number broadcasts to every axis; an array must have exactly `n` entries.
Vec per_axis(const json& j, int n, const std::string& name) {
  if (j.is_number()) return Vec::Constant(n, j.get<double>());
  const auto v = j.get<std::vector<double>>();
  if (static_cast<int>(v.size()) != n) {
    throw InvalidArgument("config: '" + name + "' needs " + std::to_string(n) + " entries");
  }
  return Eigen::Map<const Vec>(v.data(), n);
}

// Flat array = diagonal, nested array = full matrix.
Mat weight_matrix(const json& j, int n, const std::string& name) {
  if (j.is_array() && !j.empty() && j.front().is_array()) {
    const auto rows = j.get<std::vector<std::vector<double>>>();
    if (static_cast<int>(rows.size()) != n) {
      throw InvalidArgument("config: '" + name + "' must be " + std::to_string(n) + "x" +
                            std::to_string(n));
    }
    Mat m(n, n);
    for (int r = 0; r < n; ++r) {
      if (static_cast<int>(rows[r].size()) != n) {
        throw InvalidArgument("config: '" + name + "' must be square");
      }
      for (int c = 0; c < n; ++c) m(r, c) = rows[r][c];
    }
    return m;
  }
  return per_axis(j, n, name).asDiagonal();
}

json matrix_json(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    rows.push_back(std::vector<double>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) rows.back()[c] = m(r, c);
  }
  return rows;
}

json vec_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

std::string target_name(TargetSource t) {
  return t == TargetSource::kMeasured ? "measured" : "intent";
}

TargetSource parse_target(const std::string& s) {
  if (s == "measured") return TargetSource::kMeasured;
  if (s == "intent") return TargetSource::kTrueIntent;
  throw InvalidArgument("config: unknown training target '" + s + "' (measured or intent)");
}

}  // namespace

std::string to_string(Profile p) { return p == Profile::kDesk ? "desk" : "paper"; }

Profile parse_profile(std::string_view name) {
  if (name == "desk") return Profile::kDesk;
  if (name == "paper") return Profile::kPaper;
  throw InvalidArgument("unknown profile '" + std::string(name) + "' (expected desk or paper)");
}

RunConfig RunConfig::for_profile(Profile profile) {
  RunConfig c;
  c.profile = profile;
  if (profile == Profile::kDesk) {
    c.iterate.predictor = PredictorConfig::desk();
    c.iterate.horizons = {2, 5, 10};
    c.iterate.window_stride = 4;
    c.iterate.episodes_per_iteration = 10;
    c.env.pick_index = 4;
    c.generate.episodes_per_kind = 10;
  } else {
    c.iterate.predictor = PredictorConfig::paper();
    c.iterate.horizons = {5, 10, 20, 50};
    c.iterate.window_stride = 1;
    c.iterate.episodes_per_iteration = 60;
    c.env.pick_index = 20;
    c.generate.episodes_per_kind = 20;
  }
  c.transfer.horizons = c.iterate.horizons;
  c.transfer.window_stride = c.iterate.window_stride;
  return c;
}

void RunConfig::validate() const {
  env.plant.validate();
  env.weights.validate();
  env.human.validate();
  iterate.predictor.validate();
  const int d = env.plant.dof();
  if (env.weights.dof() != d || env.human.dof() != d || iterate.predictor.dof != d) {
    throw InvalidArgument("config: plant, game weights, human and predictor dof must agree");
  }
  if (env.trajectories.empty()) throw InvalidArgument("config: no trajectory kinds");
  if (!(env.duration > 0.0)) throw InvalidArgument("config: duration must be > 0");
  if (env.pick_index < 1 || env.pick_index > iterate.predictor.horizon_N) {
    throw InvalidArgument("config: pick_index must lie in [1, horizon_N]");
  }
  for (int h : iterate.horizons) {
    if (h < 1 || h > iterate.predictor.horizon_N) {
      throw InvalidArgument("config: horizon " + std::to_string(h) + " outside [1, horizon_N]");
    }
  }
  if (generate.episodes_per_kind < 0) throw InvalidArgument("config: episodes must be >= 0");
  if (!(serve.rate > 0.0)) throw InvalidArgument("config: serve.rate must be > 0");
  if (serve.port < 0 || serve.port > 65535) throw InvalidArgument("config: serve.port out of range");
}

RunConfig apply_config(RunConfig c, const json& doc) {
  check_keys(doc, "", {"profile", "seed", "out", "plant", "game", "human", "trajectories",
                       "duration", "obstacles", "obstacle_half_width", "pick_index", "predictor",
                       "train", "iterate", "transfer", "compare", "generate", "serve"});
  if (doc.contains("profile")) {
    const Profile p = parse_profile(doc["profile"].get<std::string>());
    if (p != c.profile) {
      const RunConfig fresh = RunConfig::for_profile(p);
      const auto seed = c.seed;
      const auto out = c.out;
      c = fresh;
      c.seed = seed;
      c.out = out;
    }
  }
  if (doc.contains("seed")) c.seed = doc["seed"].get<std::uint64_t>();
  if (doc.contains("out")) c.out = doc["out"].get<std::string>();

  int d = c.env.plant.dof();
  if (doc.contains("plant")) {
    const auto& p = doc["plant"];
    check_keys(p, "plant", {"dof", "mass", "damping", "stiffness", "dt"});
    if (p.contains("dof") && p["dof"].get<int>() != d) {
      d = p["dof"].get<int>();
      if (d < 1) throw InvalidArgument("config: plant.dof must be >= 1");
      c.env.plant = PlantParams::diagonal(d, c.env.plant.mass(0), c.env.plant.damping(0),
                                          c.env.plant.stiffness(0), c.env.plant.dt);
      c.env.weights = GameWeights::defaults(d, c.env.weights.alpha);
      c.env.human = HumanModel::defaults(d, c.env.obstacle_half_width);
      c.iterate.predictor.dof = d;
    }
    if (p.contains("mass")) c.env.plant.mass = per_axis(p["mass"], d, "plant.mass");
    if (p.contains("damping")) c.env.plant.damping = per_axis(p["damping"], d, "plant.damping");
    if (p.contains("stiffness")) {
      c.env.plant.stiffness = per_axis(p["stiffness"], d, "plant.stiffness");
    }
    if (p.contains("dt")) c.env.plant.dt = p["dt"].get<double>();
  }
  if (doc.contains("game")) {
    const auto& g = doc["game"];
    check_keys(g, "game", {"alpha", "Q_hh", "Q_hr", "Q_rh", "Q_rr", "R_h", "R_r"});
    auto& w = c.env.weights;
    if (g.contains("alpha")) w.alpha = g["alpha"].get<double>();
    if (g.contains("Q_hh")) w.Q_hh = weight_matrix(g["Q_hh"], 2 * d, "game.Q_hh");
    if (g.contains("Q_hr")) w.Q_hr = weight_matrix(g["Q_hr"], 2 * d, "game.Q_hr");
    if (g.contains("Q_rh")) w.Q_rh = weight_matrix(g["Q_rh"], 2 * d, "game.Q_rh");
    if (g.contains("Q_rr")) w.Q_rr = weight_matrix(g["Q_rr"], 2 * d, "game.Q_rr");
    if (g.contains("R_h")) w.R_h = weight_matrix(g["R_h"], d, "game.R_h");
    if (g.contains("R_r")) w.R_r = weight_matrix(g["R_r"], d, "game.R_r");
  }
  if (doc.contains("obstacle_half_width")) {
    c.env.obstacle_half_width = doc["obstacle_half_width"].get<double>();
    c.env.human.detour_amplitude = c.env.obstacle_half_width + 0.03;
  }
  if (doc.contains("human")) {
    const auto& h = doc["human"];
    check_keys(h, "human", {"id", "stiffness", "damping", "detour_amplitude", "detour_sigma",
                            "force_cap", "noise_std"});
    auto& m = c.env.human;
    if (h.contains("id")) m.id = h["id"].get<std::string>();
    if (h.contains("stiffness")) m.stiffness = per_axis(h["stiffness"], d, "human.stiffness");
    if (h.contains("damping")) m.damping = per_axis(h["damping"], d, "human.damping");
    if (h.contains("detour_amplitude")) m.detour_amplitude = h["detour_amplitude"].get<double>();
    if (h.contains("detour_sigma")) m.detour_sigma = h["detour_sigma"].get<double>();
    if (h.contains("force_cap")) m.force_cap = h["force_cap"].get<double>();
    if (h.contains("noise_std")) m.noise_std = h["noise_std"].get<double>();
  }
  if (doc.contains("trajectories")) {
    c.env.trajectories.clear();
    for (const auto& t : doc["trajectories"]) {
      c.env.trajectories.push_back(parse_trajectory_kind(t.get<std::string>()));
    }
  }
  if (doc.contains("duration")) c.env.duration = doc["duration"].get<double>();
  if (doc.contains("obstacles")) c.env.obstacles = doc["obstacles"].get<bool>();
  if (doc.contains("pick_index")) c.env.pick_index = doc["pick_index"].get<int>();
  if (doc.contains("predictor")) {
    const auto& p = doc["predictor"];
    check_keys(p, "predictor", {"window_k", "horizon_N", "recurrent_layers", "hidden_size",
                                "fc_hidden", "residual_output"});
    auto& pc = c.iterate.predictor;
    pc.window_k = p.value("window_k", pc.window_k);
    pc.horizon_N = p.value("horizon_N", pc.horizon_N);
    pc.recurrent_layers = p.value("recurrent_layers", pc.recurrent_layers);
    pc.hidden_size = p.value("hidden_size", pc.hidden_size);
    pc.fc_hidden = p.value("fc_hidden", pc.fc_hidden);
    pc.residual_output = p.value("residual_output", pc.residual_output);
  }
  if (doc.contains("train")) {
    const auto& t = doc["train"];
    check_keys(t, "train", {"epochs", "batch_size", "learning_rate"});
    auto& o = c.iterate.train;
    o.epochs = t.value("epochs", o.epochs);
    o.batch_size = t.value("batch_size", o.batch_size);
    o.learning_rate = t.value("learning_rate", o.learning_rate);
  }
  if (doc.contains("iterate")) {
    const auto& it = doc["iterate"];
    check_keys(it, "iterate", {"episodes_per_iteration", "holdout_fraction", "max_iters", "tol",
                               "horizons", "window_stride", "target"});
    auto& ic = c.iterate;
    ic.episodes_per_iteration = it.value("episodes_per_iteration", ic.episodes_per_iteration);
    ic.holdout_fraction = it.value("holdout_fraction", ic.holdout_fraction);
    ic.max_iters = it.value("max_iters", ic.max_iters);
    if (it.contains("tol")) {
      ic.tol = it["tol"].is_string() && it["tol"].get<std::string>() == "inf"
                   ? std::numeric_limits<double>::infinity()
                   : it["tol"].get<double>();
    }
    if (it.contains("horizons")) ic.horizons = it["horizons"].get<std::vector<int>>();
    ic.window_stride = it.value("window_stride", ic.window_stride);
    if (it.contains("target")) ic.target = parse_target(it["target"].get<std::string>());
    c.transfer.horizons = ic.horizons;
  }
  if (doc.contains("transfer")) {
    const auto& t = doc["transfer"];
    check_keys(t, "transfer", {"context", "gain_scale", "object_mass", "object_damping_scale",
                               "episodes", "eval_episodes", "epochs", "learning_rate",
                               "window_stride"});
    auto& ctx = c.transfer_context;
    if (t.contains("context")) ctx.kind = parse_transfer_kind(t["context"].get<std::string>());
    ctx.gain_scale = t.value("gain_scale", ctx.gain_scale);
    ctx.object_mass = t.value("object_mass", ctx.object_mass);
    ctx.object_damping_scale = t.value("object_damping_scale", ctx.object_damping_scale);
    auto& tc = c.transfer;
    tc.episodes = t.value("episodes", tc.episodes);
    tc.eval_episodes = t.value("eval_episodes", tc.eval_episodes);
    tc.train.epochs = t.value("epochs", tc.train.epochs);
    tc.train.learning_rate = t.value("learning_rate", tc.train.learning_rate);
    tc.window_stride = t.value("window_stride", tc.window_stride);
  }
  if (doc.contains("compare")) {
    check_keys(doc["compare"], "compare", {"episodes"});
    c.compare_episodes = doc["compare"].value("episodes", c.compare_episodes);
  }
  if (doc.contains("generate")) {
    const auto& g = doc["generate"];
    check_keys(g, "generate", {"episodes_per_kind", "controller"});
    c.generate.episodes_per_kind = g.value("episodes_per_kind", c.generate.episodes_per_kind);
    if (g.contains("controller")) {
      c.generate.controller = parse_controller_kind(g["controller"].get<std::string>());
    }
  }
  if (doc.contains("serve")) {
    const auto& s = doc["serve"];
    check_keys(s, "serve", {"host", "port", "rate", "prediction_interval", "models_dir",
                            "recordings_dir", "static_dir"});
    auto& sv = c.serve;
    sv.host = s.value("host", sv.host);
    sv.port = s.value("port", sv.port);
    sv.rate = s.value("rate", sv.rate);
    sv.prediction_interval = s.value("prediction_interval", sv.prediction_interval);
    if (s.contains("models_dir")) sv.models_dir = s["models_dir"].get<std::string>();
    if (s.contains("recordings_dir")) sv.recordings_dir = s["recordings_dir"].get<std::string>();
    if (s.contains("static_dir")) sv.static_dir = s["static_dir"].get<std::string>();
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("config: cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw InvalidArgument("config: " + path.string() + " is not valid JSON: " + e.what());
  }
  return apply_config(std::move(base), doc);
}

json to_json(const RunConfig& c) {
  const auto& w = c.env.weights;
  json traj = json::array();
  for (auto k : c.env.trajectories) traj.push_back(to_string(k));
  const auto& pc = c.iterate.predictor;
  return {
      {"profile", to_string(c.profile)},
      {"seed", c.seed},
      {"out", c.out.string()},
      {"plant",
       {{"dof", c.env.plant.dof()},
        {"mass", vec_json(c.env.plant.mass)},
        {"damping", vec_json(c.env.plant.damping)},
        {"stiffness", vec_json(c.env.plant.stiffness)},
        {"dt", c.env.plant.dt}}},
      {"game",
       {{"alpha", w.alpha},
        {"Q_hh", matrix_json(w.Q_hh)},
        {"Q_hr", matrix_json(w.Q_hr)},
        {"Q_rh", matrix_json(w.Q_rh)},
        {"Q_rr", matrix_json(w.Q_rr)},
        {"R_h", matrix_json(w.R_h)},
        {"R_r", matrix_json(w.R_r)}}},
      {"human",
       {{"id", c.env.human.id},
        {"stiffness", vec_json(c.env.human.stiffness)},
        {"damping", vec_json(c.env.human.damping)},
        {"detour_amplitude", c.env.human.detour_amplitude},
        {"detour_sigma", c.env.human.detour_sigma},
        {"force_cap", c.env.human.force_cap},
        {"noise_std", c.env.human.noise_std}}},
      {"trajectories", traj},
      {"duration", c.env.duration},
      {"obstacles", c.env.obstacles},
      {"obstacle_half_width", c.env.obstacle_half_width},
      {"pick_index", c.env.pick_index},
      {"predictor",
       {{"window_k", pc.window_k},
        {"horizon_N", pc.horizon_N},
        {"recurrent_layers", pc.recurrent_layers},
        {"hidden_size", pc.hidden_size},
        {"fc_hidden", pc.fc_hidden},
        {"residual_output", pc.residual_output}}},
      {"train",
       {{"epochs", c.iterate.train.epochs},
        {"batch_size", c.iterate.train.batch_size},
        {"learning_rate", c.iterate.train.learning_rate}}},
      {"iterate",
       {{"episodes_per_iteration", c.iterate.episodes_per_iteration},
        {"holdout_fraction", c.iterate.holdout_fraction},
        {"max_iters", c.iterate.max_iters},
        {"tol", std::isinf(c.iterate.tol) ? json("inf") : json(c.iterate.tol)},
        {"horizons", c.iterate.horizons},
        {"window_stride", c.iterate.window_stride},
        {"target", target_name(c.iterate.target)}}},
      {"transfer",
       {{"context", to_string(c.transfer_context.kind)},
        {"gain_scale", c.transfer_context.gain_scale},
        {"object_mass", c.transfer_context.object_mass},
        {"object_damping_scale", c.transfer_context.object_damping_scale},
        {"episodes", c.transfer.episodes},
        {"eval_episodes", c.transfer.eval_episodes},
        {"epochs", c.transfer.train.epochs},
        {"learning_rate", c.transfer.train.learning_rate},
        {"window_stride", c.transfer.window_stride}}},
      {"compare", {{"episodes", c.compare_episodes}}},
      {"generate",
       {{"episodes_per_kind", c.generate.episodes_per_kind},
        {"controller", to_string(c.generate.controller)}}},
      {"serve",
       {{"host", c.serve.host},
        {"port", c.serve.port},
        {"rate", c.serve.rate},
        {"prediction_interval", c.serve.prediction_interval},
        {"models_dir", c.serve.models_dir.string()},
        {"recordings_dir", c.serve.recordings_dir.string()},
        {"static_dir", c.serve.static_dir.string()}}},
  };
}

}  // namespace phri
