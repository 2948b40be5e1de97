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


#include "phri/live/session.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <functional>

#include "phri/episode_io.hpp"

namespace phri::live {

namespace fs = std::filesystem;
using nlohmann::json;

bool is_message_kind(std::string_view kind) {
  return std::find(std::begin(kMessageKinds), std::end(kMessageKinds), kind) !=
         std::end(kMessageKinds);
}

json envelope(const std::string& kind, std::uint64_t seq, json payload) {
  return {{"schema_version", kSchemaVersion},
          {"kind", kind},
          {"seq", seq},
          {"payload", std::move(payload)}};
}

std::vector<json> parse_messages(std::string_view text) {
  std::vector<json> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    json msg = json::parse(line, nullptr, false);
    if (msg.is_discarded() || !msg.is_object()) {
      throw FormatError("message is not a JSON object");
    }
    if (!msg.contains("schema_version") || !msg["schema_version"].is_number_integer()) {
      throw FormatError("message lacks schema_version");
    }
    if (msg["schema_version"].get<int>() != kSchemaVersion) {
      throw FormatError("unsupported schema_version " + msg["schema_version"].dump() +
                        " (expected " + std::to_string(kSchemaVersion) + ")");
    }
    if (!msg.contains("kind") || !msg["kind"].is_string()) throw FormatError("message lacks kind");
    if (!is_message_kind(msg["kind"].get<std::string>())) {
      throw FormatError("unknown message kind '" + msg["kind"].get<std::string>() + "'");
    }
    if (!msg.contains("payload")) msg["payload"] = json::object();
    if (!msg["payload"].is_object()) throw FormatError("payload must be an object");
    out.push_back(std::move(msg));
  }
  return out;
}

bool valid_id(std::string_view id) {
  if (id.empty() || id.front() == '.' || id.size() > 128) return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
  });
}

// ---------------------------------------------------------------------------

ModelStore::ModelStore(fs::path dir) : dir_(std::move(dir)) {}

std::vector<std::string> ModelStore::list() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> ids;
  std::error_code ec;
  if (!fs::is_directory(dir_, ec)) return ids;
  for (const auto& entry : fs::directory_iterator(dir_, ec)) {
    const auto& p = entry.path();
    if (entry.is_regular_file() && p.extension() == ".jsonl") ids.push_back(p.stem().string());
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

bool ModelStore::contains(const std::string& id) const {
  if (!valid_id(id)) return false;
  std::lock_guard lock(mutex_);
  return cache_.count(id) || fs::is_regular_file(dir_ / (id + ".jsonl"));
}

std::shared_ptr<const PredictorModel> ModelStore::get(const std::string& id) const {
  if (!valid_id(id)) throw InvalidArgument("invalid model id '" + id + "'");
  std::lock_guard lock(mutex_);
  if (auto it = cache_.find(id); it != cache_.end()) return it->second;
  const fs::path path = dir_ / (id + ".jsonl");
  if (!fs::is_regular_file(path)) throw InvalidArgument("unknown model id '" + id + "'");
  auto model = std::make_shared<const PredictorModel>(load_model(path));
  cache_.emplace(id, model);
  return model;
}

std::string ModelStore::add(const std::string& stem, const PredictorModel& model) {
  if (!valid_id(stem)) throw InvalidArgument("invalid model id '" + stem + "'");
  std::lock_guard lock(mutex_);
  fs::create_directories(dir_);
  std::string id = stem;
  for (int n = 2; cache_.count(id) || fs::exists(dir_ / (id + ".jsonl")); ++n) {
    id = stem + "-" + std::to_string(n);
  }
  save_model(model, dir_ / (id + ".jsonl"));
  cache_.emplace(id, std::make_shared<const PredictorModel>(model));
  return id;
}

// ---------------------------------------------------------------------------

std::string to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::kUnconfigured: return "unconfigured";
    case SessionStatus::kIdle: return "idle";
    case SessionStatus::kRunning: return "running";
    case SessionStatus::kPaused: return "paused";
    case SessionStatus::kDone: return "done";
  }
  return "unknown";
}

namespace {

json horizon_list(const EvalReport& r) {
  json out = json::array();
  for (const auto& h : r.horizons) {
    out.push_back({{"horizon", h.horizon}, {"e_rms", h.e_rms}, {"e_max", h.e_max}});
  }
  return out;
}

json vec_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vec vec_from(const json& j, const std::string& name) {
  if (!j.is_array()) throw InvalidArgument("'" + name + "' must be an array of numbers");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw InvalidArgument("'" + name + "' must be an array of numbers");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

}  // namespace

TransferJob::Result TransferJob::run() const {
  Result r;
  r.hot_swap = hot_swap;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    std::vector<int> horizons;
    for (int h : config.horizons) {
      if (h <= base->config().horizon_N) horizons.push_back(h);
    }
    if (horizons.empty()) horizons.push_back(base->config().horizon_N);
    Dataset ds = build_dataset(recordings, base->config(), 1);
    r.windows = ds.windows.size();
    r.before = evaluate_offline(*base, ds.episodes, horizons, base_id, seed);
    TrainResult tr = transfer_learn(*base, ds, config.train, seed);
    r.model_id = store->add(base_id + "-tl-" + human_id, tr.model);
    r.after = evaluate_offline(tr.model, ds.episodes, horizons, r.model_id, seed);
    r.model = store->get(r.model_id);
  } catch (const std::exception& e) {
    r.error = e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

// Lets a running loop switch models without rebuilding its history.
class Session::SwappablePredictor final : public IntentPredictor {
 public:
  SwappablePredictor(std::shared_ptr<const PredictorModel> model, std::string id)
      : model_(std::move(model)), id_(std::move(id)) {}
  int window_length() const override { return model_->config().window_k; }
  int horizon() const override { return model_->config().horizon_N; }
  Mat predict(const Mat& window, double) const override { return forward(*model_, window); }
  std::string id() const override { return id_; }
  const std::shared_ptr<const PredictorModel>& model() const { return model_; }
  void swap(std::shared_ptr<const PredictorModel> model, std::string id) {
    model_ = std::move(model);
    id_ = std::move(id);
  }

 private:
  std::shared_ptr<const PredictorModel> model_;
  std::string id_;
};

Session::Session(std::string id, SessionDefaults defaults, ModelStore& store)
    : id_(std::move(id)),
      defaults_(std::move(defaults)),
      store_(&store),
      rate_(defaults_.rate),
      prediction_interval_(defaults_.prediction_interval),
      human_id_(defaults_.human_id) {
  if (!(rate_ > 0.0)) throw InvalidArgument("session: rate must be > 0");
}

json Session::make(const std::string& kind, json payload) {
  return envelope(kind, ++seq_, std::move(payload));
}

json Session::error(const std::string& reason, const std::string& in_reply_to) {
  return make("error", {{"reason", reason}, {"in_reply_to", in_reply_to}});
}

HandleResult Session::handle(const json& message) {
  HandleResult out;
  const std::string kind = message.value("kind", std::string());
  const json payload = message.value("payload", json::object());
  try {
    if (kind == "hello") {
      out.replies.push_back(on_hello(payload));
    } else if (kind == "configure") {
      out.replies.push_back(on_configure(payload));
    } else if (kind == "start") {
      out.replies.push_back(on_start());
    } else if (kind == "force_input") {
      json r = on_force(payload);
      if (!r.is_null()) out.replies.push_back(std::move(r));
    } else if (kind == "stop") {
      out.replies.push_back(on_stop());
    } else if (kind == "record_toggle") {
      out.replies.push_back(on_record(payload));
    } else if (kind == "export") {
      out.replies.push_back(on_export());
    } else if (kind == "tl_request") {
      out = on_tl_request(payload);
    } else {
      out.replies.push_back(error("message kind '" + kind + "' is server-to-client only", kind));
    }
  } catch (const std::exception& e) {
    out.replies.push_back(error(e.what(), kind));
  }
  return out;
}

json Session::on_hello(const json&) {
  json controllers = {"MG", "IMP", "GT"};
  json trajectories = {"linear", "curved", "sinusoidal", "eval"};
  return make("hello", {{"server", "phri"},
                        {"version", kVersion},
                        {"session_id", id_},
                        {"status", to_string(status_)},
                        {"controllers", controllers},
                        {"trajectories", trajectories},
                        {"models", store_->list()},
                        {"rate", rate_},
                        {"force_cap", defaults_.env.human.force_cap}});
}

json Session::on_configure(const json& p) {
  static const char* keys[] = {"trajectory", "controller",  "model_id", "alpha",
                               "rate",       "human_id",    "obstacle", "prediction_interval",
                               "duration"};
  for (const auto& [key, value] : p.items()) {
    if (std::find_if(std::begin(keys), std::end(keys), [&](const char* k) { return key == k; }) ==
        std::end(keys)) {
      throw InvalidArgument("configure: unknown field '" + key + "'");
    }
  }
  if (tl_running_) throw InvalidArgument("configure: a transfer request is still running");
  const Environment& env = defaults_.env;
  const ControllerKind kind = parse_controller_kind(p.value("controller", std::string("GT")));
  TrajectorySpec spec = TrajectorySpec::defaults(
      parse_trajectory_kind(p.value("trajectory", std::string("linear"))), env.plant.dof());
  spec.duration = p.value("duration", env.duration);
  spec.validate();
  const double rate = p.value("rate", defaults_.rate);
  if (!(rate > 0.0) || !std::isfinite(rate)) throw InvalidArgument("configure: rate must be > 0");
  const int interval = p.value("prediction_interval", defaults_.prediction_interval);
  if (interval < 1) throw InvalidArgument("configure: prediction_interval must be >= 1");
  const std::string human_id = p.value("human_id", defaults_.human_id);
  if (!valid_id(human_id)) throw InvalidArgument("configure: invalid human_id '" + human_id + "'");

  std::shared_ptr<SwappablePredictor> predictor;
  std::string model_id;
  if (p.contains("model_id") && !p["model_id"].is_null()) {
    model_id = p["model_id"].get<std::string>();
    predictor = std::make_shared<SwappablePredictor>(store_->get(model_id), model_id);
    if (predictor->model()->config().dof != env.plant.dof()) {
      throw InvalidArgument("configure: model '" + model_id + "' has a different dof");
    }
  }

  std::optional<Obstacle> obstacle;
  const json ob = p.value("obstacle", json(true));
  if (ob.is_boolean()) {
    if (ob.get<bool>()) obstacle = place_obstacle(spec, 0.5, 1, env.obstacle_half_width);
  } else if (ob.is_object()) {
    obstacle = place_obstacle(spec, ob.value("arc_fraction", 0.5), ob.value("side", 1),
                              ob.value("half_width", env.obstacle_half_width));
  } else {
    throw InvalidArgument("configure: obstacle must be a boolean or an object");
  }

  PlantParams plant = env.plant;
  plant.dt = 1.0 / rate;
  ControllerSetup setup;
  setup.kind = kind;
  setup.pick_index = env.pick_index;
  if (kind == ControllerKind::kGT) {
    GameWeights w = env.weights;
    if (p.contains("alpha")) w.alpha = p["alpha"].get<double>();
    w.validate();
    setup.game = std::make_shared<const GameController>(plant, w);
    if (predictor) setup.pick_index = std::min(setup.pick_index, predictor->horizon());
  }
  auto loop = std::make_unique<ClosedLoop>(plant, spec, setup, predictor.get());

  // Commit only after everything validated.
  flush();
  loop_ = std::move(loop);
  predictor_ = std::move(predictor);
  model_id_ = model_id;
  obstacle_ = obstacle;
  rate_ = rate;
  prediction_interval_ = interval;
  human_id_ = human_id;
  human_ = env.human;
  human_.id = human_id;
  force_ = Vec::Zero(plant.dof());
  recording_ = false;
  buffer_ = Episode{};
  status_ = SessionStatus::kIdle;

  json obstacle_json = obstacle_ ? to_json(*obstacle_) : json(nullptr);
  return make("configure", {{"session_id", id_},
                            {"status", to_string(status_)},
                            {"controller", to_string(kind)},
                            {"trajectory", to_string(spec.kind)},
                            {"model_id", model_id_.empty() ? json(nullptr) : json(model_id_)},
                            {"human_id", human_id_},
                            {"rate", rate_},
                            {"dt", plant.dt},
                            {"dof", plant.dof()},
                            {"duration", spec.duration},
                            {"steps", step_count(spec.duration, plant.dt)},
                            {"horizon", predictor_ ? predictor_->horizon() : 0},
                            {"force_cap", human_.force_cap},
                            {"obstacle", obstacle_json},
                            {"x", vec_json(loop_->state().x)}});
}

json Session::on_start() {
  if (status_ == SessionStatus::kUnconfigured) throw InvalidArgument("start: configure first");
  if (status_ == SessionStatus::kDone) {
    throw InvalidArgument("start: trajectory finished; configure a new run");
  }
  status_ = SessionStatus::kRunning;
  return make("start", {{"status", to_string(status_)}, {"t", loop_->state().t}});
}

json Session::on_force(const json& p) {
  if (!loop_) throw InvalidArgument("force_input: configure first");
  if (!p.contains("f")) throw InvalidArgument("force_input: missing 'f'");
  const Vec f = vec_from(p["f"], "f");
  if (f.size() != loop_->plant().dof()) {
    throw InvalidArgument("force_input: 'f' must have " + std::to_string(loop_->plant().dof()) +
                          " entries");
  }
  if (!f.allFinite()) throw InvalidArgument("force_input: 'f' must be finite");
  if (f.norm() > human_.force_cap * (1.0 + 1e-12)) {
    throw InvalidArgument("force_input: |f| exceeds the force cap of " +
                          std::to_string(human_.force_cap) + " N");
  }
  force_ = f;
  return json(nullptr);
}

json Session::on_stop() {
  if (status_ == SessionStatus::kRunning) status_ = SessionStatus::kPaused;
  return make("stop", {{"status", to_string(status_)},
                       {"t", loop_ ? loop_->state().t : 0.0},
                       {"recorded", buffer_.records.size()}});
}

json Session::on_record(const json& p) {
  if (!loop_) throw InvalidArgument("record_toggle: configure first");
  const bool on = p.contains("on") ? p["on"].get<bool>() : !recording_;
  if (on && buffer_.records.empty()) {
    buffer_.meta.plant = defaults_.env.plant;
    buffer_.meta.plant.dt = loop_->dt();
    buffer_.meta.trajectory = loop_->trajectory();
    buffer_.meta.obstacle = obstacle_;
    buffer_.meta.human = human_;
    buffer_.meta.controller = to_string(loop_->controller().kind);
    buffer_.meta.model_id = model_id_;
    buffer_.meta.seed = 0;
  }
  recording_ = on;
  return make("record_toggle", {{"recording", recording_}, {"recorded", buffer_.records.size()}});
}

fs::path Session::write_recording() {
  fs::create_directories(defaults_.recordings_dir);
  fs::path path;
  do {
    path = defaults_.recordings_dir /
           (id_ + "-" + human_id_ + "-" + std::to_string(++exports_) + ".jsonl");
  } while (fs::exists(path));
  write_episode(buffer_, path);
  return path;
}

json Session::on_export() {
  if (buffer_.records.empty()) throw InvalidArgument("export: recording buffer is empty");
  const std::size_t n = buffer_.records.size();
  const fs::path path = write_recording();
  buffer_.records.clear();
  return make("export", {{"recording_id", path.stem().string()},
                         {"path", path.string()},
                         {"records", n},
                         {"human_id", human_id_},
                         {"model_id", model_id_}});
}

HandleResult Session::on_tl_request(const json& p) {
  HandleResult out;
  if (tl_running_) throw InvalidArgument("tl_request: a transfer request is already running");
  if (!predictor_) throw InvalidArgument("tl_request: the session has no model to adapt");
  const auto& cfg = predictor_->model()->config();
  std::vector<Episode> recordings;
  std::error_code ec;
  if (fs::is_directory(defaults_.recordings_dir, ec)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(defaults_.recordings_dir)) {
      if (e.is_regular_file() && e.path().extension() == ".jsonl") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      Episode ep = read_episode(f);
      if (ep.meta.human.id == human_id_ && ep.dof() == cfg.dof) {
        recordings.push_back(std::move(ep));
      }
    }
  }
  if (recordings.empty()) {
    throw InvalidArgument("tl_request: no exported recording for human '" + human_id_ + "'");
  }
  std::size_t windows = 0;
  for (const auto& ep : recordings) windows += window_count(ep.size(), cfg.window_k, cfg.horizon_N);
  if (windows == 0) {
    const double dt = recordings.front().meta.plant.dt;
    throw InvalidArgument("tl_request: recordings are shorter than k + N = " +
                          std::to_string(cfg.window_k + cfg.horizon_N) +
                          " steps; record at least " +
                          std::to_string((cfg.window_k + cfg.horizon_N) * dt) + " s");
  }
  TransferJob job;
  job.base = predictor_->model();
  job.base_id = model_id_;
  job.human_id = human_id_;
  job.recordings = std::move(recordings);
  job.config = defaults_.transfer;
  if (p.contains("epochs")) {
    job.config.train.epochs = p["epochs"].get<int>();
    if (job.config.train.epochs < 1) throw InvalidArgument("tl_request: epochs must be >= 1");
  }
  job.seed = derive_seed(std::hash<std::string>{}(id_), 202, ++tl_requests_);
  job.hot_swap = p.value("hot_swap", true);
  job.store = store_;
  tl_running_ = true;
  out.job = std::move(job);
  return out;
}

json Session::finish_transfer(const TransferJob::Result& r) {
  tl_running_ = false;
  if (!r.error.empty()) return error("transfer failed: " + r.error, "tl_request");
  bool swapped = false;
  if (r.hot_swap && predictor_ && r.model) {
    predictor_->swap(r.model, r.model_id);
    model_id_ = r.model_id;
    swapped = true;
  }
  return make("tl_result", {{"model_id", r.model_id},
                            {"hot_swapped", swapped},
                            {"windows", r.windows},
                            {"seconds", r.seconds},
                            {"pre", horizon_list(r.before)},
                            {"post", horizon_list(r.after)}});
}

std::vector<json> Session::tick() {
  std::vector<json> out;
  if (status_ != SessionStatus::kRunning) return out;
  const std::size_t total = step_count(loop_->trajectory().duration, loop_->dt());
  const double t = loop_->state().t;
  const Vec intent = human_intent(loop_->trajectory(), obstacle_, human_, t);
  const EpisodeRecord rec = loop_->step(force_, intent);
  if (recording_) buffer_.records.push_back(rec);
  out.push_back(make("state_update", {{"t", rec.t},
                                      {"step", loop_->step_index() - 1},
                                      {"x", vec_json(rec.x)},
                                      {"v", vec_json(rec.v)},
                                      {"u_h", vec_json(rec.u_h)},
                                      {"u_r", vec_json(rec.u_r)},
                                      {"x_ref_r", vec_json(rec.x_ref_r)},
                                      {"obstacle", obstacle_ ? to_json(*obstacle_) : json(nullptr)}}));
  const Mat& pred = loop_->last_prediction();
  if (pred.size() > 0 && (loop_->step_index() - 1) % prediction_interval_ == 0) {
    json positions = json::array();
    for (Eigen::Index r = 0; r < pred.rows(); ++r) positions.push_back(vec_json(pred.row(r).transpose()));
    out.push_back(make("prediction_update",
                       {{"t", rec.t}, {"model_id", model_id_}, {"positions", positions}}));
  }
  if (loop_->step_index() >= total) {
    status_ = SessionStatus::kDone;
    out.push_back(make("stop", {{"status", to_string(status_)},
                                {"t", loop_->state().t},
                                {"recorded", buffer_.records.size()},
                                {"reason", "trajectory complete"}}));
  }
  return out;
}

void Session::disconnect() {
  if (status_ == SessionStatus::kRunning) status_ = SessionStatus::kPaused;
}

std::optional<fs::path> Session::flush() {
  if (buffer_.records.empty()) return std::nullopt;
  fs::path path = write_recording();
  buffer_.records.clear();
  return path;
}

}  // namespace phri::live
