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


#ifndef PHRI_LIVE_SESSION_HPP
#define PHRI_LIVE_SESSION_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "phri/pipeline.hpp"
#include "phri/simulation.hpp"

namespace phri::live {

/// Message kinds of the session protocol.
inline constexpr const char* kMessageKinds[] = {
    "hello",     "configure",      "start", "force_input", "state_update", "prediction_update",
    "stop",      "record_toggle",  "export", "tl_request", "tl_result",    "error"};

bool is_message_kind(std::string_view kind);

/// {schema_version, kind, seq, payload}.
nlohmann::json envelope(const std::string& kind, std::uint64_t seq, nlohmann::json payload);

/// Splits a frame into newline-delimited messages and checks the envelope.
/// Throws FormatError on malformed text or a missing/unknown field.
std::vector<nlohmann::json> parse_messages(std::string_view text);

/// True for ids made of [A-Za-z0-9_.-] that do not start with a dot.
bool valid_id(std::string_view id);

/// Read-mostly store of model files `<dir>/<id>.jsonl`. Thread-safe.
class ModelStore {
 public:
  explicit ModelStore(std::filesystem::path dir);

  const std::filesystem::path& dir() const { return dir_; }
  std::vector<std::string> list() const;
  bool contains(const std::string& id) const;
  /// Throws InvalidArgument for an unknown id.
  std::shared_ptr<const PredictorModel> get(const std::string& id) const;
  /// Saves the model and returns `stem`, or `stem-2`, `stem-3`, ... if taken.
  std::string add(const std::string& stem, const PredictorModel& model);

 private:
  std::filesystem::path dir_;
  mutable std::mutex mutex_;
  mutable std::map<std::string, std::shared_ptr<const PredictorModel>> cache_;
};

struct SessionDefaults {
  Environment env;
  double rate = 125.0;
  int prediction_interval = 1;
  std::filesystem::path recordings_dir = "recordings";
  TransferConfig transfer;
  std::string human_id = "new_user";
};

enum class SessionStatus { kUnconfigured, kIdle, kRunning, kPaused, kDone };
std::string to_string(SessionStatus s);

/// Fine-tuning work detached from the live loop. `run` touches only data it
/// owns plus the thread-safe model store.
struct TransferJob {
  std::shared_ptr<const PredictorModel> base;
  std::string base_id;
  std::string human_id;
  std::vector<Episode> recordings;
  TransferConfig config;
  std::uint64_t seed = 0;
  bool hot_swap = true;
  ModelStore* store = nullptr;

  struct Result {
    std::string model_id;
    std::shared_ptr<const PredictorModel> model;
    EvalReport before;
    EvalReport after;
    std::size_t windows = 0;
    double seconds = 0.0;
    bool hot_swap = true;
    std::string error;
  };
  Result run() const;
};

struct HandleResult {
  std::vector<nlohmann::json> replies;
  std::optional<TransferJob> job;
};

/// One operator session. Not thread-safe: the owner serializes inbound
/// messages, ticks and transfer completions.
class Session {
 public:
  Session(std::string id, SessionDefaults defaults, ModelStore& store);

  const std::string& id() const { return id_; }
  SessionStatus status() const { return status_; }
  double rate() const { return rate_; }
  bool recording() const { return recording_; }
  std::size_t recorded() const { return buffer_.records.size(); }
  const ClosedLoop* loop() const { return loop_.get(); }
  const Vec& held_force() const { return force_; }

  HandleResult handle(const nlohmann::json& message);

  /// One plant step when running: a state_update, a prediction_update on
  /// refresh steps, and a final stop message when the trajectory ends.
  std::vector<nlohmann::json> tick();

  nlohmann::json finish_transfer(const TransferJob::Result& result);

  /// Client went away: pause and keep the buffer.
  void disconnect();

  /// Writes the recording buffer, if any, and returns the written path.
  std::optional<std::filesystem::path> flush();

  /// Builds the Episode under construction (meta plus records so far).
  const Episode& buffer() const { return buffer_; }

 private:
  nlohmann::json make(const std::string& kind, nlohmann::json payload);
  nlohmann::json error(const std::string& reason, const std::string& in_reply_to);

  nlohmann::json on_hello(const nlohmann::json& payload);
  nlohmann::json on_configure(const nlohmann::json& payload);
  nlohmann::json on_start();
  nlohmann::json on_force(const nlohmann::json& payload);
  nlohmann::json on_stop();
  nlohmann::json on_record(const nlohmann::json& payload);
  nlohmann::json on_export();
  HandleResult on_tl_request(const nlohmann::json& payload);

  std::filesystem::path write_recording();

  class SwappablePredictor;

  std::string id_;
  SessionDefaults defaults_;
  ModelStore* store_;
  std::uint64_t seq_ = 0;
  SessionStatus status_ = SessionStatus::kUnconfigured;
  double rate_;
  int prediction_interval_;
  std::string human_id_;
  std::string model_id_;
  std::shared_ptr<SwappablePredictor> predictor_;
  std::unique_ptr<ClosedLoop> loop_;
  std::optional<Obstacle> obstacle_;
  HumanModel human_;
  Vec force_;
  bool recording_ = false;
  Episode buffer_;
  int exports_ = 0;
  int tl_requests_ = 0;
  bool tl_running_ = false;
};

}  // namespace phri::live

#endif  // PHRI_LIVE_SESSION_HPP
