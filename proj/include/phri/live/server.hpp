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


#ifndef PHRI_LIVE_SERVER_HPP
#define PHRI_LIVE_SERVER_HPP

#include <filesystem>
#include <memory>
#include <string>

#include "phri/live/session.hpp"

namespace phri::live {

struct ServerOptions {
  std::string host = "127.0.0.1";
  unsigned short port = 8700;  // 0 picks a free port
  SessionDefaults defaults;
  std::filesystem::path models_dir = "models";
  std::filesystem::path static_dir;  // empty: no static files
  int threads = 2;
};

/// WebSocket session endpoint (any path, upgrade requests) plus HTTP
/// GET /health, /models, /recordings, /recordings/<id>[?format=csv] and
/// static files.
class Server {
 public:
  /// Binds immediately; throws Error when the address cannot be bound.
  explicit Server(ServerOptions options);
  ~Server();

  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  unsigned short port() const;
  const std::string& host() const;

  /// Serves until stop() or SIGINT/SIGTERM (when `handle_signals`).
  void run(bool handle_signals = false);

  /// Thread-safe. Flushes every session's recording buffer and closes.
  void stop();

  struct Impl;

 private:
  std::unique_ptr<Impl> impl_;
};

}  // namespace phri::live

#endif  // PHRI_LIVE_SERVER_HPP
