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


#include "phri/live/server.hpp"

#include <atomic>
#include <chrono>
#include <csignal>
#include <deque>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>
#include <vector>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "phri/episode_io.hpp"

namespace phri::live {

namespace fs = std::filesystem;
namespace net = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;
using nlohmann::json;

namespace {

std::string mime_type(const fs::path& p) {
  const std::string ext = p.extension().string();
  if (ext == ".html" || ext == ".htm") return "text/html";
  if (ext == ".js" || ext == ".mjs") return "application/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json") return "application/json";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".png") return "image/png";
  if (ext == ".ico") return "image/vnd.microsoft.icon";
  if (ext == ".map" || ext == ".txt") return "text/plain";
  return "application/octet-stream";
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

class WsConnection;

struct Server::Impl {
  explicit Impl(ServerOptions o)
      : options(std::move(o)), acceptor(ioc), store(options.models_dir) {}

  ServerOptions options;
  net::io_context ioc;
  tcp::acceptor acceptor;
  ModelStore store;
  net::thread_pool tl_pool{1};
  std::mutex mutex;
  std::vector<std::weak_ptr<WsConnection>> connections;
  std::atomic<std::uint64_t> next_session{0};
  std::atomic<bool> stopping{false};

  void accept();
  void shutdown();
  std::size_t live_sessions();
  http::response<http::string_body> respond(const http::request<http::string_body>& req);
};

// One WebSocket connection owns one Session. Every handler runs on the
// connection's strand, so the session sees messages and ticks serially.
class WsConnection : public std::enable_shared_from_this<WsConnection> {
 public:
  WsConnection(Server::Impl& server, tcp::socket&& socket)
      : server_(server),
        ws_(std::move(socket)),
        timer_(ws_.get_executor()),
        session_("s" + std::to_string(++server.next_session), server.options.defaults,
                 server.store) {}

  void run(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, beast::bind_front_handler(&WsConnection::on_accept, shared_from_this()));
  }

  void shutdown() {
    net::post(ws_.get_executor(), [self = shared_from_this()] {
      if (self->closed_) return;
      self->session_.disconnect();
      self->session_.flush();
      self->timer_.cancel();
      self->ws_.async_close(websocket::close_code::going_away, [self](beast::error_code) {});
    });
  }

  // Only after the io_context stopped.
  void final_flush() {
    session_.disconnect();
    session_.flush();
  }

  bool open() const { return !closed_; }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) return;
    {
      std::lock_guard lock(server_.mutex);
      server_.connections.push_back(weak_from_this());
    }
    ws_.text(true);
    read();
  }

  void read() {
    ws_.async_read(buffer_, beast::bind_front_handler(&WsConnection::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) {
      close();
      return;
    }
    const std::string text = beast::buffers_to_string(buffer_.data());
    buffer_.consume(buffer_.size());
    std::vector<json> messages;
    try {
      messages = parse_messages(text);
    } catch (const std::exception& e) {
      send(envelope("error", 0, {{"reason", e.what()}, {"in_reply_to", nullptr}}), true);
    }
    for (const auto& m : messages) {
      HandleResult r = session_.handle(m);
      for (auto& reply : r.replies) send(reply);
      if (r.job) launch(std::move(*r.job));
    }
    if (session_.status() == SessionStatus::kRunning && !looping_) start_loop();
    read();
  }

  void close() {
    if (closed_) return;
    closed_ = true;
    timer_.cancel();
    session_.disconnect();
    try {
      session_.flush();
    } catch (const std::exception& e) {
      std::cerr << "session " << session_.id() << ": flush failed: " << e.what() << "\n";
    }
  }

  void start_loop() {
    looping_ = true;
    next_ = std::chrono::steady_clock::now();
    wait();
  }

  std::chrono::steady_clock::duration period() const {
    return std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::duration<double>(1.0 / session_.rate()));
  }

  void wait() {
    timer_.expires_at(next_);
    timer_.async_wait(beast::bind_front_handler(&WsConnection::on_tick, shared_from_this()));
  }

  void on_tick(beast::error_code ec) {
    if (ec || closed_ || session_.status() != SessionStatus::kRunning) {
      looping_ = false;
      return;
    }
    constexpr int kMaxCatchUp = 8;
    int steps = 0;
    const auto now = std::chrono::steady_clock::now();
    while (next_ <= now && steps < kMaxCatchUp && session_.status() == SessionStatus::kRunning) {
      try {
        for (auto& m : session_.tick()) send(m);
      } catch (const std::exception& e) {
        session_.disconnect();
        send(envelope("error", 0, {{"reason", e.what()}, {"in_reply_to", "state_update"}}), true);
      }
      next_ += period();
      ++steps;
    }
    if (steps == kMaxCatchUp && next_ <= now) next_ = now + period();
    if (session_.status() != SessionStatus::kRunning) {
      looping_ = false;
      return;
    }
    wait();
  }

  void launch(TransferJob job) {
    net::post(server_.tl_pool, [self = shared_from_this(), job = std::move(job)] {
      TransferJob::Result r = job.run();
      net::post(self->ws_.get_executor(), [self, r = std::move(r)] {
        if (!self->closed_) self->send(self->session_.finish_transfer(r));
      });
    });
  }

  // Envelopes built outside the session (seq 0) mark transport errors.
  void send(const json& message, bool = false) {
    if (closed_) return;
    outbox_.push_back(message.dump());
    if (!writing_) write();
  }

  void write() {
    writing_ = true;
    ws_.async_write(net::buffer(outbox_.front()),
                    beast::bind_front_handler(&WsConnection::on_write, shared_from_this()));
  }

  void on_write(beast::error_code ec, std::size_t) {
    if (ec) {
      writing_ = false;
      close();
      return;
    }
    outbox_.pop_front();
    if (!outbox_.empty() && !closed_) {
      write();
    } else {
      writing_ = false;
    }
  }

  Server::Impl& server_;
  websocket::stream<beast::tcp_stream> ws_;
  net::steady_timer timer_;
  beast::flat_buffer buffer_;
  Session session_;
  std::deque<std::string> outbox_;
  bool writing_ = false;
  bool looping_ = false;
  bool closed_ = false;
  std::chrono::steady_clock::time_point next_;
};

class HttpConnection : public std::enable_shared_from_this<HttpConnection> {
 public:
  HttpConnection(Server::Impl& server, tcp::socket&& socket)
      : server_(server), stream_(std::move(socket)) {}

  void run() {
    net::dispatch(stream_.get_executor(),
                  beast::bind_front_handler(&HttpConnection::read, shared_from_this()));
  }

 private:
  void read() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_,
                     beast::bind_front_handler(&HttpConnection::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) {
      stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
      return;
    }
    if (websocket::is_upgrade(req_)) {
      stream_.expires_never();
      std::make_shared<WsConnection>(server_, stream_.release_socket())->run(std::move(req_));
      return;
    }
    res_ = std::make_shared<http::response<http::string_body>>(server_.respond(req_));
    http::async_write(stream_, *res_,
                      beast::bind_front_handler(&HttpConnection::on_write, shared_from_this(),
                                                res_->keep_alive()));
  }

  void on_write(bool keep_alive, beast::error_code ec, std::size_t) {
    if (ec || !keep_alive || server_.stopping) {
      stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
      return;
    }
    read();
  }

  Server::Impl& server_;
  beast::tcp_stream stream_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
  std::shared_ptr<http::response<http::string_body>> res_;
};

void Server::Impl::accept() {
  acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
    if (ec) {
      if (!acceptor.is_open()) return;
    } else {
      std::make_shared<HttpConnection>(*this, std::move(socket))->run();
    }
    if (acceptor.is_open()) accept();
  });
}

std::size_t Server::Impl::live_sessions() {
  std::lock_guard lock(mutex);
  std::size_t n = 0;
  for (const auto& w : connections) {
    if (auto c = w.lock(); c && c->open()) ++n;
  }
  return n;
}

void Server::Impl::shutdown() {
  stopping = true;
  beast::error_code ec;
  acceptor.close(ec);
  std::vector<std::shared_ptr<WsConnection>> live;
  {
    std::lock_guard lock(mutex);
    for (const auto& w : connections) {
      if (auto c = w.lock()) live.push_back(std::move(c));
    }
  }
  for (auto& c : live) c->shutdown();
  auto timer = std::make_shared<net::steady_timer>(ioc, std::chrono::milliseconds(500));
  timer->async_wait([this, timer](beast::error_code) { ioc.stop(); });
}

http::response<http::string_body> Server::Impl::respond(
    const http::request<http::string_body>& req) {
  auto reply = [&](http::status status, std::string body, const std::string& type) {
    http::response<http::string_body> res{status, req.version()};
    res.set(http::field::server, std::string("phri/") + kVersion);
    res.set(http::field::content_type, type);
    res.set(http::field::access_control_allow_origin, "*");
    res.keep_alive(req.keep_alive());
    res.body() = std::move(body);
    res.prepare_payload();
    return res;
  };
  auto json_reply = [&](http::status status, const json& j) {
    return reply(status, j.dump(), "application/json");
  };
  auto not_found = [&](const std::string& what) {
    return json_reply(http::status::not_found, {{"error", what + " not found"}});
  };

  if (req.method() != http::verb::get && req.method() != http::verb::head) {
    return json_reply(http::status::method_not_allowed, {{"error", "only GET is supported"}});
  }
  std::string target(req.target());
  std::string query;
  if (auto q = target.find('?'); q != std::string::npos) {
    query = target.substr(q + 1);
    target.resize(q);
  }

  try {
    if (target == "/health") {
      return json_reply(http::status::ok, {{"status", "ok"},
                                           {"version", kVersion},
                                           {"schema_version", kSchemaVersion},
                                           {"sessions", live_sessions()}});
    }
    if (target == "/models") {
      return json_reply(http::status::ok, {{"models", store.list()}});
    }
    const fs::path rec_dir = options.defaults.recordings_dir;
    if (target == "/recordings") {
      std::vector<std::string> ids;
      std::error_code ec;
      if (fs::is_directory(rec_dir, ec)) {
        for (const auto& e : fs::directory_iterator(rec_dir)) {
          if (e.is_regular_file() && e.path().extension() == ".jsonl") {
            ids.push_back(e.path().stem().string());
          }
        }
      }
      std::sort(ids.begin(), ids.end());
      return json_reply(http::status::ok, {{"recordings", ids}});
    }
    if (target.rfind("/recordings/", 0) == 0) {
      const std::string id = target.substr(12);
      const fs::path path = rec_dir / (id + ".jsonl");
      if (!valid_id(id) || !fs::is_regular_file(path)) return not_found("recording '" + id + "'");
      if (query == "format=csv") return reply(http::status::ok, episode_csv(read_episode(path)), "text/csv");
      if (query == "format=meta") return reply(http::status::ok, read_file(meta_path(path)), "application/json");
      return reply(http::status::ok, read_file(path), "application/x-ndjson");
    }
    if (!options.static_dir.empty()) {
      std::string rel = target == "/" ? "index.html" : target.substr(1);
      const fs::path p = fs::path(rel).lexically_normal();
      if (rel.empty() || p.is_absolute() || *p.begin() == "..") return not_found(target);
      const fs::path full = options.static_dir / p;
      if (fs::is_regular_file(full)) return reply(http::status::ok, read_file(full), mime_type(full));
    }
  } catch (const std::exception& e) {
    return json_reply(http::status::internal_server_error, {{"error", e.what()}});
  }
  return not_found(target);
}

Server::Server(ServerOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {
  const auto& o = impl_->options;
  try {
    tcp::resolver resolver(impl_->ioc);
    const auto results = resolver.resolve(o.host, std::to_string(o.port));
    const tcp::endpoint endpoint = results.begin()->endpoint();
    impl_->acceptor.open(endpoint.protocol());
    impl_->acceptor.set_option(net::socket_base::reuse_address(true));
    impl_->acceptor.bind(endpoint);
    impl_->acceptor.listen(net::socket_base::max_listen_connections);
  } catch (const boost::system::system_error& e) {
    throw Error("cannot bind " + o.host + ":" + std::to_string(o.port) + ": " + e.what());
  }
}

Server::~Server() = default;

unsigned short Server::port() const { return impl_->acceptor.local_endpoint().port(); }
const std::string& Server::host() const { return impl_->options.host; }

void Server::run(bool handle_signals) {
  std::optional<net::signal_set> signals;
  if (handle_signals) {
    signals.emplace(impl_->ioc, SIGINT, SIGTERM);
    signals->async_wait([this](beast::error_code ec, int) {
      if (!ec) impl_->shutdown();
    });
  }
  impl_->accept();
  const int n = std::max(1, impl_->options.threads);
  std::vector<std::thread> workers;
  for (int i = 1; i < n; ++i) workers.emplace_back([this] { impl_->ioc.run(); });
  impl_->ioc.run();
  for (auto& w : workers) w.join();
  std::vector<std::shared_ptr<WsConnection>> live;
  {
    std::lock_guard lock(impl_->mutex);
    for (const auto& w : impl_->connections) {
      if (auto c = w.lock()) live.push_back(std::move(c));
    }
  }
  for (auto& c : live) {
    try {
      c->final_flush();
    } catch (const std::exception& e) {
      std::cerr << "flush failed: " << e.what() << "\n";
    }
  }
}

void Server::stop() {
  net::post(impl_->ioc, [this] { impl_->shutdown(); });
}

}  // namespace phri::live
