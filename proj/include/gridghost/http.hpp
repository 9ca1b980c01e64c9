#pragma once

// Small HTTP/1.1 + WebSocket server on Boost.Beast, and blocking clients for
// tools and tests. Handlers run on the server's worker threads and may block.

#include <chrono>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

namespace gridghost::http {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace bhttp = boost::beast::http;
namespace ws = boost::beast::websocket;
using tcp = asio::ip::tcp;

struct Request {
  std::string method;
  std::string target;
  std::string body;
};

struct Response {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

using Handler = std::function<Response(const Request&)>;

/// Connection handle passed to a stream route. `send` is thread-safe and
/// becomes a no-op once the peer is gone.
class StreamSink {
 public:
  virtual ~StreamSink() = default;
  virtual void send(std::string text) = 0;
  virtual bool open() const = 0;
};

/// Called once per accepted WebSocket; returns a callback run on close.
using StreamOpen = std::function<std::function<void()>(std::shared_ptr<StreamSink>)>;

namespace detail {

class WsSession : public StreamSink, public std::enable_shared_from_this<WsSession> {
 public:
  explicit WsSession(tcp::socket socket) : ws_(std::move(socket)) {}

  void run(bhttp::request<bhttp::string_body> req, StreamOpen on_open) {
    on_open_ = std::move(on_open);
    ws_.set_option(ws::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
      if (ec) return;
      self->open_ = true;
      self->on_close_ = self->on_open_(self);
      self->read_loop();
    });
  }

  void send(std::string text) override {
    asio::post(ws_.get_executor(), [self = shared_from_this(), text = std::move(text)]() mutable {
      if (!self->open_) return;
      self->queue_.push_back(std::move(text));
      if (self->queue_.size() == 1) self->write_next();
    });
  }

  bool open() const override { return open_; }

  void close() {
    asio::post(ws_.get_executor(), [self = shared_from_this()] {
      if (!self->open_) return;
      self->ws_.async_close(ws::close_code::going_away, [self](beast::error_code) { self->finish(); });
    });
  }

 private:
  void read_loop() {
    ws_.async_read(in_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return self->finish();
      self->in_.consume(self->in_.size());
      self->read_loop();
    });
  }

  void write_next() {
    ws_.text(true);
    ws_.async_write(asio::buffer(queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return self->finish();
      self->queue_.pop_front();
      if (!self->queue_.empty()) self->write_next();
    });
  }

  void finish() {
    if (!open_) return;
    open_ = false;
    queue_.clear();
    if (on_close_) std::exchange(on_close_, nullptr)();
  }

  ws::stream<tcp::socket> ws_;
  beast::flat_buffer in_;
  std::deque<std::string> queue_;
  StreamOpen on_open_;
  std::function<void()> on_close_;
  std::atomic<bool> open_{false};
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket socket, const Handler& handler, const std::map<std::string, StreamOpen>& streams,
              std::function<void(std::shared_ptr<WsSession>)> track)
      : stream_(std::move(socket)), handler_(handler), streams_(streams), track_(std::move(track)) {}

  void run() { read(); }

 private:
  void read() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(30));
    bhttp::async_read(stream_, buffer_, req_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return self->shutdown();
      self->handle();
    });
  }

  void handle() {
    const std::string target(req_.target());
    if (ws::is_upgrade(req_)) {
      auto it = streams_.find(target);
      if (it != streams_.end()) {
        stream_.expires_never();
        auto session = std::make_shared<WsSession>(stream_.release_socket());
        track_(session);
        session->run(std::move(req_), it->second);
        return;
      }
    }
    Response r;
    try {
      r = handler_(Request{std::string(req_.method_string()), target, req_.body()});
    } catch (const std::exception& e) {
      r = Response{500, std::string(R"({"error":"internal"})"), "application/json"};
    }
    auto res = std::make_shared<bhttp::response<bhttp::string_body>>(static_cast<bhttp::status>(r.status), req_.version());
    res->set(bhttp::field::content_type, r.content_type);
    res->set(bhttp::field::access_control_allow_origin, "*");
    res->keep_alive(req_.keep_alive());
    res->body() = std::move(r.body);
    res->prepare_payload();
    bhttp::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code ec, std::size_t) {
      if (ec || !res->keep_alive()) return self->shutdown();
      self->read();
    });
  }

  void shutdown() {
    beast::error_code ec;
    stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
  }

  beast::tcp_stream stream_;
  beast::flat_buffer buffer_;
  bhttp::request<bhttp::string_body> req_;
  const Handler& handler_;
  const std::map<std::string, StreamOpen>& streams_;
  std::function<void(std::shared_ptr<WsSession>)> track_;
};

}  // namespace detail

class Server {
 public:
  Server(std::string host, std::uint16_t port, Handler handler, std::map<std::string, StreamOpen> streams = {},
         int threads = 4)
      : handler_(std::move(handler)), streams_(std::move(streams)), acceptor_(ioc_), threads_(threads) {
    tcp::endpoint ep(asio::ip::make_address(host.empty() ? "0.0.0.0" : host), port);
    acceptor_.open(ep.protocol());
    acceptor_.set_option(asio::socket_base::reuse_address(true));
    acceptor_.bind(ep);
    acceptor_.listen();
    port_ = acceptor_.local_endpoint().port();
  }

  ~Server() { stop(); }

  void start() {
    accept();
    for (int i = 0; i < threads_; ++i) workers_.emplace_back([this] { ioc_.run(); });
  }

  void stop() {
    if (stopped_.exchange(true)) return;
    asio::post(ioc_, [this] {
      beast::error_code ec;
      acceptor_.close(ec);
    });
    {
      std::lock_guard lock(mutex_);
      for (auto& w : ws_sessions_)
        if (auto s = w.lock()) s->close();
    }
    // Give close handshakes a moment before tearing the loop down.
    auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(200);
    while (std::chrono::steady_clock::now() < deadline && any_ws_open())
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    ioc_.stop();
    for (auto& w : workers_)
      if (w.joinable()) w.join();
    workers_.clear();
  }

  std::uint16_t port() const noexcept { return port_; }

 private:
  bool any_ws_open() {
    std::lock_guard lock(mutex_);
    for (auto& w : ws_sessions_)
      if (auto s = w.lock(); s && s->open()) return true;
    return false;
  }

  void accept() {
    acceptor_.async_accept(asio::make_strand(ioc_), [this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      std::make_shared<detail::HttpSession>(std::move(socket), handler_, streams_, [this](std::shared_ptr<detail::WsSession> s) {
        std::lock_guard lock(mutex_);
        std::erase_if(ws_sessions_, [](const auto& w) { return w.expired(); });
        ws_sessions_.push_back(s);
      })->run();
      accept();
    });
  }

  Handler handler_;
  std::map<std::string, StreamOpen> streams_;
  asio::io_context ioc_;
  tcp::acceptor acceptor_;
  int threads_;
  std::uint16_t port_ = 0;
  std::vector<std::thread> workers_;
  std::mutex mutex_;
  std::vector<std::weak_ptr<detail::WsSession>> ws_sessions_;
  std::atomic<bool> stopped_{false};
};

struct ClientResponse {
  int status = 0;
  std::string body;
};

/// One blocking request on a fresh connection.
inline ClientResponse request(const std::string& host, std::uint16_t port, const std::string& method,
                              const std::string& target, const std::string& body = {},
                              std::chrono::milliseconds timeout = std::chrono::seconds(10)) {
  asio::io_context ioc;
  beast::tcp_stream stream(ioc);
  tcp::resolver resolver(ioc);
  stream.expires_after(timeout);
  stream.connect(resolver.resolve(host, std::to_string(port)));
  bhttp::request<bhttp::string_body> req(bhttp::string_to_verb(method), target, 11);
  req.set(bhttp::field::host, host);
  if (!body.empty()) {
    req.set(bhttp::field::content_type, "application/json");
    req.body() = body;
  }
  req.prepare_payload();
  bhttp::write(stream, req);
  beast::flat_buffer buffer;
  bhttp::response<bhttp::string_body> res;
  bhttp::read(stream, buffer, res);
  beast::error_code ec;
  stream.socket().shutdown(tcp::socket::shutdown_both, ec);
  return {static_cast<int>(res.result_int()), res.body()};
}

/// Blocking WebSocket reader with per-message timeouts.
class WsClient {
 public:
  WsClient(const std::string& host, std::uint16_t port, const std::string& target) : ws_(ioc_) {
    tcp::resolver resolver(ioc_);
    auto results = resolver.resolve(host, std::to_string(port));
    asio::connect(ws_.next_layer(), results.begin(), results.end());
    ws_.handshake(host + ":" + std::to_string(port), target);
  }

  ~WsClient() { close(); }

  /// Next text message, or nullopt on timeout or close.
  std::optional<std::string> read(std::chrono::milliseconds timeout) {
    if (closed_) return std::nullopt;
    std::optional<std::string> out;
    bool done = false;
    ws_.async_read(buffer_, [&](beast::error_code ec, std::size_t) {
      done = true;
      if (ec) {
        closed_ = true;
        return;
      }
      out = beast::buffers_to_string(buffer_.data());
      buffer_.consume(buffer_.size());
    });
    ioc_.restart();
    ioc_.run_for(timeout);
    if (!done) {
      // Abandon the pending read; the connection cannot be reused after this.
      beast::error_code ec;
      ws_.next_layer().cancel(ec);
      ioc_.restart();
      ioc_.run_for(std::chrono::milliseconds(100));
      closed_ = true;
    }
    return out;
  }

  void close() {
    if (closed_) return;
    closed_ = true;
    beast::error_code ec;
    ws_.next_layer().close(ec);
  }

 private:
  asio::io_context ioc_;
  ws::stream<tcp::socket> ws_;
  beast::flat_buffer buffer_;
  bool closed_ = false;
};

}  // namespace gridghost::http
