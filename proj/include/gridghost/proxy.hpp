#pragma once

// In-path Modbus/TCP rewriting proxy. One channel per PLC, each a pair of
// relay threads (HMI->PLC, PLC->HMI). Every frame of every channel goes
// through AttackEngine under one lock, so a stage change made by one channel
// is seen by all channels before their next frame.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <deque>
#include <iostream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridghost/capture.hpp"
#include "gridghost/clock.hpp"
#include "gridghost/iaml.hpp"
#include "gridghost/modbus.hpp"
#include "gridghost/net.hpp"
#include "gridghost/plc.hpp"

namespace gridghost::proxy {

inline constexpr std::size_t kTidRetention = 64;

struct Window {
  double start = 0;
  double end = 0;
  bool contains(double t) const { return t >= start && t <= end; }
};

struct EngineOptions {
  bool half_duplex = false;
  std::optional<std::vector<Window>> windows;  // nullopt: always active
  std::size_t tid_retention = kTidRetention;
};

/// Per-PLC state shared by the two relay directions of one channel.
class ChannelState {
 public:
  ChannelState(iaml::PlcRef plc, std::vector<std::size_t> bound, std::size_t retention)
      : plc_(std::move(plc)), bound_(std::move(bound)), retention_(retention) {}

  ChannelState(const ChannelState&) = delete;
  ChannelState& operator=(const ChannelState&) = delete;

  const iaml::PlcRef& plc() const noexcept { return plc_; }
  const std::vector<std::size_t>& bound_rules() const noexcept { return bound_; }
  bool attacked() const noexcept { return !bound_.empty(); }

  std::size_t armed() const {
    std::lock_guard lock(mutex_);
    return armed_.size();
  }

  std::atomic<std::size_t> frames_in_query{0};
  std::atomic<std::size_t> frames_in_response{0};
  std::atomic<std::size_t> rewrites_query{0};
  std::atomic<std::size_t> rewrites_response{0};
  std::atomic<std::size_t> faults{0};
  std::atomic<std::size_t> evicted{0};

 private:
  friend class AttackEngine;

  void arm(std::uint16_t tid, std::size_t rule) {
    std::lock_guard lock(mutex_);
    auto it = std::find_if(armed_.begin(), armed_.end(), [&](const auto& e) { return e.first == tid; });
    if (it != armed_.end()) armed_.erase(it);
    if (armed_.size() >= retention_) {
      armed_.pop_front();
      ++evicted;
    }
    armed_.emplace_back(tid, rule);
  }

  std::optional<std::size_t> take(std::uint16_t tid) {
    std::lock_guard lock(mutex_);
    auto it = std::find_if(armed_.begin(), armed_.end(), [&](const auto& e) { return e.first == tid; });
    if (it == armed_.end()) return std::nullopt;
    auto rule = it->second;
    armed_.erase(it);
    return rule;
  }

  iaml::PlcRef plc_;
  std::vector<std::size_t> bound_;
  std::size_t retention_;
  mutable std::mutex mutex_;
  std::deque<std::pair<std::uint16_t, std::size_t>> armed_;
};

struct Processed {
  modbus::Frame frame;
  double t = 0;
  bool rewritten = false;
};

class AttackEngine {
 public:
  AttackEngine(std::vector<iaml::AttackRule> rules, EngineOptions options, const ScenarioClock* clock = nullptr)
      : rules_(std::move(rules)), options_(std::move(options)), clock_(clock) {
    if (!clock_) {
      own_clock_ = std::make_unique<ScenarioClock>(1.0);
      clock_ = own_clock_.get();
    }
  }

  const std::vector<iaml::AttackRule>& rules() const noexcept { return rules_; }
  const EngineOptions& options() const noexcept { return options_; }
  const ScenarioClock& clock() const noexcept { return *clock_; }

  /// Rules whose PLC_IP names this PLC, plus the rules without PLC_IP.
  std::unique_ptr<ChannelState> make_channel(const iaml::PlcRef& plc) const {
    std::vector<std::size_t> bound;
    for (std::size_t i = 0; i < rules_.size(); ++i) {
      const auto& ip = rules_[i].query.plc_ip;
      if (!ip || *ip == plc.ip || *ip == plc.endpoint) bound.push_back(i);
    }
    return std::make_unique<ChannelState>(plc, std::move(bound), options_.tid_retention);
  }

  bool active(double t) const {
    if (!options_.windows) return true;
    return std::any_of(options_.windows->begin(), options_.windows->end(), [&](const Window& w) { return w.contains(t); });
  }

  /// HMI->PLC frame; the timestamp is taken under the engine lock.
  Processed on_request(ChannelState& ch, const modbus::Frame& frame) {
    std::lock_guard lock(mutex_);
    return request_locked(ch, frame, clock_->now());
  }
  Processed on_request(ChannelState& ch, const modbus::Frame& frame, double now) {
    std::lock_guard lock(mutex_);
    return request_locked(ch, frame, now);
  }

  /// PLC->HMI frame.
  Processed on_response(ChannelState& ch, const modbus::Frame& frame) {
    std::lock_guard lock(mutex_);
    return response_locked(ch, frame, clock_->now());
  }
  Processed on_response(ChannelState& ch, const modbus::Frame& frame, double now) {
    std::lock_guard lock(mutex_);
    return response_locked(ch, frame, now);
  }

  iaml::StageState stages() const {
    std::lock_guard lock(mutex_);
    return stages_;
  }

  std::vector<std::string> faults() const {
    std::lock_guard lock(mutex_);
    return faults_;
  }

  /// Stage transitions in the order they happened: (t, global stage after).
  std::vector<std::pair<double, int>> stage_log() const {
    std::lock_guard lock(mutex_);
    return stage_log_;
  }

 private:
  Processed request_locked(ChannelState& ch, const modbus::Frame& frame, double now) {
    ++ch.frames_in_query;
    Processed out{frame, now, false};
    if (ch.bound_rules().empty() || !active(now)) return out;
    const auto meta = iaml::describe(frame, iaml::PacketType::request, ch.plc());
    const iaml::StageState before = stages_;
    if (!options_.half_duplex) {
      for (auto idx : ch.bound_rules()) {
        const auto& rule = rules_[idx];
        if (rule.arms_on_request() && iaml::match(rule, meta, before)) {
          ch.arm(frame.header.tid, idx);
          break;
        }
      }
    }
    for (auto idx : ch.bound_rules()) {
      const auto& rule = rules_[idx];
      if (rule.packet_to_change != iaml::PacketType::request || !iaml::match(rule, meta, before)) continue;
      rewrite(ch, rule, out, ch.rewrites_query);
      break;
    }
    return out;
  }

  Processed response_locked(ChannelState& ch, const modbus::Frame& frame, double now) {
    ++ch.frames_in_response;
    Processed out{frame, now, false};
    if (options_.half_duplex || ch.bound_rules().empty()) return out;
    if (auto idx = ch.take(frame.header.tid)) {
      rewrite(ch, rules_[*idx], out, ch.rewrites_response);
      return out;
    }
    if (!active(now)) return out;
    const auto meta = iaml::describe(frame, iaml::PacketType::response, ch.plc());
    for (auto idx : ch.bound_rules()) {
      const auto& rule = rules_[idx];
      if (rule.packet_to_change != iaml::PacketType::response || !iaml::match(rule, meta, stages_)) continue;
      rewrite(ch, rule, out, ch.rewrites_response);
      break;
    }
    return out;
  }

  // Fails open: on a rule error the original frame goes out and stages stay.
  void rewrite(ChannelState& ch, const iaml::AttackRule& rule, Processed& out, std::atomic<std::size_t>& counter) {
    try {
      auto r = iaml::apply(rule, out.frame, stages_, ch.plc().key);
      out.rewritten = r.frame != out.frame;
      if (r.stages.global_stage != stages_.global_stage) stage_log_.emplace_back(out.t, r.stages.global_stage);
      out.frame = std::move(r.frame);
      stages_ = std::move(r.stages);
      if (out.rewritten) ++counter;
    } catch (const std::exception& e) {
      ++ch.faults;
      std::string msg = ch.plc().key + " rule " + std::to_string(rule.id) + ": " + e.what();
      std::cerr << "[attack-proxy] tool fault: " << msg << "\n";
      faults_.push_back(std::move(msg));
    }
  }

  std::vector<iaml::AttackRule> rules_;
  EngineOptions options_;
  const ScenarioClock* clock_;
  std::unique_ptr<ScenarioClock> own_clock_;
  mutable std::mutex mutex_;
  iaml::StageState stages_;
  std::vector<std::string> faults_;
  std::vector<std::pair<double, int>> stage_log_;
};

struct Taps {
  capture::CaptureSink* hmi = nullptr;
  capture::CaptureSink* plc = nullptr;
};

struct RetryPolicy {
  int attempts = 6;
  std::chrono::milliseconds initial{50};
  std::chrono::milliseconds connect_timeout{500};
};

/// Listener for one PLC plus the relays of its current session.
class ProxyChannel {
 public:
  ProxyChannel(AttackEngine& engine, const plc::PlcConfig& identity, const plc::PlcConfig& upstream,
               const std::string& listen_host, std::uint16_t listen_port, Taps taps, RetryPolicy retry)
      : engine_(engine),
        rtu_(identity.rtu),
        upstream_(upstream),
        state_(engine.make_channel(iaml::PlcRef{identity.rtu, identity.ip, identity.endpoint()})),
        listener_(listen_host, listen_port),
        taps_(taps),
        retry_(retry) {}

  ~ProxyChannel() { stop(); }

  void start() {
    accept_thread_ = std::jthread([this](std::stop_token st) { accept_loop(st); });
  }

  void stop() {
    if (accept_thread_.joinable()) {
      accept_thread_.request_stop();
      accept_thread_.join();
    }
    end_session();
  }

  const std::string& rtu() const noexcept { return rtu_; }
  std::uint16_t listen_port() const noexcept { return listener_.port(); }
  const ChannelState& state() const noexcept { return *state_; }

  nlohmann::json status() const {
    const auto& s = *state_;
    nlohmann::json bound = nlohmann::json::array();
    for (auto i : s.bound_rules()) bound.push_back(engine_.rules()[i].id);
    return {{"rtu", rtu_},
            {"listen_port", listen_port()},
            {"upstream", upstream_.endpoint()},
            {"attacked", s.attacked()},
            {"bound_rules", bound},
            {"connected", connected_.load()},
            {"upstream_failures", upstream_failures_.load()},
            {"refused", refused_.load()},
            {"frames_query", s.frames_in_query.load()},
            {"frames_response", s.frames_in_response.load()},
            {"rewrites_query", s.rewrites_query.load()},
            {"rewrites_response", s.rewrites_response.load()},
            {"faults", s.faults.load()},
            {"armed", s.armed()},
            {"evicted", s.evicted.load()},
            {"passthrough_streams", passthrough_.load()},
            {"last_error", last_error()}};
  }

 private:
  std::string last_error() const {
    std::lock_guard lock(error_mutex_);
    return last_error_;
  }
  void set_error(std::string e) {
    std::lock_guard lock(error_mutex_);
    last_error_ = std::move(e);
  }

  void accept_loop(std::stop_token st) {
    while (!st.stop_requested()) {
      auto client = listener_.accept(std::chrono::milliseconds(50));
      if (!client) {
        if (session_done_.load()) end_session();
        continue;
      }
      if (connected_.load() && !session_done_.load()) {
        ++refused_;
        client->close();
        continue;
      }
      end_session();
      auto upstream = connect_upstream(st);
      if (!upstream) {
        client->close();
        continue;
      }
      begin_session(std::move(*client), std::move(*upstream));
    }
  }

  std::optional<net::Socket> connect_upstream(std::stop_token st) {
    auto delay = retry_.initial;
    for (int i = 0; i < retry_.attempts && !st.stop_requested(); ++i) {
      try {
        return net::connect_to(upstream_.host, upstream_.port, retry_.connect_timeout);
      } catch (const std::exception& e) {
        ++upstream_failures_;
        set_error(std::string("upstream ") + upstream_.endpoint() + ": " + e.what());
        std::this_thread::sleep_for(delay);
        delay *= 2;
      }
    }
    return std::nullopt;
  }

  void begin_session(net::Socket client, net::Socket upstream) {
    client_ = std::make_shared<net::Socket>(std::move(client));
    server_ = std::make_shared<net::Socket>(std::move(upstream));
    session_done_ = false;
    connected_ = true;
    c2s_ = std::jthread([this, c = client_, s = server_](std::stop_token st) { relay(*c, *s, true, st); });
    s2c_ = std::jthread([this, c = client_, s = server_](std::stop_token st) { relay(*s, *c, false, st); });
  }

  void end_session() {
    for (auto* t : {&c2s_, &s2c_}) {
      if (t->joinable()) {
        t->request_stop();
        t->join();
      }
    }
    client_.reset();
    server_.reset();
    connected_ = false;
    session_done_ = false;
  }

  void relay(const net::Socket& from, const net::Socket& to, bool query, std::stop_token st) {
    modbus::StreamDecoder decoder;
    std::vector<std::uint8_t> buf(4096);
    bool passthrough = false;
    try {
      while (!st.stop_requested()) {
        auto n = from.recv_some(buf, std::chrono::milliseconds(50));
        if (!n) continue;
        if (*n == 0) break;
        std::span<const std::uint8_t> chunk(buf.data(), *n);
        if (passthrough) {
          to.send_all(chunk);
          continue;
        }
        for (const auto& frame : decoder.feed(chunk)) forward(frame, to, query);
        if (decoder.error()) {
          // Not Modbus/TCP as far as we can tell: stop parsing, relay raw.
          passthrough = true;
          ++passthrough_;
          set_error(rtu_ + ": " + decoder.error()->what());
          to.send_all(decoder.take_pending());
        }
      }
    } catch (const std::exception& e) {
      set_error(rtu_ + ": " + e.what());
    }
    from.shutdown();
    to.shutdown();
    session_done_ = true;
  }

  void forward(const modbus::Frame& frame, const net::Socket& to, bool query) {
    using capture::Dir;
    using capture::Segment;
    auto p = query ? engine_.on_request(*state_, frame) : engine_.on_response(*state_, frame);
    const Dir dir = query ? Dir::query : Dir::response;
    const auto& hmi_side = query ? frame : p.frame;
    const auto& plc_side = query ? p.frame : frame;
    if (taps_.hmi) taps_.hmi->append(capture::make_record(hmi_side, dir, Segment::hmi, rtu_, p.t));
    if (taps_.plc) taps_.plc->append(capture::make_record(plc_side, dir, Segment::plc, rtu_, p.t));
    to.send_all(modbus::encode_frame(p.frame));
  }

  AttackEngine& engine_;
  std::string rtu_;
  plc::PlcConfig upstream_;
  std::unique_ptr<ChannelState> state_;
  net::TcpListener listener_;
  Taps taps_;
  RetryPolicy retry_;
  std::shared_ptr<net::Socket> client_;
  std::shared_ptr<net::Socket> server_;
  std::atomic<bool> connected_{false};
  std::atomic<bool> session_done_{false};
  std::atomic<std::size_t> refused_{0};
  std::atomic<std::size_t> upstream_failures_{0};
  std::atomic<std::size_t> passthrough_{0};
  mutable std::mutex error_mutex_;
  std::string last_error_;
  std::jthread c2s_;
  std::jthread s2c_;
  std::jthread accept_thread_;
};

struct DispatcherConfig {
  std::vector<plc::PlcConfig> identities;  // as named by attack rules
  std::vector<plc::PlcConfig> upstreams;   // where to connect, same order
  std::string listen_host = "127.0.0.1";
  std::optional<std::uint16_t> listen_base;  // nullopt: ephemeral ports
  Taps taps;
  RetryPolicy retry;
};

/// One channel per PLC; channels without bound rules relay verbatim.
class Dispatcher {
 public:
  Dispatcher(AttackEngine& engine, DispatcherConfig config) : engine_(engine) {
    if (config.identities.size() != config.upstreams.size()) {
      throw std::invalid_argument("identities and upstreams differ in length");
    }
    for (std::size_t i = 0; i < config.identities.size(); ++i) {
      const auto& id = config.identities[i];
      std::uint16_t port = 0;
      if (config.listen_base) {
        port = static_cast<std::uint16_t>(*config.listen_base + plc::rtu_index(id.rtu, static_cast<int>(i) + 1));
      }
      channels_.push_back(std::make_unique<ProxyChannel>(engine, id, config.upstreams[i], config.listen_host, port,
                                                         config.taps, config.retry));
    }
  }

  ~Dispatcher() { stop(); }

  void start() {
    for (auto& c : channels_) c->start();
  }
  void stop() {
    for (auto& c : channels_) c->stop();
  }

  std::size_t channel_count() const noexcept { return channels_.size(); }
  std::size_t attacked_count() const {
    return static_cast<std::size_t>(
        std::count_if(channels_.begin(), channels_.end(), [](const auto& c) { return c->state().attacked(); }));
  }

  const ProxyChannel& channel(const std::string& rtu) const {
    for (const auto& c : channels_)
      if (c->rtu() == rtu) return *c;
    throw grid::UnknownRtu(rtu);
  }

  std::uint16_t listen_port(const std::string& rtu) const { return channel(rtu).listen_port(); }

  nlohmann::json status() const {
    const auto stages = engine_.stages();
    nlohmann::json local = nlohmann::json::object();
    for (const auto& [k, v] : stages.local_stage) local[k] = v;
    nlohmann::json channels = nlohmann::json::array();
    for (const auto& c : channels_) channels.push_back(c->status());
    return {{"t", engine_.clock().now()},
            {"half_duplex", engine_.options().half_duplex},
            {"active", engine_.active(engine_.clock().now())},
            {"rules", engine_.rules().size()},
            {"global_stage", stages.global_stage},
            {"local_stage", local},
            {"faults", engine_.faults()},
            {"channels", channels}};
  }

 private:
  AttackEngine& engine_;
  std::vector<std::unique_ptr<ProxyChannel>> channels_;
};

}  // namespace gridghost::proxy
