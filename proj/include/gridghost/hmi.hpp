#pragma once

// Modbus master. Two polling loops (RTU_01..06 and the rest), each owning the
// connections of its PLCs; commands run on the loop that owns the target.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridghost/clock.hpp"
#include "gridghost/grid.hpp"
#include "gridghost/modbus.hpp"
#include "gridghost/net.hpp"
#include "gridghost/plc.hpp"

namespace gridghost::hmi {

enum class Breaker { open, closed, unknown };

inline const char* to_string(Breaker b) {
  switch (b) {
    case Breaker::open: return "open";
    case Breaker::closed: return "closed";
    default: return "unknown";
  }
}

/// Two-decimal rounding for de-scaled register values.
inline double descale(std::uint16_t v) { return std::round(static_cast<double>(v)) / 100.0; }

struct RtuView {
  std::string rtu;
  std::optional<std::uint16_t> current_raw;  // register #130 as polled
  std::optional<std::uint16_t> voltage_raw;  // register #131 as polled
  Breaker breaker = Breaker::unknown;
  std::optional<double> last_good;  // scenario time of the last complete poll

  std::optional<double> current_a() const {
    return current_raw ? std::optional<double>(descale(*current_raw)) : std::nullopt;
  }
  std::optional<double> voltage_kv() const {
    return voltage_raw ? std::optional<double>(descale(*voltage_raw)) : std::nullopt;
  }

  /// Equality of what the operator sees (staleness excluded).
  bool same_display(const RtuView& o) const {
    return current_raw == o.current_raw && voltage_raw == o.voltage_raw && breaker == o.breaker;
  }
};

inline nlohmann::json to_json(const RtuView& v, double now) {
  nlohmann::json j;
  j["rtu"] = v.rtu;
  j["current_a"] = v.current_a() ? nlohmann::json(*v.current_a()) : nlohmann::json(nullptr);
  j["voltage_kv"] = v.voltage_kv() ? nlohmann::json(*v.voltage_kv()) : nlohmann::json(nullptr);
  j["breaker"] = to_string(v.breaker);
  j["staleness_s"] = v.last_good ? nlohmann::json(std::max(0.0, now - *v.last_good)) : nlohmann::json(nullptr);
  return j;
}

enum class Action { open, close };

inline std::optional<Action> parse_action(const std::string& s) {
  if (s == "open") return Action::open;
  if (s == "close") return Action::close;
  return std::nullopt;
}

inline const char* to_string(Action a) { return a == Action::open ? "open" : "close"; }

struct OperatorCommand {
  std::string rtu;
  Action action = Action::open;
  std::string origin = "human";  // human | script
};

inline std::uint16_t coil_value(Action a) { return a == Action::close ? modbus::kCoilOn : modbus::kCoilOff; }

struct CommandResult {
  std::uint64_t id = 0;
  OperatorCommand command;
  double issued_at = 0;
  double completed_at = 0;
  bool confirmed = false;
  std::string reason;  // set when not confirmed
};

inline nlohmann::json to_json(const CommandResult& r) {
  nlohmann::json j{{"id", r.id},
                   {"rtu", r.command.rtu},
                   {"action", to_string(r.command.action)},
                   {"origin", r.command.origin},
                   {"issued_at", r.issued_at},
                   {"completed_at", r.completed_at},
                   {"status", r.confirmed ? "confirmed" : "failed"}};
  if (!r.confirmed) j["reason"] = r.reason;
  return j;
}

/// Ordered event queue for one stream subscriber.
class Subscription {
 public:
  explicit Subscription(std::size_t capacity = 4096) : capacity_(capacity) {}

  void push(std::string event) {
    {
      std::lock_guard lock(mutex_);
      if (queue_.size() >= capacity_) {
        queue_.pop_front();
        ++dropped_;
      }
      queue_.push_back(std::move(event));
    }
    cv_.notify_one();
  }

  std::optional<std::string> pop(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mutex_);
    if (!cv_.wait_for(lock, timeout, [&] { return !queue_.empty(); })) return std::nullopt;
    auto e = std::move(queue_.front());
    queue_.pop_front();
    return e;
  }

  std::size_t dropped() const {
    std::lock_guard lock(mutex_);
    return dropped_;
  }

 private:
  std::size_t capacity_;
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<std::string> queue_;
  std::size_t dropped_ = 0;
};

/// The operator's view. Writers are serialized by the store's lock; each
/// change is published to subscribers in order with a sequence number.
class ViewStore {
 public:
  ViewStore(const std::vector<std::string>& rtus, const ScenarioClock& clock) : clock_(clock) {
    for (const auto& r : rtus) {
      order_.push_back(r);
      views_[r].rtu = r;
    }
  }

  bool has(const std::string& rtu) const { return views_.count(rtu) != 0; }
  const std::vector<std::string>& rtus() const noexcept { return order_; }

  /// Merges one poll outcome. Returns true if the visible view changed.
  bool update(const RtuView& next, double t) {
    std::lock_guard lock(mutex_);
    auto& cur = views_.at(next.rtu);
    const bool changed = !cur.same_display(next);
    cur = next;
    nlohmann::json row = to_json(cur, t);
    row["t"] = t;
    log_.push_back(row);
    if (changed) {
      nlohmann::json ev{{"type", "delta"}, {"seq", ++seq_}, {"t", t}, {"view", to_json(cur, t)}};
      publish(ev);
    }
    return changed;
  }

  void record_command(const CommandResult& r) {
    std::lock_guard lock(mutex_);
    commands_.push_back(r);
    nlohmann::json ev{{"type", "ack"}, {"seq", ++seq_}, {"t", r.completed_at}, {"command", to_json(r)}};
    publish(ev);
  }

  RtuView view(const std::string& rtu) const {
    std::lock_guard lock(mutex_);
    return views_.at(rtu);
  }

  nlohmann::json snapshot() const {
    std::lock_guard lock(mutex_);
    return snapshot_locked();
  }

  /// Snapshot and subscription taken atomically so no delta is missed or
  /// duplicated.
  std::shared_ptr<Subscription> subscribe(nlohmann::json* snapshot_out = nullptr) {
    std::lock_guard lock(mutex_);
    auto sub = std::make_shared<Subscription>();
    subscribers_.push_back(sub);
    if (snapshot_out) *snapshot_out = snapshot_locked();
    return sub;
  }

  void unsubscribe(const std::shared_ptr<Subscription>& sub) {
    std::lock_guard lock(mutex_);
    std::erase_if(subscribers_, [&](const auto& w) {
      auto s = w.lock();
      return !s || s == sub;
    });
  }

  /// Every poll outcome, in order.
  std::vector<nlohmann::json> log() const {
    std::lock_guard lock(mutex_);
    return log_;
  }

  std::vector<CommandResult> commands() const {
    std::lock_guard lock(mutex_);
    return commands_;
  }

  std::uint64_t seq() const {
    std::lock_guard lock(mutex_);
    return seq_;
  }

 private:
  nlohmann::json snapshot_locked() const {
    const double now = clock_.now();
    nlohmann::json rtus = nlohmann::json::array();
    for (const auto& r : order_) rtus.push_back(to_json(views_.at(r), now));
    return {{"t", now}, {"seq", seq_}, {"rtus", rtus}};
  }

  void publish(const nlohmann::json& ev) {
    const auto text = ev.dump();
    for (auto it = subscribers_.begin(); it != subscribers_.end();) {
      if (auto s = it->lock()) {
        s->push(text);
        ++it;
      } else {
        it = subscribers_.erase(it);
      }
    }
  }

  const ScenarioClock& clock_;
  mutable std::mutex mutex_;
  std::vector<std::string> order_;
  std::map<std::string, RtuView> views_;
  std::vector<std::weak_ptr<Subscription>> subscribers_;
  std::vector<nlohmann::json> log_;
  std::vector<CommandResult> commands_;
  std::uint64_t seq_ = 0;
};

struct PollSpec {
  std::uint16_t start;
  std::uint16_t count;
};

/// The three reads issued to every PLC each cycle.
inline const std::vector<PollSpec>& default_polls() {
  static const std::vector<PollSpec> polls{
      {plc::kCurrentRegister, 2}, {plc::kBreakerRegister, 1}, {plc::kDiagnosticsBase, 4}};
  return polls;
}

struct HmiConfig {
  std::vector<plc::PlcConfig> targets;     // where to connect (PLC or proxy)
  std::vector<std::vector<std::string>> loops;  // empty: RTU_01..06 and the rest
  double poll_period = 0.5;  // scenario seconds
  double timeout = 1.0;      // scenario seconds
  std::uint16_t first_tid = 1;
};

/// Splits `rtus` into the two default polling loops.
inline std::vector<std::vector<std::string>> default_loops(const std::vector<std::string>& rtus) {
  std::vector<std::vector<std::string>> loops(2);
  for (const auto& r : rtus) loops[plc::rtu_index(r, 99) <= 6 ? 0 : 1].push_back(r);
  std::erase_if(loops, [](const auto& l) { return l.empty(); });
  return loops;
}

/// Master side of one PLC connection.
class Link {
 public:
  Link(plc::PlcConfig target, std::uint16_t first_tid) : target_(std::move(target)), next_tid_(first_tid) {}

  const plc::PlcConfig& target() const noexcept { return target_; }

  /// Sends `build(tid)` and waits for the frame with the same TID.
  /// Frames with another TID are discarded and counted.
  std::optional<modbus::Frame> transact(const std::function<modbus::Frame(std::uint16_t)>& build,
                                        std::chrono::milliseconds timeout) {
    if (!ensure_connected(timeout)) return std::nullopt;
    const std::uint16_t tid = next_tid_++;
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    try {
      sock_->send_all(modbus::encode_frame(build(tid)));
      std::vector<std::uint8_t> buf(512);
      for (;;) {
        while (!ready_.empty()) {
          auto f = std::move(ready_.front());
          ready_.pop_front();
          if (f.header.tid == tid) return f;
          ++protocol_errors_;
        }
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) {
          ++timeouts_;
          return std::nullopt;
        }
        auto n = sock_->recv_some(buf, left);
        if (!n) continue;
        if (*n == 0) throw net::NetError("connection closed");
        for (auto& f : decoder_.feed(std::span(buf.data(), *n))) ready_.push_back(std::move(f));
        if (decoder_.error()) throw net::NetError(decoder_.error()->what());
      }
    } catch (const std::exception&) {
      ++timeouts_;
      drop();
      return std::nullopt;
    }
  }

  std::size_t protocol_errors() const noexcept { return protocol_errors_.load(); }
  std::size_t timeouts() const noexcept { return timeouts_.load(); }
  bool connected() const noexcept { return sock_.has_value(); }

  void drop() {
    sock_.reset();
    decoder_ = {};
    ready_.clear();
  }

 private:
  bool ensure_connected(std::chrono::milliseconds timeout) {
    if (sock_) return true;
    try {
      sock_ = net::connect_to(target_.host, target_.port, timeout);
      return true;
    } catch (const std::exception&) {
      ++timeouts_;
      return false;
    }
  }

  plc::PlcConfig target_;
  std::uint16_t next_tid_;
  std::optional<net::Socket> sock_;
  modbus::StreamDecoder decoder_;
  std::deque<modbus::Frame> ready_;
  std::atomic<std::size_t> protocol_errors_{0};
  std::atomic<std::size_t> timeouts_{0};
};

class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class HmiService {
 public:
  HmiService(HmiConfig config, const ScenarioClock& clock)
      : config_(std::move(config)), clock_(clock), store_(rtu_list(config_.targets), clock) {
    if (config_.loops.empty()) config_.loops = default_loops(store_.rtus());
    for (std::size_t i = 0; i < config_.loops.size(); ++i) {
      auto loop = std::make_unique<Loop>();
      for (const auto& rtu : config_.loops[i]) {
        auto it = std::find_if(config_.targets.begin(), config_.targets.end(), [&](const auto& t) { return t.rtu == rtu; });
        if (it == config_.targets.end()) throw grid::UnknownRtu(rtu);
        loop->links.push_back(std::make_unique<Link>(*it, config_.first_tid));
        owner_[rtu] = i;
      }
      loops_.push_back(std::move(loop));
    }
  }

  ~HmiService() { stop(); }

  void start(double first_cycle_at = 0) {
    for (std::size_t i = 0; i < loops_.size(); ++i) {
      loops_[i]->thread = std::jthread([this, i, first_cycle_at](std::stop_token st) { run_loop(*loops_[i], st, first_cycle_at); });
    }
  }

  void stop() {
    for (auto& l : loops_) {
      if (l->thread.joinable()) {
        l->thread.request_stop();
        l->cv.notify_all();
        l->thread.join();
      }
    }
    for (auto& l : loops_) {
      std::lock_guard lock(l->mutex);
      for (auto& p : l->pending) p.promise.set_value(fail(p, "hmi stopped"));
      l->pending.clear();
    }
  }

  ViewStore& store() noexcept { return store_; }
  const ViewStore& store() const noexcept { return store_; }
  const HmiConfig& config() const noexcept { return config_; }

  /// Throws ValidationError for an unknown RTU; otherwise queues the write
  /// on the owning loop.
  std::future<CommandResult> submit(OperatorCommand cmd) {
    auto it = owner_.find(cmd.rtu);
    if (it == owner_.end()) throw ValidationError("unknown rtu '" + cmd.rtu + "'");
    Pending p;
    p.result.id = ++command_ids_;
    p.result.command = std::move(cmd);
    p.result.issued_at = clock_.now();
    auto fut = p.promise.get_future();
    auto& loop = *loops_[it->second];
    {
      std::lock_guard lock(loop.mutex);
      loop.pending.push_back(std::move(p));
    }
    loop.cv.notify_all();
    return fut;
  }

  /// Blocking form used by the API.
  CommandResult issue(OperatorCommand cmd) {
    auto fut = submit(std::move(cmd));
    return fut.get();
  }

  nlohmann::json metrics() const {
    std::size_t perr = 0, tmo = 0;
    for (const auto& l : loops_) {
      for (const auto& k : l->links) {
        perr += k->protocol_errors();
        tmo += k->timeouts();
      }
    }
    return {{"protocol_errors", perr}, {"timeouts", tmo}, {"cycles", cycles_.load()}};
  }

 private:
  struct Pending {
    CommandResult result;
    std::promise<CommandResult> promise;
  };

  struct Loop {
    std::vector<std::unique_ptr<Link>> links;
    std::mutex mutex;  // guards pending; links belong to the loop thread
    std::condition_variable_any cv;
    std::deque<Pending> pending;
    std::jthread thread;
  };

  static std::vector<std::string> rtu_list(const std::vector<plc::PlcConfig>& targets) {
    std::vector<std::string> out;
    for (const auto& t : targets) out.push_back(t.rtu);
    return out;
  }

  CommandResult fail(Pending& p, std::string reason) const {
    p.result.completed_at = clock_.now();
    p.result.confirmed = false;
    p.result.reason = std::move(reason);
    return p.result;
  }

  std::chrono::milliseconds timeout() const { return clock_.wall_span(config_.timeout); }

  void run_loop(Loop& loop, std::stop_token st, double first_cycle_at) {
    double next = first_cycle_at;
    while (!st.stop_requested()) {
      for (auto& link : loop.links) {
        drain_commands(loop);
        if (st.stop_requested()) return;
        poll(*link);
      }
      ++cycles_;
      next += config_.poll_period;
      if (next < clock_.now()) next = clock_.now();
      // Wake early for commands so they do not wait for the next cycle.
      for (;;) {
        std::unique_lock lock(loop.mutex);
        loop.cv.wait_until(lock, st, clock_.wall_at(next), [&] { return !loop.pending.empty(); });
        if (st.stop_requested()) return;
        if (loop.pending.empty()) break;
        lock.unlock();
        drain_commands(loop);
      }
    }
  }

  void drain_commands(Loop& loop) {
    for (;;) {
      Pending p;
      {
        std::lock_guard lock(loop.mutex);
        if (loop.pending.empty()) return;
        p = std::move(loop.pending.front());
        loop.pending.pop_front();
      }
      Link* link = nullptr;
      for (auto& l : loop.links)
        if (l->target().rtu == p.result.command.rtu) link = l.get();
      execute(*link, p);
    }
  }

  void execute(Link& link, Pending& p) {
    modbus::Frame sent;
    const bool on = p.result.command.action == Action::close;
    const auto unit = link.target().unit;
    auto reply = link.transact(
        [&](std::uint16_t tid) {
          sent = modbus::make_write_coil(tid, unit, plc::kBreakerCoil, on);
          return sent;
        },
        timeout());
    CommandResult r;
    if (!reply) {
      r = fail(p, "timeout");
    } else if (*reply != sent) {
      r = fail(p, reply->is_exception() ? "exception " + std::to_string(reply->payload.empty() ? 0 : reply->payload[0])
                                        : "echo mismatch");
    } else {
      p.result.completed_at = clock_.now();
      p.result.confirmed = true;
      r = p.result;
    }
    store_.record_command(r);
    p.promise.set_value(r);
  }

  void poll(Link& link) {
    const auto& target = link.target();
    RtuView v = store_.view(target.rtu);
    bool all_good = true;
    for (const auto& spec : default_polls()) {
      auto reply = link.transact(
          [&](std::uint16_t tid) { return modbus::make_read_request(tid, target.unit, spec.start, spec.count); },
          timeout());
      std::optional<modbus::ReadResponse> rr;
      if (reply && !reply->is_exception() && reply->function == modbus::kReadHoldingRegisters) {
        try {
          rr = modbus::parse_read_response(reply->payload);
        } catch (const modbus::PduError&) {
        }
      }
      if (rr && rr->values.size() != spec.count) rr.reset();
      if (!rr) all_good = false;
      if (spec.start == plc::kCurrentRegister) {
        v.current_raw = rr ? std::optional(rr->values[0]) : std::nullopt;
        v.voltage_raw = rr ? std::optional(rr->values[1]) : std::nullopt;
      } else if (spec.start == plc::kBreakerRegister) {
        v.breaker = !rr ? Breaker::unknown : rr->values[0] ? Breaker::closed : Breaker::open;
      }
    }
    const double t = clock_.now();
    if (all_good) v.last_good = t;
    store_.update(v, t);
  }

  HmiConfig config_;
  const ScenarioClock& clock_;
  ViewStore store_;
  std::vector<std::unique_ptr<Loop>> loops_;
  std::map<std::string, std::size_t> owner_;
  std::atomic<std::uint64_t> command_ids_{0};
  std::atomic<std::size_t> cycles_{0};
};

}  // namespace gridghost::hmi
