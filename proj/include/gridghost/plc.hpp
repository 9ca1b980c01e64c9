#pragma once

// Simulated switchgear PLCs. Each is a single-connection Modbus/TCP server
// whose registers mirror the grid snapshot at the time a request is served.

#include <algorithm>
#include <array>
#include <atomic>
#include <charconv>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "gridghost/grid.hpp"
#include "gridghost/modbus.hpp"
#include "gridghost/net.hpp"

namespace gridghost::plc {

inline constexpr std::uint16_t kBreakerRegister = 1;
inline constexpr std::uint16_t kCurrentRegister = 130;
inline constexpr std::uint16_t kVoltageRegister = 131;
inline constexpr std::uint16_t kSpareRegister = 132;
inline constexpr std::uint16_t kDiagnosticsBase = 200;
inline constexpr std::uint16_t kRegisterCount = 256;
inline constexpr std::uint16_t kBreakerCoil = 0;
inline constexpr std::uint16_t kDefaultPortBase = 15020;

struct PlcConfig {
  std::string rtu;
  std::uint8_t unit = 1;
  std::string ip;                 // identity used by attack rules
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  std::string endpoint() const { return host + ":" + std::to_string(port); }
};

/// Numeric suffix of an RTU id ("RTU_07" -> 7), or `fallback`.
inline int rtu_index(const std::string& rtu, int fallback) {
  auto pos = rtu.find_last_not_of("0123456789");
  if (pos == std::string::npos || pos + 1 == rtu.size()) return fallback;
  int v = fallback;
  std::from_chars(rtu.data() + pos + 1, rtu.data() + rtu.size(), v);
  return v;
}

/// Reads the `plcs:` section of a topology file; PLCs not listed get
/// unit 1, ip 10.0.0.N and port 15020 + N.
inline std::vector<PlcConfig> parse_fleet(const YAML::Node& root, const grid::Topology& topology) {
  std::vector<PlcConfig> out;
  const auto rtus = topology.rtus();
  for (std::size_t i = 0; i < rtus.size(); ++i) {
    PlcConfig c;
    c.rtu = rtus[i];
    int n = rtu_index(c.rtu, static_cast<int>(i) + 1);
    c.ip = "10.0.0." + std::to_string(n);
    c.port = static_cast<std::uint16_t>(kDefaultPortBase + n);
    out.push_back(c);
  }
  if (!root || !root["plcs"]) return out;
  for (const auto& node : root["plcs"]) {
    const auto rtu = node["rtu"].as<std::string>();
    auto it = std::find_if(out.begin(), out.end(), [&](const PlcConfig& c) { return c.rtu == rtu; });
    if (it == out.end()) throw grid::UnknownRtu(rtu);
    if (node["unit"]) it->unit = static_cast<std::uint8_t>(node["unit"].as<int>());
    if (node["ip"]) it->ip = node["ip"].as<std::string>();
    if (node["host"]) it->host = node["host"].as<std::string>();
    if (node["port"]) it->port = static_cast<std::uint16_t>(node["port"].as<int>());
  }
  return out;
}

class RegisterFile {
 public:
  explicit RegisterFile(std::uint8_t unit = 1) {
    regs_[kDiagnosticsBase] = unit;
    regs_[kDiagnosticsBase + 1] = 130;  // controller model
    regs_[kDiagnosticsBase + 2] = 0x0302;
    regs_[kDiagnosticsBase + 3] = 0;
  }

  void refresh(const grid::RtuReading& reading) {
    coil0_ = reading.closed;
    regs_[kBreakerRegister] = reading.closed ? 1 : 0;
    regs_[kCurrentRegister] = static_cast<std::uint16_t>(reading.current_centiamps);
    regs_[kVoltageRegister] = static_cast<std::uint16_t>(reading.voltage_centikv);
  }

  bool in_range(std::uint32_t start, std::uint32_t count) const { return start + count <= kRegisterCount; }
  std::uint16_t get(std::uint16_t address) const { return regs_.at(address); }
  void set(std::uint16_t address, std::uint16_t value) { regs_.at(address) = value; }
  bool coil0() const noexcept { return coil0_; }
  void set_coil0(bool on) noexcept {
    coil0_ = on;
    regs_[kBreakerRegister] = on ? 1 : 0;
  }

 private:
  std::array<std::uint16_t, kRegisterCount> regs_{};
  bool coil0_ = false;
};

/// Applies a breaker command; throws grid::LoopError to refuse it.
using SwitchActuator = std::function<void(bool closed)>;

/// Answers one request against `regs`. Write-coil requests are echoed after
/// the actuator accepts them.
inline modbus::Frame serve(const modbus::Frame& request, RegisterFile& regs, const SwitchActuator& actuate) {
  using namespace modbus;
  const auto tid = request.header.tid;
  const auto unit = request.header.unit_id;
  auto fail = [&](std::uint8_t code) { return make_exception(tid, unit, request.function, code); };
  switch (request.function) {
    case kReadHoldingRegisters: {
      ReadRequest r;
      try {
        r = parse_read_request(request.payload);
      } catch (const PduError&) {
        return fail(kIllegalDataValue);
      }
      if (!regs.in_range(r.start_address, r.word_count)) return fail(kIllegalDataAddress);
      std::vector<std::uint16_t> values;
      for (std::uint32_t a = r.start_address; a < r.start_address + r.word_count; ++a)
        values.push_back(regs.get(static_cast<std::uint16_t>(a)));
      return make_read_response(tid, unit, std::move(values));
    }
    case kWriteSingleCoil: {
      WriteSingleCoil w;
      try {
        w = parse_write_coil(request.payload);
      } catch (const PduError&) {
        return fail(kIllegalDataValue);
      }
      if (w.coil_address != kBreakerCoil) return fail(kIllegalDataAddress);
      try {
        if (actuate) actuate(w.on());
      } catch (const grid::LoopError&) {
        return fail(kServerDeviceFailure);
      }
      regs.set_coil0(w.on());
      return request;
    }
    case kWriteSingleRegister: {
      WriteSingleRegister w;
      try {
        w = parse_write_register(request.payload);
      } catch (const PduError&) {
        return fail(kIllegalDataValue);
      }
      if (!regs.in_range(w.address, 1)) return fail(kIllegalDataAddress);
      regs.set(w.address, w.value);
      return request;
    }
    default:
      return fail(kIllegalFunction);
  }
}

/// One PLC bound to a switch of the shared grid.
class PlcDevice {
 public:
  PlcDevice(std::string rtu, std::uint8_t unit, grid::GridSim& grid)
      : rtu_(std::move(rtu)), unit_(unit), grid_(grid), regs_(unit) {
    grid_.snapshot()->at(rtu_);  // validates the id
  }

  const std::string& rtu() const noexcept { return rtu_; }

  modbus::Frame serve(const modbus::Frame& request) {
    std::lock_guard lock(mutex_);
    if (request.header.unit_id != unit_ && request.header.unit_id != 0xFF) {
      return modbus::make_exception(request.header.tid, request.header.unit_id, request.function,
                                    modbus::kGatewayTargetFailed);
    }
    regs_.refresh(grid_.snapshot()->at(rtu_));
    return plc::serve(request, regs_, [this](bool closed) { grid_.set_switch(rtu_, closed); });
  }

 private:
  std::string rtu_;
  std::uint8_t unit_;
  grid::GridSim& grid_;
  std::mutex mutex_;
  RegisterFile regs_;
};

/// At most one accepted connection at a time.
class ConnectionGate {
 public:
  bool try_accept() {
    bool expected = false;
    return active_.compare_exchange_strong(expected, true);
  }
  void release() { active_.store(false); }
  bool active() const { return active_.load(); }

 private:
  std::atomic<bool> active_{false};
};

class PlcServer {
 public:
  PlcServer(const PlcConfig& config, grid::GridSim& grid, std::uint16_t bind_port)
      : config_(config), device_(config.rtu, config.unit, grid), listener_(config.host, bind_port) {}

  ~PlcServer() { stop(); }

  void start() {
    accept_thread_ = std::jthread([this](std::stop_token st) { accept_loop(st); });
  }

  void stop() {
    if (accept_thread_.joinable()) {
      accept_thread_.request_stop();
      accept_thread_.join();
    }
    if (session_.joinable()) {
      session_.request_stop();
      session_.join();
    }
  }

  std::uint16_t port() const noexcept { return listener_.port(); }
  const PlcConfig& config() const noexcept { return config_; }
  std::size_t refused() const noexcept { return refused_.load(); }
  std::size_t served() const noexcept { return served_.load(); }

 private:
  void accept_loop(std::stop_token st) {
    while (!st.stop_requested()) {
      auto client = listener_.accept(std::chrono::milliseconds(50));
      if (!client) continue;
      if (!gate_.try_accept()) {
        ++refused_;
        client->close();
        continue;
      }
      if (session_.joinable()) session_.join();
      session_ = std::jthread([this, sock = std::move(*client)](std::stop_token sst) mutable {
        run_session(std::move(sock), sst);
        gate_.release();
      });
    }
  }

  void run_session(net::Socket sock, std::stop_token st) {
    modbus::StreamDecoder decoder;
    std::vector<std::uint8_t> buf(512);
    try {
      while (!st.stop_requested()) {
        auto n = sock.recv_some(buf, std::chrono::milliseconds(50));
        if (!n) continue;
        if (*n == 0) break;
        for (const auto& frame : decoder.feed(std::span(buf.data(), *n))) {
          auto reply = device_.serve(frame);
          ++served_;
          sock.send_all(modbus::encode_frame(reply));
        }
        if (decoder.error()) break;
      }
    } catch (const std::exception&) {
      // framing or socket error: drop the connection
    }
  }

  PlcConfig config_;
  PlcDevice device_;
  net::TcpListener listener_;
  ConnectionGate gate_;
  std::atomic<std::size_t> refused_{0};
  std::atomic<std::size_t> served_{0};
  std::jthread accept_thread_;
  std::jthread session_;
};

/// All PLCs of a topology. With `ephemeral_ports` each server binds port 0
/// and the chosen port is reported through `plcs()`.
class Fleet {
 public:
  Fleet(std::vector<PlcConfig> configs, grid::GridSim& grid, bool ephemeral_ports = false) {
    for (auto& c : configs) {
      auto server = std::make_unique<PlcServer>(c, grid, ephemeral_ports ? 0 : c.port);
      servers_.push_back(std::move(server));
    }
  }

  void start() {
    for (auto& s : servers_) s->start();
  }
  void stop() {
    for (auto& s : servers_) s->stop();
  }

  /// Configs with the ports actually bound.
  std::vector<PlcConfig> bound() const {
    std::vector<PlcConfig> out;
    for (const auto& s : servers_) {
      auto c = s->config();
      c.port = s->port();
      out.push_back(c);
    }
    return out;
  }

  const PlcServer& server(const std::string& rtu) const {
    for (const auto& s : servers_)
      if (s->config().rtu == rtu) return *s;
    throw grid::UnknownRtu(rtu);
  }

 private:
  std::vector<std::unique_ptr<PlcServer>> servers_;
};

}  // namespace gridghost::plc
