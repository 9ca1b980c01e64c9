#pragma once

// HTTP/WS interface of the HMI.
//
//   GET  /api/state    {"t":..,"seq":..,"rtus":[{"rtu","current_a","voltage_kv","breaker","staleness_s"}],"metrics":{..}}
//   POST /api/command  {"rtu":"RTU_01","action":"open"|"close","origin":"human"|"script"}
//                      200 with the command result, 400 {"error":..} when invalid
//   WS   /api/stream   {"type":"snapshot",...} then {"type":"delta"|"ack","seq":..} in order
//
// Currents are amperes, voltages kilovolts; null means no value.

#include <list>
#include <memory>
#include <mutex>
#include <stop_token>
#include <string>
#include <thread>

#include <nlohmann/json.hpp>

#include "gridghost/hmi.hpp"
#include "gridghost/http.hpp"

namespace gridghost::hmi {

inline http::Response json_response(int status, const nlohmann::json& j) { return {status, j.dump(), "application/json"}; }

/// Parses and validates a command body against the known RTUs.
inline OperatorCommand parse_command(const std::string& body, const ViewStore& store) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const std::exception&) {
    throw ValidationError("body is not JSON");
  }
  if (!j.is_object()) throw ValidationError("body must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() != "rtu" && it.key() != "action" && it.key() != "origin")
      throw ValidationError("unknown field '" + it.key() + "'");
  }
  if (!j.contains("rtu") || !j["rtu"].is_string()) throw ValidationError("missing string field 'rtu'");
  if (!j.contains("action") || !j["action"].is_string()) throw ValidationError("missing string field 'action'");
  OperatorCommand cmd;
  cmd.rtu = j["rtu"].get<std::string>();
  if (!store.has(cmd.rtu)) throw ValidationError("unknown rtu '" + cmd.rtu + "'");
  auto action = parse_action(j["action"].get<std::string>());
  if (!action) throw ValidationError("action must be 'open' or 'close'");
  cmd.action = *action;
  if (j.contains("origin")) {
    if (!j["origin"].is_string()) throw ValidationError("origin must be a string");
    cmd.origin = j["origin"].get<std::string>();
    if (cmd.origin != "human" && cmd.origin != "script") throw ValidationError("origin must be 'human' or 'script'");
  }
  return cmd;
}

class HmiApi {
 public:
  HmiApi(HmiService& service, const std::string& host, std::uint16_t port)
      : service_(service),
        server_(host, port, [this](const http::Request& r) { return route(r); },
                {{"/api/stream", [this](std::shared_ptr<http::StreamSink> sink) { return open_stream(std::move(sink)); }}}) {}

  ~HmiApi() { stop(); }

  void start() { server_.start(); }

  void stop() {
    server_.stop();
    std::lock_guard lock(mutex_);
    pumps_.clear();  // jthreads stop and join
  }

  std::uint16_t port() const noexcept { return server_.port(); }

  http::Response route(const http::Request& r) {
    const auto path = r.target.substr(0, r.target.find('?'));
    if (path == "/api/state") {
      if (r.method != "GET") return json_response(405, {{"error", "use GET"}});
      auto s = service_.store().snapshot();
      s["metrics"] = service_.metrics();
      return json_response(200, s);
    }
    if (path == "/api/command") {
      if (r.method != "POST") return json_response(405, {{"error", "use POST"}});
      OperatorCommand cmd;
      try {
        cmd = parse_command(r.body, service_.store());
      } catch (const ValidationError& e) {
        return json_response(400, {{"error", e.what()}});
      }
      return json_response(200, to_json(service_.issue(std::move(cmd))));
    }
    return json_response(404, {{"error", "not found"}});
  }

 private:
  std::function<void()> open_stream(std::shared_ptr<http::StreamSink> sink) {
    nlohmann::json snap;
    auto sub = service_.store().subscribe(&snap);
    snap["type"] = "snapshot";
    sink->send(snap.dump());
    std::lock_guard lock(mutex_);
    std::erase_if(pumps_, [](const Pump& p) { return p.done->load(); });
    auto done = std::make_shared<std::atomic<bool>>(false);
    pumps_.push_back(Pump{done, std::jthread([sub, sink, done](std::stop_token st) {
                            while (!st.stop_requested() && sink->open()) {
                              if (auto ev = sub->pop(std::chrono::milliseconds(50))) sink->send(std::move(*ev));
                            }
                            done->store(true);
                          })});
    auto& store = service_.store();
    return [&store, sub] { store.unsubscribe(sub); };
  }

  struct Pump {
    std::shared_ptr<std::atomic<bool>> done;
    std::jthread thread;
  };

  HmiService& service_;
  http::Server server_;
  std::mutex mutex_;
  std::list<Pump> pumps_;
};

}  // namespace gridghost::hmi
