#pragma once

// Scenario runner. Boots grid, PLC fleet, proxy and HMI on loopback with
// ephemeral ports, drives the scripted operator through the HMI API, and
// writes one directory of artifacts per run:
//
//   run.json           scenario, stage transitions, proxy status, metrics
//   hmi_capture.jsonl  HMI-side tap
//   plc_capture.jsonl  PLC-side tap
//   hmi_view.jsonl     every poll outcome as the operator saw it
//   grid_log.jsonl     true grid state, initial and after every change
//   commands.jsonl     operator command results
//   report.json        deception report

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>
#include <yaml-cpp/yaml.h>

#include "gridghost/capture.hpp"
#include "gridghost/clock.hpp"
#include "gridghost/grid.hpp"
#include "gridghost/hmi.hpp"
#include "gridghost/hmi_api.hpp"
#include "gridghost/http.hpp"
#include "gridghost/iaml.hpp"
#include "gridghost/plc.hpp"
#include "gridghost/proxy.hpp"

namespace gridghost::harness {

namespace fs = std::filesystem;

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct OperatorStep {
  double t = 0;
  std::string rtu;
  hmi::Action action = hmi::Action::open;
};

struct Scenario {
  std::string name = "scenario";
  std::optional<std::string> topology;  // path; built-in default if absent
  std::optional<std::string> iaml;      // path; no rules if absent
  bool half_duplex = false;
  std::optional<std::vector<proxy::Window>> windows;  // absent: always active
  std::vector<OperatorStep> operator_script;
  double duration = 60;
  double time_scale = 10;
  std::uint32_t seed = 0;
  double poll_period = 0.5;
  double poll_timeout = 1.0;

  void validate() const {
    if (!(time_scale > 0)) throw ScenarioError("time_scale must be > 0");
    if (!(duration > 0)) throw ScenarioError("duration must be > 0");
    if (!(poll_period > 0) || !(poll_timeout > 0)) throw ScenarioError("poll_period and poll_timeout must be > 0");
    for (const auto& s : operator_script)
      if (s.t < 0 || s.t > duration) throw ScenarioError("operator step at " + std::to_string(s.t) + " s lies outside the duration");
    if (windows)
      for (const auto& w : *windows)
        if (w.end < w.start) throw ScenarioError("attack window ends before it starts");
  }
};

/// Relative paths resolve against `base_dir` (the scenario file's directory).
inline Scenario parse_scenario(const YAML::Node& root, const fs::path& base_dir = {}) {
  static const std::set<std::string> known{"name",     "topology",    "iaml",    "half_duplex", "attack_windows",
                                           "operator", "duration",    "time_scale", "seed",     "poll_period",
                                           "poll_timeout"};
  if (!root.IsMap()) throw ScenarioError("scenario must be a mapping");
  for (const auto& kv : root) {
    const auto key = kv.first.as<std::string>();
    if (!known.count(key)) throw ScenarioError("unknown scenario key '" + key + "'");
  }
  auto path = [&](const YAML::Node& n) {
    fs::path p = n.as<std::string>();
    return (p.is_absolute() || base_dir.empty() ? p : base_dir / p).lexically_normal().string();
  };
  Scenario s;
  try {
    if (root["name"]) s.name = root["name"].as<std::string>();
    if (root["topology"]) s.topology = path(root["topology"]);
    if (root["iaml"]) s.iaml = path(root["iaml"]);
    if (root["half_duplex"]) s.half_duplex = root["half_duplex"].as<bool>();
    if (root["duration"]) s.duration = root["duration"].as<double>();
    if (root["time_scale"]) s.time_scale = root["time_scale"].as<double>();
    if (root["seed"]) s.seed = root["seed"].as<std::uint32_t>();
    if (root["poll_period"]) s.poll_period = root["poll_period"].as<double>();
    if (root["poll_timeout"]) s.poll_timeout = root["poll_timeout"].as<double>();
    if (root["attack_windows"]) {
      s.windows.emplace();
      for (const auto& w : root["attack_windows"]) {
        if (!w.IsSequence() || w.size() != 2) throw ScenarioError("attack window must be [start, end]");
        s.windows->push_back({w[0].as<double>(), w[1].as<double>()});
      }
    }
    if (root["operator"]) {
      for (const auto& n : root["operator"]) {
        OperatorStep step;
        step.t = n["t"].as<double>();
        step.rtu = n["rtu"].as<std::string>();
        auto a = hmi::parse_action(n["action"].as<std::string>());
        if (!a) throw ScenarioError("operator action must be open or close");
        step.action = *a;
        s.operator_script.push_back(step);
      }
    }
  } catch (const YAML::Exception& e) {
    throw ScenarioError(std::string("bad scenario: ") + e.what());
  }
  std::stable_sort(s.operator_script.begin(), s.operator_script.end(), [](auto& a, auto& b) { return a.t < b.t; });
  s.validate();
  return s;
}

inline Scenario load_scenario(const std::string& file) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(file);
  } catch (const YAML::Exception& e) {
    throw ScenarioError("cannot read scenario " + file + ": " + e.what());
  }
  return parse_scenario(root, fs::path(file).parent_path());
}

inline nlohmann::json to_json(const Scenario& s) {
  nlohmann::json j{{"name", s.name},         {"half_duplex", s.half_duplex}, {"duration", s.duration},
                   {"time_scale", s.time_scale}, {"seed", s.seed},         {"poll_period", s.poll_period},
                   {"poll_timeout", s.poll_timeout}};
  j["topology"] = s.topology ? nlohmann::json(*s.topology) : nlohmann::json(nullptr);
  j["iaml"] = s.iaml ? nlohmann::json(*s.iaml) : nlohmann::json(nullptr);
  if (s.windows) {
    j["attack_windows"] = nlohmann::json::array();
    for (const auto& w : *s.windows) j["attack_windows"].push_back({w.start, w.end});
  } else {
    j["attack_windows"] = nullptr;
  }
  j["operator"] = nlohmann::json::array();
  for (const auto& o : s.operator_script) j["operator"].push_back({{"t", o.t}, {"rtu", o.rtu}, {"action", hmi::to_string(o.action)}});
  return j;
}

// ---------------------------------------------------------------------------
// Grid log

struct GridEvent {
  double t = 0;
  grid::GridState state;
};

inline nlohmann::json to_json(const GridEvent& e) {
  nlohmann::json rtus = nlohmann::json::object();
  for (const auto& [id, r] : e.state.rtus)
    rtus[id] = {{"closed", r.closed}, {"current_centiamps", r.current_centiamps}, {"voltage_centikv", r.voltage_centikv}};
  return {{"t", e.t}, {"rtus", rtus}};
}

inline GridEvent grid_event_from_json(const nlohmann::json& j) {
  GridEvent e;
  e.t = j.at("t").get<double>();
  for (auto it = j.at("rtus").begin(); it != j.at("rtus").end(); ++it) {
    grid::RtuReading r;
    r.closed = it.value().at("closed").get<bool>();
    r.current_centiamps = it.value().at("current_centiamps").get<grid::Centi>();
    r.voltage_centikv = it.value().at("voltage_centikv").get<grid::Centi>();
    e.state.rtus[it.key()] = r;
  }
  return e;
}

/// Truth as of a moment: the last state logged strictly before `t`.
class GridTimeline {
 public:
  explicit GridTimeline(std::vector<GridEvent> events) : events_(std::move(events)) {
    if (events_.empty()) throw std::runtime_error("empty grid log");
    std::stable_sort(events_.begin(), events_.end(), [](auto& a, auto& b) { return a.t < b.t; });
  }
  const grid::GridState& at(double t) const {
    const GridEvent* cur = &events_.front();
    for (const auto& e : events_) {
      if (e.t < t) cur = &e;
      else break;
    }
    return cur->state;
  }
  const grid::GridState& initial() const { return events_.front().state; }
  const std::vector<GridEvent>& events() const noexcept { return events_; }

 private:
  std::vector<GridEvent> events_;
};

// ---------------------------------------------------------------------------
// JSONL helpers

inline void write_jsonl(const fs::path& path, const std::vector<nlohmann::json>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& r : rows) out << r.dump() << '\n';
}

inline std::vector<nlohmann::json> read_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<nlohmann::json> rows;
  std::string line;
  while (std::getline(in, line))
    if (line.find_first_not_of(" \t\r") != std::string::npos) rows.push_back(nlohmann::json::parse(line));
  return rows;
}

inline nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return nlohmann::json::parse(in);
}

// ---------------------------------------------------------------------------
// Exchange pairing and time series

struct Exchange {
  capture::TrafficRecord query;
  capture::TrafficRecord response;
};

/// Pairs queries with responses by (channel, tid) within one segment.
inline std::vector<Exchange> pair_exchanges(const capture::Capture& records) {
  std::map<std::pair<std::string, std::uint16_t>, capture::TrafficRecord> open;
  std::vector<Exchange> out;
  for (const auto& r : records) {
    const auto key = std::make_pair(r.channel, r.tid);
    if (r.dir == capture::Dir::query) {
      open[key] = r;
    } else if (auto it = open.find(key); it != open.end()) {
      out.push_back({it->second, r});
      open.erase(it);
    }
  }
  return out;
}

struct Sample {
  double t = 0;  // response time
  double query_t = 0;
  std::string rtu;
  std::optional<std::uint16_t> current_raw;
  std::optional<std::uint16_t> voltage_raw;
};

/// One sample per read response whose query covered #130 or #131; a
/// register the query did not cover stays empty.
inline std::vector<Sample> samples(const capture::Capture& records, const std::string& channel = {}) {
  std::vector<Sample> out;
  for (const auto& ex : pair_exchanges(records)) {
    const auto& q = ex.query;
    const auto& r = ex.response;
    if (!channel.empty() && q.channel != channel) continue;
    if (q.function != modbus::kReadHoldingRegisters || !q.start_address || !q.word_count) continue;
    if (r.function != modbus::kReadHoldingRegisters || r.exception_code) continue;
    const std::uint32_t start = *q.start_address;
    auto reg = [&](std::uint32_t addr) -> std::optional<std::uint16_t> {
      if (addr < start || addr >= start + r.values.size()) return std::nullopt;
      return r.values[addr - start];
    };
    Sample s{r.t, q.t, q.channel, reg(plc::kCurrentRegister), reg(plc::kVoltageRegister)};
    if (s.current_raw || s.voltage_raw) out.push_back(s);
  }
  return out;
}

inline std::string fixed2(std::uint16_t raw) {
  std::ostringstream o;
  o << raw / 100 << '.' << (raw % 100 < 10 ? "0" : "") << raw % 100;
  return o.str();
}

/// CSV: t,rtu,current_a,voltage_kv (scenario seconds, de-scaled registers).
inline std::string timeseries_csv(const std::vector<Sample>& rows) {
  std::ostringstream o;
  o << "t,rtu,current_a,voltage_kv\n";
  for (const auto& s : rows) {
    o << std::fixed;
    o.precision(3);
    o << s.t << ',' << s.rtu << ',' << (s.current_raw ? fixed2(*s.current_raw) : "") << ','
      << (s.voltage_raw ? fixed2(*s.voltage_raw) : "") << '\n';
  }
  return o.str();
}

// ---------------------------------------------------------------------------
// Artifacts

struct RunArtifacts {
  fs::path dir;
  nlohmann::json meta;
  capture::Capture hmi;
  capture::Capture plc;
  std::vector<nlohmann::json> view;
  std::vector<GridEvent> grid_log;
  std::vector<nlohmann::json> commands;
};

inline RunArtifacts load_run(const fs::path& dir) {
  RunArtifacts a;
  a.dir = dir;
  a.meta = read_json(dir / "run.json");
  a.hmi = capture::read_capture((dir / "hmi_capture.jsonl").string());
  a.plc = capture::read_capture((dir / "plc_capture.jsonl").string());
  a.view = read_jsonl(dir / "hmi_view.jsonl");
  for (const auto& j : read_jsonl(dir / "grid_log.jsonl")) a.grid_log.push_back(grid_event_from_json(j));
  a.commands = read_jsonl(dir / "commands.jsonl");
  return a;
}

// ---------------------------------------------------------------------------
// Deception report

inline std::vector<proxy::Window> windows_of(const nlohmann::json& scenario) {
  std::vector<proxy::Window> out;
  const auto& w = scenario.at("attack_windows");
  if (w.is_null()) return {{0, scenario.at("duration").get<double>()}};
  for (const auto& p : w) out.push_back({p[0].get<double>(), p[1].get<double>()});
  return out;
}

/// Verdicts computed from the artifacts of one run only.
inline nlohmann::json deception_report(const RunArtifacts& a) {
  const auto& scenario = a.meta.at("scenario");
  const GridTimeline truth(a.grid_log);
  const auto& nominal = truth.initial();
  const auto windows = windows_of(scenario);
  const auto nominal_kv = a.meta.value("nominal_centikv", 2318);

  // Per-window and outside-window maximum |HMI - truth| in register units.
  struct Delta {
    std::int64_t current = 0;
    std::int64_t voltage = 0;
    std::size_t samples = 0;
  };
  std::vector<std::map<std::string, Delta>> in_window(windows.size());
  std::map<std::string, Delta> outside;
  struct Blackout {
    bool verdict = false;
    std::optional<double> first_t;
    std::set<std::string> rtus;
  } blackout;

  for (const auto& s : samples(a.hmi)) {
    const auto& real = truth.at(s.t).at(s.rtu);
    std::optional<std::size_t> wi;
    for (std::size_t i = 0; i < windows.size(); ++i)
      if (windows[i].contains(s.query_t)) wi = i;
    auto& d = wi ? in_window[*wi][s.rtu] : outside[s.rtu];
    ++d.samples;
    if (s.current_raw) d.current = std::max<std::int64_t>(d.current, std::llabs(*s.current_raw - real.current_centiamps));
    if (s.voltage_raw) d.voltage = std::max<std::int64_t>(d.voltage, std::llabs(*s.voltage_raw - real.voltage_centikv));
    const auto nominal_current = nominal.at(s.rtu).current_centiamps;
    if (real.voltage_centikv == 0 && nominal_current > 0 && s.current_raw && *s.current_raw == nominal_current &&
        s.voltage_raw && *s.voltage_raw == nominal_kv) {
      blackout.verdict = true;
      if (!blackout.first_t) blackout.first_t = s.t;
      blackout.rtus.insert(s.rtu);
    }
  }
  auto delta_json = [](const std::map<std::string, Delta>& m) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [rtu, d] : m)
      j[rtu] = {{"current_a", d.current / 100.0}, {"voltage_kv", d.voltage / 100.0}, {"samples", d.samples}};
    return j;
  };
  nlohmann::json win = nlohmann::json::array();
  for (std::size_t i = 0; i < windows.size(); ++i)
    win.push_back({{"start", windows[i].start}, {"end", windows[i].end}, {"max_abs_delta", delta_json(in_window[i])}});

  // Command reversal: HMI-side write versus what reached the PLC.
  std::map<std::pair<std::string, std::uint16_t>, capture::TrafficRecord> plc_writes;
  for (const auto& r : a.plc)
    if (r.dir == capture::Dir::query && r.function == modbus::kWriteSingleCoil) plc_writes[{r.channel, r.tid}] = r;
  auto action_of = [](const capture::TrafficRecord& r) -> std::string {
    if (r.values.empty()) return "?";
    return r.values[0] == modbus::kCoilOn ? "close" : r.values[0] == modbus::kCoilOff ? "open" : "?";
  };
  nlohmann::json commands = nlohmann::json::array();
  for (const auto& r : a.hmi) {
    if (r.dir != capture::Dir::query || r.function != modbus::kWriteSingleCoil) continue;
    nlohmann::json row{{"t", r.t}, {"rtu", r.channel}, {"tid", r.tid}, {"intended", action_of(r)}};
    if (auto it = plc_writes.find({r.channel, r.tid}); it != plc_writes.end()) {
      row["executed"] = action_of(it->second);
      row["executed_value"] = it->second.values.empty() ? 0 : it->second.values[0];
      row["reversed"] = row["executed"] != row["intended"];
    } else {
      row["executed"] = nullptr;
      row["reversed"] = false;
    }
    commands.push_back(row);
  }

  // Artifact-level proxy invariants.
  auto count = [](const capture::Capture& c, capture::Dir d) {
    return std::count_if(c.begin(), c.end(), [&](const auto& r) { return r.dir == d; });
  };
  bool same_lengths = a.hmi.size() == a.plc.size();
  if (same_lengths) {
    auto h = a.hmi, p = a.plc;
    auto key = [](const auto& x, const auto& y) {
      return std::tie(x.channel, x.dir, x.t, x.tid) < std::tie(y.channel, y.dir, y.t, y.tid);
    };
    std::stable_sort(h.begin(), h.end(), key);
    std::stable_sort(p.begin(), p.end(), key);
    for (std::size_t i = 0; i < h.size() && same_lengths; ++i)
      same_lengths = h[i].raw_len == p[i].raw_len && h[i].channel == p[i].channel && h[i].dir == p[i].dir;
  }

  nlohmann::json j;
  j["scenario"] = scenario.at("name");
  j["windows"] = win;
  j["outside_windows"] = {{"max_abs_delta", delta_json(outside)}};
  j["commands"] = commands;
  j["blackout"] = {{"verdict", blackout.verdict},
                   {"first_t", blackout.first_t ? nlohmann::json(*blackout.first_t) : nlohmann::json(nullptr)},
                   {"rtus", std::vector<std::string>(blackout.rtus.begin(), blackout.rtus.end())}};
  j["frames"] = {{"hmi_query", count(a.hmi, capture::Dir::query)},
                 {"hmi_response", count(a.hmi, capture::Dir::response)},
                 {"plc_query", count(a.plc, capture::Dir::query)},
                 {"plc_response", count(a.plc, capture::Dir::response)},
                 {"lengths_preserved", same_lengths}};
  return j;
}

// ---------------------------------------------------------------------------
// Running

struct RunOptions {
  bool verbose = false;
  std::optional<std::uint16_t> api_port;  // HMI API port; ephemeral if absent
};

struct RunResult {
  fs::path dir;
  RunArtifacts artifacts;
  nlohmann::json report;
  double wall_seconds = 0;
};

inline RunResult run(const Scenario& sc, const fs::path& out_dir, const RunOptions& opt = {}) {
  sc.validate();
  fs::create_directories(out_dir);
  const auto wall_start = std::chrono::steady_clock::now();
  auto log = [&](const std::string& m) {
    if (opt.verbose) std::cerr << "[gridghost] " << m << "\n";
  };

  grid::Topology topology = grid::Topology::default_topology();
  YAML::Node topo_root;
  if (sc.topology) {
    topo_root = YAML::LoadFile(*sc.topology);
    topology = grid::parse_topology(topo_root);
  }
  const auto fleet_cfg = plc::parse_fleet(topo_root, topology);
  std::vector<iaml::AttackRule> rules;
  if (sc.iaml) rules = iaml::parse_file(*sc.iaml);

  ScenarioClock clock(sc.time_scale);
  grid::GridSim grid(topology);
  std::mutex grid_mutex;
  std::vector<GridEvent> grid_log{{0.0, *grid.snapshot()}};
  grid.set_listener([&](const grid::GridState& s) {
    std::lock_guard lock(grid_mutex);
    grid_log.push_back({clock.now(), s});
  });

  capture::CaptureSink hmi_tap, plc_tap;
  nlohmann::json meta;
  meta["scenario"] = to_json(sc);
  meta["nominal_centikv"] = topology.nominal_centikv;
  meta["rules"] = rules.size();

  std::string error;
  std::unique_ptr<plc::Fleet> fleet;
  std::unique_ptr<proxy::AttackEngine> engine;
  std::unique_ptr<proxy::Dispatcher> dispatcher;
  std::unique_ptr<hmi::HmiService> service;
  std::unique_ptr<hmi::HmiApi> api;
  try {
    fleet = std::make_unique<plc::Fleet>(fleet_cfg, grid, true);
    fleet->start();
    engine = std::make_unique<proxy::AttackEngine>(rules, proxy::EngineOptions{sc.half_duplex, sc.windows, proxy::kTidRetention}, &clock);
    proxy::DispatcherConfig dc;
    dc.identities = fleet_cfg;
    dc.upstreams = fleet->bound();
    dc.taps = {&hmi_tap, &plc_tap};
    dispatcher = std::make_unique<proxy::Dispatcher>(*engine, dc);
    dispatcher->start();
    log(std::to_string(dispatcher->channel_count()) + " channels, " + std::to_string(dispatcher->attacked_count()) + " attacked");

    hmi::HmiConfig hc;
    for (const auto& c : fleet_cfg) {
      auto t = c;
      t.host = "127.0.0.1";
      t.port = dispatcher->listen_port(c.rtu);
      hc.targets.push_back(t);
    }
    hc.poll_period = sc.poll_period;
    hc.timeout = sc.poll_timeout;
    hc.first_tid = static_cast<std::uint16_t>(1 + sc.seed % 60000);
    service = std::make_unique<hmi::HmiService>(hc, clock);
    api = std::make_unique<hmi::HmiApi>(*service, "127.0.0.1", opt.api_port.value_or(0));
    api->start();
    meta["api_port"] = api->port();
    service->start(0.0);
    log("hmi api on 127.0.0.1:" + std::to_string(api->port()));

    std::jthread operator_thread([&](std::stop_token st) {
      for (const auto& step : sc.operator_script) {
        if (!clock.sleep_until(step.t, st)) return;
        nlohmann::json body{{"rtu", step.rtu}, {"action", hmi::to_string(step.action)}, {"origin", "script"}};
        try {
          auto r = http::request("127.0.0.1", api->port(), "POST", "/api/command", body.dump());
          log("operator " + body.dump() + " -> " + r.body);
        } catch (const std::exception& e) {
          log(std::string("operator request failed: ") + e.what());
        }
      }
    });
    clock.sleep_until(sc.duration);
    operator_thread.request_stop();
    operator_thread.join();
  } catch (const std::exception& e) {
    error = e.what();
    std::cerr << "[gridghost] run aborted: " << error << "\n";
  }

  if (api) api->stop();
  if (service) service->stop();
  if (dispatcher) {
    meta["proxy"] = dispatcher->status();
    dispatcher->stop();
  }
  if (fleet) fleet->stop();
  if (engine) {
    nlohmann::json stages = nlohmann::json::array();
    for (const auto& [t, g] : engine->stage_log()) stages.push_back({{"t", t}, {"global_stage", g}});
    meta["stage_log"] = stages;
    meta["faults"] = engine->faults();
  }
  if (service) meta["hmi_metrics"] = service->metrics();
  meta["error"] = error.empty() ? nlohmann::json(nullptr) : nlohmann::json(error);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
  meta["wall_seconds"] = wall;

  capture::write_capture((out_dir / "hmi_capture.jsonl").string(), hmi_tap.records());
  capture::write_capture((out_dir / "plc_capture.jsonl").string(), plc_tap.records());
  write_jsonl(out_dir / "hmi_view.jsonl", service ? service->store().log() : std::vector<nlohmann::json>{});
  {
    std::vector<nlohmann::json> rows;
    std::lock_guard lock(grid_mutex);
    for (const auto& e : grid_log) rows.push_back(to_json(e));
    write_jsonl(out_dir / "grid_log.jsonl", rows);
  }
  {
    std::vector<nlohmann::json> rows;
    if (service)
      for (const auto& c : service->store().commands()) rows.push_back(hmi::to_json(c));
    write_jsonl(out_dir / "commands.jsonl", rows);
  }
  {
    std::ofstream out(out_dir / "run.json");
    out << meta.dump(2) << '\n';
  }
  if (!error.empty()) throw ScenarioError("run aborted: " + error + " (partial artifacts in " + out_dir.string() + ")");

  RunResult result;
  result.dir = out_dir;
  result.artifacts = load_run(out_dir);
  result.report = deception_report(result.artifacts);
  result.wall_seconds = wall;
  std::ofstream(out_dir / "report.json") << result.report.dump(2) << '\n';
  return result;
}

}  // namespace gridghost::harness
