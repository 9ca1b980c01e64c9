#pragma once

// Radial distribution model standing in for the simulation PLC: a substation
// feeding two radial lines joined by normally-open tie switches. Currents are
// kept in centiamperes and voltages in centikilovolts so that register values
// (x100 fixed point) are exact.

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <queue>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

namespace gridghost::grid {

using Centi = std::int64_t;

inline Centi to_centi(double value) { return static_cast<Centi>(std::llround(value * 100.0)); }
inline double from_centi(Centi value) { return static_cast<double>(value) / 100.0; }

class TopologyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnknownRtu : public std::invalid_argument {
 public:
  explicit UnknownRtu(const std::string& rtu) : std::invalid_argument("unknown RTU " + rtu), rtu_(rtu) {}
  const std::string& rtu() const noexcept { return rtu_; }

 private:
  std::string rtu_;
};

/// Raised when the closed switches form a loop reachable from the substation.
class LoopError : public std::runtime_error {
 public:
  explicit LoopError(const std::string& rtu)
      : std::runtime_error("closing " + rtu + " forms a loop; radial solver rejects it"), rtu_(rtu) {}
  const std::string& rtu() const noexcept { return rtu_; }

 private:
  std::string rtu_;
};

/// A switchgear between two bus nodes. `to` is the load side; the RTU's
/// voltage reading is taken there.
struct SwitchSpec {
  std::string rtu;
  std::string from;
  std::string to;
  bool tie = false;
  bool normally_closed = true;
};

struct Topology {
  std::string substation = "SUB";
  Centi nominal_centikv = 2318;
  std::vector<SwitchSpec> switches;
  std::map<std::string, Centi> load_centiamps;  // per bus node

  std::vector<std::string> rtus() const {
    std::vector<std::string> out;
    for (const auto& s : switches) out.push_back(s.rtu);
    return out;
  }

  bool has_rtu(const std::string& rtu) const {
    for (const auto& s : switches)
      if (s.rtu == rtu) return true;
    return false;
  }

  const SwitchSpec& switch_for(const std::string& rtu) const {
    for (const auto& s : switches)
      if (s.rtu == rtu) return s;
    throw UnknownRtu(rtu);
  }

  std::set<std::string> nodes() const {
    std::set<std::string> out{substation};
    for (const auto& s : switches) {
      out.insert(s.from);
      out.insert(s.to);
    }
    return out;
  }

  std::map<std::string, bool> default_switch_state() const {
    std::map<std::string, bool> out;
    for (const auto& s : switches) out[s.rtu] = s.normally_closed && !s.tie;
    return out;
  }

  Centi load_at(const std::string& node) const {
    auto it = load_centiamps.find(node);
    return it == load_centiamps.end() ? 0 : it->second;
  }

  void validate() const;

  /// Top line RTU_01..06 (nodes T1..T6), bottom line RTU_11, 10, 09 (nodes
  /// B11, B10, B9). RTU_07 ties T6 to B9 and RTU_08 ties T3 to B10. Loads
  /// reproduce the line-head currents 113.91 A / 180.76 A and 11.39 A at RTU_04.
  static Topology default_topology() {
    Topology t;
    t.switches = {
        {"RTU_01", "SUB", "T1"}, {"RTU_02", "T1", "T2"},  {"RTU_03", "T2", "T3"},
        {"RTU_04", "T3", "T4"},  {"RTU_05", "T4", "T5"},  {"RTU_06", "T5", "T6"},
        {"RTU_07", "T6", "B9", true, false},               {"RTU_08", "T3", "B10", true, false},
        {"RTU_09", "B10", "B9"}, {"RTU_10", "B11", "B10"}, {"RTU_11", "SUB", "B11"},
    };
    t.load_centiamps = {
        {"T1", 4000}, {"T2", 3500}, {"T3", 2752}, {"T4", 500},   {"T5", 339},
        {"T6", 300},  {"B11", 8000}, {"B10", 6000}, {"B9", 4076},
    };
    return t;
  }
};

struct RtuReading {
  bool closed = false;
  Centi current_centiamps = 0;
  Centi voltage_centikv = 0;

  double current_a() const { return from_centi(current_centiamps); }
  double voltage_kv() const { return from_centi(voltage_centikv); }
  bool operator==(const RtuReading&) const = default;
};

struct GridState {
  std::map<std::string, RtuReading> rtus;
  std::set<std::string> energized_nodes;

  const RtuReading& at(const std::string& rtu) const {
    auto it = rtus.find(rtu);
    if (it == rtus.end()) throw UnknownRtu(rtu);
    return it->second;
  }
  std::map<std::string, bool> switch_closed() const {
    std::map<std::string, bool> out;
    for (const auto& [id, r] : rtus) out[id] = r.closed;
    return out;
  }
  bool operator==(const GridState&) const = default;
};

/// Radial load flow: nodes reachable from the substation through closed
/// switches are energized at nominal voltage; each closed switch carries the
/// summed load downstream of it.
inline GridState solve(const Topology& topology, const std::map<std::string, bool>& switch_closed) {
  for (const auto& [rtu, closed] : switch_closed) {
    if (!topology.has_rtu(rtu)) throw UnknownRtu(rtu);
  }
  auto is_closed = [&](const SwitchSpec& s) {
    auto it = switch_closed.find(s.rtu);
    if (it == switch_closed.end()) throw TopologyError("switch state missing for " + s.rtu);
    return it->second;
  };

  struct Edge {
    std::size_t sw;
    std::string other;
  };
  std::map<std::string, std::vector<Edge>> adjacency;
  for (std::size_t i = 0; i < topology.switches.size(); ++i) {
    const auto& s = topology.switches[i];
    if (!is_closed(s)) continue;
    adjacency[s.from].push_back({i, s.to});
    adjacency[s.to].push_back({i, s.from});
  }

  // BFS tree from the substation; a closed switch reaching an already
  // visited node is a loop.
  std::map<std::string, std::size_t> parent_switch;
  std::vector<std::string> order;
  std::set<std::string> visited{topology.substation};
  std::set<std::size_t> tree_edges;
  std::queue<std::string> frontier;
  frontier.push(topology.substation);
  while (!frontier.empty()) {
    auto node = frontier.front();
    frontier.pop();
    order.push_back(node);
    for (const auto& e : adjacency[node]) {
      if (tree_edges.count(e.sw)) continue;
      if (visited.count(e.other)) throw LoopError(topology.switches[e.sw].rtu);
      visited.insert(e.other);
      tree_edges.insert(e.sw);
      parent_switch[e.other] = e.sw;
      frontier.push(e.other);
    }
  }

  // Subtree loads in reverse BFS order.
  std::map<std::string, Centi> subtree;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    subtree[*it] += topology.load_at(*it);
    auto p = parent_switch.find(*it);
    if (p == parent_switch.end()) continue;
    const auto& s = topology.switches[p->second];
    const std::string& up = s.to == *it ? s.from : s.to;
    subtree[up] += subtree[*it];
  }

  GridState state;
  state.energized_nodes = visited;
  for (std::size_t i = 0; i < topology.switches.size(); ++i) {
    const auto& s = topology.switches[i];
    RtuReading r;
    r.closed = is_closed(s);
    if (r.closed && tree_edges.count(i)) {
      const std::string& down = parent_switch.count(s.to) && parent_switch.at(s.to) == i ? s.to : s.from;
      r.current_centiamps = subtree[down];
    }
    r.voltage_centikv = visited.count(s.to) ? topology.nominal_centikv : 0;
    state.rtus[s.rtu] = r;
  }
  return state;
}

inline void Topology::validate() const {
  if (switches.empty()) throw TopologyError("topology has no switches");
  std::set<std::string> seen;
  for (const auto& s : switches) {
    if (!seen.insert(s.rtu).second) throw TopologyError("duplicate RTU " + s.rtu);
    if (s.from == s.to) throw TopologyError(s.rtu + " connects a node to itself");
  }
  for (const auto& [node, load] : load_centiamps) {
    if (!nodes().count(node)) throw TopologyError("load on unknown node " + node);
    if (load < 0) throw TopologyError("negative load on node " + node);
  }
  // With every switch closed the graph must be connected.
  std::map<std::string, std::set<std::string>> adj;
  for (const auto& s : switches) {
    adj[s.from].insert(s.to);
    adj[s.to].insert(s.from);
  }
  std::set<std::string> reach{substation};
  std::vector<std::string> stack{substation};
  while (!stack.empty()) {
    auto n = stack.back();
    stack.pop_back();
    for (const auto& m : adj[n])
      if (reach.insert(m).second) stack.push_back(m);
  }
  if (reach != nodes()) throw TopologyError("graph is not connected with all switches closed");
  // With ties open: a radial tree rooted at the substation covering every node.
  std::map<std::string, bool> ties_open;
  for (const auto& s : switches) ties_open[s.rtu] = !s.tie;
  GridState radial;
  try {
    radial = solve(*this, ties_open);
  } catch (const LoopError& e) {
    throw TopologyError(std::string("non-tie switches are not radial: ") + e.what());
  }
  if (radial.energized_nodes != nodes()) throw TopologyError("non-tie switches do not reach every node");
}

// ---------------------------------------------------------------------------
// Config file

inline Topology parse_topology(const YAML::Node& root) {
  Topology t;
  const YAML::Node grid = root["grid"] ? root["grid"] : root;
  if (grid["substation"]) t.substation = grid["substation"].as<std::string>();
  if (grid["nominal_kv"]) t.nominal_centikv = to_centi(grid["nominal_kv"].as<double>());
  if (!grid["switches"] || !grid["switches"].IsSequence()) throw TopologyError("grid.switches must be a list");
  for (const auto& n : grid["switches"]) {
    SwitchSpec s;
    if (!n["rtu"] || !n["from"] || !n["to"]) throw TopologyError("switch needs rtu, from and to");
    s.rtu = n["rtu"].as<std::string>();
    s.from = n["from"].as<std::string>();
    s.to = n["to"].as<std::string>();
    s.tie = n["tie"] ? n["tie"].as<bool>() : false;
    s.normally_closed = n["normally_closed"] ? n["normally_closed"].as<bool>() : !s.tie;
    t.switches.push_back(std::move(s));
  }
  if (grid["loads_a"]) {
    for (const auto& kv : grid["loads_a"]) {
      t.load_centiamps[kv.first.as<std::string>()] = to_centi(kv.second.as<double>());
    }
  }
  t.validate();
  return t;
}

inline Topology load_topology(const std::string& path) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path);
  } catch (const YAML::Exception& e) {
    throw TopologyError("cannot read topology " + path + ": " + e.what());
  }
  return parse_topology(root);
}

// ---------------------------------------------------------------------------
// Single-writer owner of the live grid state.

class GridSim {
 public:
  using Listener = std::function<void(const GridState&)>;

  explicit GridSim(Topology topology)
      : topology_(std::move(topology)),
        closed_(topology_.default_switch_state()),
        state_(std::make_shared<const GridState>(solve(topology_, closed_))) {}

  const Topology& topology() const noexcept { return topology_; }

  std::shared_ptr<const GridState> snapshot() const {
    std::lock_guard lock(mutex_);
    return state_;
  }

  /// Re-solves after changing one switch. A rejected change (loop) leaves
  /// the state untouched. Listeners fire only when the state changes.
  GridState set_switch(const std::string& rtu, bool closed) {
    std::lock_guard lock(mutex_);
    if (!topology_.has_rtu(rtu)) throw UnknownRtu(rtu);
    if (closed_.at(rtu) == closed) return *state_;
    auto next = closed_;
    next[rtu] = closed;
    auto solved = std::make_shared<const GridState>(solve(topology_, next));
    closed_ = std::move(next);
    state_ = solved;
    if (listener_) listener_(*state_);
    return *state_;
  }

  void set_listener(Listener l) {
    std::lock_guard lock(mutex_);
    listener_ = std::move(l);
  }

 private:
  Topology topology_;
  mutable std::mutex mutex_;
  std::map<std::string, bool> closed_;
  std::shared_ptr<const GridState> state_;
  Listener listener_;
};

}  // namespace gridghost::grid
