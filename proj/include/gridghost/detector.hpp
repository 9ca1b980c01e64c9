#pragma once

// Protocol-level anomaly detector after the GW model: each channel's traffic
// is learned as a single cycle of message symbols. Data values are never part
// of a symbol.

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridghost/capture.hpp"
#include "gridghost/modbus.hpp"

namespace gridghost::detector {

using Symbol = std::string;

/// "Q:3:130:2" (read query: start, count), "R:3:4" (read response: byte
/// count), "Q:5:0:1" / "R:5:0:1" (single writes), "R:131:x2" (exception 2).
inline Symbol symbolize(const capture::TrafficRecord& r) {
  std::string s = r.dir == capture::Dir::query ? "Q:" : "R:";
  s += std::to_string(r.function);
  if (r.exception_code) return s + ":x" + std::to_string(*r.exception_code);
  if (r.function == modbus::kReadHoldingRegisters) {
    if (r.dir == capture::Dir::query && r.start_address && r.word_count)
      return s + ":" + std::to_string(*r.start_address) + ":" + std::to_string(*r.word_count);
    if (r.dir == capture::Dir::response && r.byte_count) return s + ":" + std::to_string(*r.byte_count);
    return s + ":?" + std::to_string(r.raw_len);
  }
  if ((r.function == modbus::kWriteSingleCoil || r.function == modbus::kWriteSingleRegister) && r.start_address)
    return s + ":" + std::to_string(*r.start_address) + ":1";
  return s + ":?" + std::to_string(r.raw_len);
}

struct LearnError : std::runtime_error {
  LearnError(const std::string& what, std::optional<std::size_t> position = std::nullopt)
      : std::runtime_error(what), position(position) {}
  std::optional<std::size_t> position;  // record offset of the first aperiodic symbol
};

struct Options {
  std::set<Symbol> whitelist{"Q:5:0:1", "R:5:0:1"};  // operator breaker commands
  double rarity = 0.05;
  std::size_t min_cycles = 3;
};

struct ChannelDfa {
  std::string channel;
  capture::Segment segment = capture::Segment::hmi;
  std::vector<Symbol> cycle;
  std::set<Symbol> whitelist;

  std::size_t period() const { return cycle.size(); }
  bool known(const Symbol& s) const { return std::find(cycle.begin(), cycle.end(), s) != cycle.end(); }
  bool operator==(const ChannelDfa&) const = default;
};

/// Learns the cycle of one channel's attack-free records.
inline ChannelDfa learn(const capture::Capture& records, const Options& opt = {}) {
  if (records.empty()) throw LearnError("no records to learn from");
  ChannelDfa dfa;
  dfa.channel = records.front().channel;
  dfa.segment = records.front().segment;
  dfa.whitelist = opt.whitelist;

  std::vector<Symbol> all;
  std::map<Symbol, std::size_t> freq;
  for (const auto& r : records) {
    all.push_back(symbolize(r));
    ++freq[all.back()];
  }
  std::size_t top = 0;
  for (const auto& [s, n] : freq) top = std::max(top, n);
  for (const auto& [s, n] : freq)
    if (static_cast<double>(n) < opt.rarity * static_cast<double>(top)) dfa.whitelist.insert(s);

  std::vector<Symbol> seq;
  std::vector<std::size_t> offsets;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (dfa.whitelist.count(all[i])) continue;
    seq.push_back(all[i]);
    offsets.push_back(i);
  }
  if (seq.empty()) throw LearnError("every symbol is whitelisted");

  std::size_t furthest = 0;
  for (std::size_t p = 1; p * opt.min_cycles <= seq.size(); ++p) {
    std::size_t i = p;
    while (i < seq.size() && seq[i] == seq[i - p]) ++i;
    if (i == seq.size()) {
      dfa.cycle.assign(seq.begin(), seq.begin() + static_cast<std::ptrdiff_t>(p));
      return dfa;
    }
    furthest = std::max(furthest, i);
  }
  if (seq.size() < opt.min_cycles) throw LearnError("too few records for " + std::to_string(opt.min_cycles) + " cycles");
  throw LearnError("no stable cycle; first aperiodic symbol '" + seq[furthest] + "' at record " +
                       std::to_string(offsets[furthest]),
                   offsets[furthest]);
}

enum class Event { normal, unknown_symbol, out_of_order };

inline const char* to_string(Event e) {
  switch (e) {
    case Event::normal: return "Normal";
    case Event::unknown_symbol: return "UnknownSymbol";
    default: return "OutOfOrder";
  }
}

struct Anomaly {
  std::size_t offset = 0;
  double t = 0;
  Event kind = Event::normal;
  Symbol symbol;
  std::optional<Symbol> expected;
};

struct Classification {
  std::string channel;
  capture::Segment segment = capture::Segment::hmi;
  std::vector<Event> events;  // one per record
  std::vector<Anomaly> anomalies;
  std::size_t count(Event e) const { return static_cast<std::size_t>(std::count(events.begin(), events.end(), e)); }
};

/// Tracks the records through the cycle. Tracking starts unsynchronized and
/// resynchronizes at the next cycle head after any anomaly.
inline Classification classify(const capture::Capture& records, const ChannelDfa& dfa) {
  Classification out;
  out.channel = dfa.channel;
  out.segment = dfa.segment;
  const std::size_t p = dfa.period();
  bool synced = false;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto s = symbolize(records[i]);
    Event e = Event::normal;
    std::optional<Symbol> expected;
    if (dfa.whitelist.count(s)) {
      // Acyclic but known: does not advance the cycle.
    } else if (!dfa.known(s)) {
      e = Event::unknown_symbol;
      if (synced) expected = dfa.cycle[pos];
      synced = false;
    } else if (!synced) {
      if (s == dfa.cycle[0]) {
        synced = true;
        pos = 1 % p;
      }
    } else if (s == dfa.cycle[pos]) {
      pos = (pos + 1) % p;
    } else {
      e = Event::out_of_order;
      expected = dfa.cycle[pos];
      synced = s == dfa.cycle[0];
      pos = 1 % p;
    }
    out.events.push_back(e);
    if (e != Event::normal) out.anomalies.push_back({i, records[i].t, e, s, expected});
  }
  return out;
}

inline nlohmann::json report(const Classification& c, std::size_t max_anomalies = 100) {
  nlohmann::json list = nlohmann::json::array();
  for (std::size_t i = 0; i < c.anomalies.size() && i < max_anomalies; ++i) {
    const auto& a = c.anomalies[i];
    nlohmann::json j{{"offset", a.offset}, {"t", a.t}, {"kind", to_string(a.kind)}, {"symbol", a.symbol}};
    if (a.expected) j["expected"] = *a.expected;
    list.push_back(j);
  }
  return {{"channel", c.channel},
          {"segment", capture::to_string(c.segment)},
          {"records", c.events.size()},
          {"counts",
           {{"Normal", c.count(Event::normal)},
            {"UnknownSymbol", c.count(Event::unknown_symbol)},
            {"OutOfOrder", c.count(Event::out_of_order)}}},
          {"anomalies", list}};
}

// ---------------------------------------------------------------------------
// Models over whole captures, keyed by (segment, channel)

using Key = std::pair<capture::Segment, std::string>;

inline std::map<Key, capture::Capture> split(const capture::Capture& c) {
  std::map<Key, capture::Capture> out;
  for (const auto& r : c) out[{r.segment, r.channel}].push_back(r);
  for (auto& [k, v] : out)
    std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.t < b.t; });
  return out;
}

struct Model {
  std::map<Key, ChannelDfa> channels;
};

inline Model learn_all(const capture::Capture& c, const Options& opt = {}) {
  Model m;
  for (const auto& [k, recs] : split(c)) {
    try {
      m.channels.emplace(k, learn(recs, opt));
    } catch (const LearnError& e) {
      throw LearnError(std::string(capture::to_string(k.first)) + "/" + k.second + ": " + e.what(), e.position);
    }
  }
  return m;
}

/// Classifies every channel of `c`; a channel without a model is an error.
inline std::vector<Classification> classify_all(const capture::Capture& c, const Model& m) {
  std::vector<Classification> out;
  for (const auto& [k, recs] : split(c)) {
    auto it = m.channels.find(k);
    if (it == m.channels.end())
      throw std::runtime_error(std::string("no model for ") + capture::to_string(k.first) + "/" + k.second);
    out.push_back(classify(recs, it->second));
  }
  return out;
}

inline nlohmann::json to_json(const Model& m) {
  nlohmann::json chans = nlohmann::json::array();
  for (const auto& [k, d] : m.channels) {
    chans.push_back({{"channel", d.channel},
                     {"segment", capture::to_string(d.segment)},
                     {"cycle", d.cycle},
                     {"whitelist", std::vector<Symbol>(d.whitelist.begin(), d.whitelist.end())}});
  }
  return {{"channels", chans}};
}

inline Model model_from_json(const nlohmann::json& j) {
  Model m;
  for (const auto& c : j.at("channels")) {
    ChannelDfa d;
    d.channel = c.at("channel").get<std::string>();
    d.segment = capture::parse_segment(c.at("segment").get<std::string>());
    d.cycle = c.at("cycle").get<std::vector<Symbol>>();
    if (d.cycle.empty()) throw std::runtime_error("empty cycle for " + d.channel);
    for (const auto& s : c.value("whitelist", std::vector<Symbol>{})) d.whitelist.insert(s);
    m.channels.emplace(Key{d.segment, d.channel}, std::move(d));
  }
  return m;
}

inline nlohmann::json summary(const std::vector<Classification>& results) {
  nlohmann::json channels = nlohmann::json::array();
  std::size_t unknown = 0, ooo = 0, total = 0;
  for (const auto& c : results) {
    channels.push_back(report(c));
    unknown += c.count(Event::unknown_symbol);
    ooo += c.count(Event::out_of_order);
    total += c.events.size();
  }
  return {{"records", total}, {"UnknownSymbol", unknown}, {"OutOfOrder", ooo}, {"channels", channels}};
}

}  // namespace gridghost::detector
