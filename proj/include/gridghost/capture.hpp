#pragma once

// Capture taps: one JSON object per line, one file per network segment.
//
//   {"t":151.812,"segment":"hmi","channel":"RTU_01","dir":"query","tid":12,
//    "unit":1,"function":3,"start_address":130,"word_count":2,"raw_len":12,
//    "raw":"000c00000006010300820002"}
//
// Responses carry "byte_count" and "values"; writes carry "start_address" and
// "values" (the written value); exceptions carry "exception_code".

#include <algorithm>
#include <fstream>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridghost/modbus.hpp"

namespace gridghost::capture {

enum class Segment { hmi, plc };
enum class Dir { query, response };

inline const char* to_string(Segment s) { return s == Segment::hmi ? "hmi" : "plc"; }
inline const char* to_string(Dir d) { return d == Dir::query ? "query" : "response"; }

inline Segment parse_segment(const std::string& s) {
  if (s == "hmi" || s == "hmi-side") return Segment::hmi;
  if (s == "plc" || s == "plc-side") return Segment::plc;
  throw std::invalid_argument("unknown segment '" + s + "'");
}

struct TrafficRecord {
  double t = 0;
  Segment segment = Segment::hmi;
  std::string channel;
  Dir dir = Dir::query;
  std::uint16_t tid = 0;
  std::uint8_t unit = 0;
  std::uint8_t function = 0;
  std::optional<std::uint16_t> start_address;
  std::optional<std::uint16_t> word_count;
  std::optional<std::uint8_t> byte_count;
  std::optional<std::uint8_t> exception_code;
  std::vector<std::uint16_t> values;
  std::size_t raw_len = 0;
  std::string raw;  // hex

  bool operator==(const TrafficRecord&) const = default;
};

inline TrafficRecord make_record(const modbus::Frame& frame, Dir dir, Segment segment, std::string channel, double t) {
  using namespace modbus;
  TrafficRecord r;
  r.t = t;
  r.segment = segment;
  r.channel = std::move(channel);
  r.dir = dir;
  r.tid = frame.header.tid;
  r.unit = frame.header.unit_id;
  r.function = frame.function;
  const auto bytes = encode_frame(frame);
  r.raw_len = bytes.size();
  r.raw = to_hex(bytes);
  const auto& p = frame.payload;
  if (frame.is_exception()) {
    if (!p.empty()) r.exception_code = p[0];
    return r;
  }
  const bool is_query = dir == Dir::query;
  switch (frame.function) {
    case kReadHoldingRegisters:
      if (is_query && looks_like_read_request(p)) {
        r.start_address = read_u16(p, 0);
        r.word_count = read_u16(p, 2);
      } else if (!is_query && looks_like_read_response(p)) {
        r.byte_count = p[0];
        for (std::size_t i = 1; i + 1 < p.size(); i += 2) r.values.push_back(read_u16(p, i));
      }
      break;
    case kWriteSingleCoil:
    case kWriteSingleRegister:
      if (p.size() == 4) {
        r.start_address = read_u16(p, 0);
        r.values.push_back(read_u16(p, 2));
      }
      break;
    default:
      break;
  }
  return r;
}

inline nlohmann::json to_json(const TrafficRecord& r) {
  nlohmann::json j{{"t", r.t},         {"segment", to_string(r.segment)}, {"channel", r.channel},
                   {"dir", to_string(r.dir)}, {"tid", r.tid},          {"unit", r.unit},
                   {"function", r.function}};
  if (r.start_address) j["start_address"] = *r.start_address;
  if (r.word_count) j["word_count"] = *r.word_count;
  if (r.byte_count) j["byte_count"] = *r.byte_count;
  if (r.exception_code) j["exception_code"] = *r.exception_code;
  if (!r.values.empty()) j["values"] = r.values;
  j["raw_len"] = r.raw_len;
  j["raw"] = r.raw;
  return j;
}

inline TrafficRecord from_json(const nlohmann::json& j) {
  TrafficRecord r;
  r.t = j.at("t").get<double>();
  r.segment = parse_segment(j.at("segment").get<std::string>());
  r.channel = j.at("channel").get<std::string>();
  const auto dir = j.at("dir").get<std::string>();
  if (dir != "query" && dir != "response") throw std::invalid_argument("unknown dir '" + dir + "'");
  r.dir = dir == "query" ? Dir::query : Dir::response;
  r.tid = j.at("tid").get<std::uint16_t>();
  r.unit = j.value("unit", std::uint8_t{0});
  r.function = j.at("function").get<std::uint8_t>();
  if (j.contains("start_address")) r.start_address = j["start_address"].get<std::uint16_t>();
  if (j.contains("word_count")) r.word_count = j["word_count"].get<std::uint16_t>();
  if (j.contains("byte_count")) r.byte_count = j["byte_count"].get<std::uint8_t>();
  if (j.contains("exception_code")) r.exception_code = j["exception_code"].get<std::uint8_t>();
  if (j.contains("values")) r.values = j["values"].get<std::vector<std::uint16_t>>();
  r.raw_len = j.value("raw_len", std::size_t{0});
  r.raw = j.value("raw", std::string());
  return r;
}

using Capture = std::vector<TrafficRecord>;

inline Capture read_capture(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open capture " + path);
  Capture out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline void write_capture(const std::string& path, const Capture& records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write capture " + path);
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

/// Records of one segment filtered to `channel` (all channels if empty).
inline Capture select(const Capture& c, std::optional<Segment> segment, const std::string& channel = {}) {
  Capture out;
  for (const auto& r : c)
    if ((!segment || r.segment == *segment) && (channel.empty() || r.channel == channel)) out.push_back(r);
  return out;
}

/// Thread-safe append sink for one tap.
class CaptureSink {
 public:
  void append(TrafficRecord r) {
    std::lock_guard lock(mutex_);
    records_.push_back(std::move(r));
  }

  /// Records ordered by timestamp (stable for ties).
  Capture records() const {
    std::lock_guard lock(mutex_);
    Capture out = records_;
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.t < b.t; });
    return out;
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return records_.size();
  }

 private:
  mutable std::mutex mutex_;
  Capture records_;
};

}  // namespace gridghost::capture
