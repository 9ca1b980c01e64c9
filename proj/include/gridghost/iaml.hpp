#pragma once

// ICS Attack Markup Language: an XML document of <Change> rules, each a
// <Query> of match criteria and a <NewValues> rewrite. Rewrites replace field
// contents only; a rewritten frame always has the same length as the input.
//
//   <IAML>
//     <Change PacketToChange="RESPONSE">
//       <Query>
//         <QueryEntry Key="TYPE" Value="REQUEST"/>
//         <QueryEntry Key="ADDRESS" Value="130"/>
//       </Query>
//       <NewValues>
//         <NewValueEntry Key="DATA" Value="0,0"/>
//       </NewValues>
//     </Change>
//   </IAML>
//
// Value expressions (DATA, STARTING_ADDRESS) use the grammar
//   expr := term (('+'|'-') term)*   term := factor (('*'|'/') factor)*
//   factor := integer | 'X' | '(' expr ')'
// evaluated in 16-bit wrap-around arithmetic, X being the original field.

#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "gridghost/modbus.hpp"

namespace gridghost::iaml {

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A rule that cannot be applied to the frame at hand.
class RuleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Expressions

class Expr {
 public:
  enum class Op : std::uint8_t { constant, x, add, sub, mul, div };
  struct Instr {
    Op op;
    std::uint16_t value = 0;
    bool operator==(const Instr&) const = default;
  };

  Expr() = default;

  static Expr constant(std::uint16_t v) {
    Expr e;
    e.program_.push_back({Op::constant, v});
    return e;
  }

  static Expr parse(std::string_view text) {
    Parser p{text, 0, {}};
    p.skip_ws();
    if (p.at_end()) throw ParseError("empty expression");
    p.expr();
    p.skip_ws();
    if (!p.at_end()) p.fail("unexpected '" + std::string(1, text[p.pos]) + "'");
    Expr e;
    e.program_ = std::move(p.out);
    e.check_static_division();
    return e;
  }

  std::uint16_t eval(std::uint16_t x) const {
    std::vector<std::uint16_t> stack;
    stack.reserve(program_.size());
    for (const auto& ins : program_) {
      switch (ins.op) {
        case Op::constant: stack.push_back(ins.value); break;
        case Op::x: stack.push_back(x); break;
        default: {
          const std::uint16_t b = stack.back();
          stack.pop_back();
          const std::uint16_t a = stack.back();
          stack.back() = binary(ins.op, a, b);
        }
      }
    }
    return stack.back();
  }

  bool uses_x() const {
    for (const auto& ins : program_)
      if (ins.op == Op::x) return true;
    return false;
  }

  /// Canonical text: minimal parentheses, no whitespace.
  std::string to_string() const {
    struct Item {
      std::string text;
      int prec;
    };
    std::vector<Item> stack;
    for (const auto& ins : program_) {
      switch (ins.op) {
        case Op::constant: stack.push_back({std::to_string(ins.value), 3}); break;
        case Op::x: stack.push_back({"X", 3}); break;
        default: {
          Item b = std::move(stack.back());
          stack.pop_back();
          Item a = std::move(stack.back());
          stack.pop_back();
          const int p = precedence(ins.op);
          std::string s = a.prec < p ? "(" + a.text + ")" : a.text;
          s += symbol(ins.op);
          s += b.prec <= p ? "(" + b.text + ")" : b.text;
          stack.push_back({std::move(s), p});
        }
      }
    }
    return stack.empty() ? std::string() : stack.back().text;
  }

  const std::vector<Instr>& program() const noexcept { return program_; }
  bool operator==(const Expr&) const = default;

 private:
  static int precedence(Op op) { return op == Op::add || op == Op::sub ? 1 : 2; }
  static char symbol(Op op) {
    switch (op) {
      case Op::add: return '+';
      case Op::sub: return '-';
      case Op::mul: return '*';
      default: return '/';
    }
  }

  static std::uint16_t binary(Op op, std::uint16_t a, std::uint16_t b) {
    switch (op) {
      case Op::add: return static_cast<std::uint16_t>(a + b);
      case Op::sub: return static_cast<std::uint16_t>(a - b);
      case Op::mul: return static_cast<std::uint16_t>(static_cast<std::uint32_t>(a) * b);
      case Op::div:
        if (b == 0) throw RuleError("division by zero");
        return static_cast<std::uint16_t>(a / b);
      default: return 0;
    }
  }

  // Constant-folds the program and rejects divisions whose divisor is a
  // constant zero.
  void check_static_division() const {
    std::vector<std::optional<std::uint16_t>> stack;
    for (const auto& ins : program_) {
      switch (ins.op) {
        case Op::constant: stack.push_back(ins.value); break;
        case Op::x: stack.push_back(std::nullopt); break;
        default: {
          auto b = stack.back();
          stack.pop_back();
          auto a = stack.back();
          if (ins.op == Op::div && b && *b == 0) throw ParseError("division by constant zero in '" + to_string() + "'");
          stack.back() = (a && b) ? std::optional<std::uint16_t>(binary(ins.op, *a, *b)) : std::nullopt;
        }
      }
    }
  }

  struct Parser {
    std::string_view s;
    std::size_t pos;
    std::vector<Instr> out;

    bool at_end() const { return pos >= s.size(); }
    void skip_ws() {
      while (!at_end() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    }
    [[noreturn]] void fail(const std::string& what) const {
      throw ParseError("expression '" + std::string(s) + "': " + what + " at column " + std::to_string(pos + 1));
    }

    void expr() {
      term();
      for (;;) {
        skip_ws();
        if (at_end() || (s[pos] != '+' && s[pos] != '-')) return;
        Op op = s[pos++] == '+' ? Op::add : Op::sub;
        term();
        out.push_back({op});
      }
    }
    void term() {
      factor();
      for (;;) {
        skip_ws();
        if (at_end() || (s[pos] != '*' && s[pos] != '/')) return;
        Op op = s[pos++] == '*' ? Op::mul : Op::div;
        factor();
        out.push_back({op});
      }
    }
    void factor() {
      skip_ws();
      if (at_end()) fail("missing operand");
      char c = s[pos];
      if (c == 'X' || c == 'x') {
        ++pos;
        out.push_back({Op::x});
      } else if (c == '(') {
        ++pos;
        expr();
        skip_ws();
        if (at_end() || s[pos] != ')') fail("missing ')'");
        ++pos;
      } else if (std::isdigit(static_cast<unsigned char>(c))) {
        std::uint32_t v = 0;
        while (!at_end() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
          v = v * 10 + static_cast<std::uint32_t>(s[pos++] - '0');
          if (v > 0xFFFF) fail("literal exceeds 16 bits");
        }
        out.push_back({Op::constant, static_cast<std::uint16_t>(v)});
      } else {
        fail("unexpected '" + std::string(1, c) + "'");
      }
    }
  };

  std::vector<Instr> program_;
};

// ---------------------------------------------------------------------------
// Rules

enum class PacketType { request, response };

inline const char* to_string(PacketType t) { return t == PacketType::request ? "REQUEST" : "RESPONSE"; }

struct Query {
  PacketType type = PacketType::request;
  std::optional<std::string> plc_ip;
  std::optional<int> global_stage;
  std::optional<int> local_stage;
  std::optional<std::uint8_t> function;
  std::optional<std::uint16_t> word_count;
  std::vector<std::uint16_t> addresses;

  bool operator==(const Query&) const = default;
};

struct NewValues {
  std::optional<int> global_stage;
  std::optional<int> local_stage;
  std::optional<std::uint8_t> function;
  std::optional<Expr> starting_address;
  std::vector<Expr> data;

  bool operator==(const NewValues&) const = default;
};

struct AttackRule {
  std::size_t id = 0;  // position in the document
  PacketType packet_to_change = PacketType::request;
  Query query;
  NewValues new_values;

  /// Matched on a request, applied to the response that carries its TID.
  bool arms_on_request() const {
    return packet_to_change == PacketType::response && query.type == PacketType::request;
  }
  bool operator==(const AttackRule&) const = default;
};

struct StageState {
  int global_stage = 0;
  std::map<std::string, int> local_stage;

  int local(const std::string& plc) const {
    auto it = local_stage.find(plc);
    return it == local_stage.end() ? 0 : it->second;
  }
  bool operator==(const StageState&) const = default;
};

/// Identity of the PLC a packet belongs to. PLC_IP matches either the
/// configured ip or the host:port endpoint.
struct PlcRef {
  std::string key;  // RTU id, keys the local stage
  std::string ip;
  std::string endpoint;
};

struct PacketMeta {
  PacketType type = PacketType::request;
  PlcRef plc;
  std::uint8_t function = 0;
  std::optional<std::uint16_t> start_address;
  std::optional<std::uint16_t> word_count;
};

inline modbus::Direction direction_of(PacketType t) {
  return t == PacketType::request ? modbus::Direction::master_to_slave : modbus::Direction::slave_to_master;
}

inline PacketMeta describe(const modbus::Frame& frame, PacketType type, const PlcRef& plc) {
  using namespace modbus;
  PacketMeta m;
  m.type = type;
  m.plc = plc;
  m.function = frame.function;
  if (frame.function == kWriteSingleRegister && frame.payload.size() == 4) {
    m.start_address = read_u16(frame.payload, 0);
    m.word_count = 1;
    return m;
  }
  switch (classify(frame, direction_of(type))) {
    case MessageKind::read_request:
      m.start_address = read_u16(frame.payload, 0);
      m.word_count = read_u16(frame.payload, 2);
      break;
    case MessageKind::read_response:
      m.word_count = static_cast<std::uint16_t>(frame.payload[0] / 2);
      break;
    case MessageKind::write_coil_request:
    case MessageKind::write_coil_response:
      m.start_address = read_u16(frame.payload, 0);
      m.word_count = 1;
      break;
    default:
      break;
  }
  return m;
}

inline bool match(const AttackRule& rule, const PacketMeta& meta, const StageState& stages) {
  const Query& q = rule.query;
  if (q.type != meta.type) return false;
  if (q.plc_ip && *q.plc_ip != meta.plc.ip && *q.plc_ip != meta.plc.endpoint) return false;
  if (q.global_stage && *q.global_stage != stages.global_stage) return false;
  if (q.local_stage && *q.local_stage != stages.local(meta.plc.key)) return false;
  if (q.function && *q.function != meta.function) return false;
  if (q.word_count && (!meta.word_count || *q.word_count != *meta.word_count)) return false;
  for (auto k : q.addresses) {
    if (!meta.start_address) return false;
    const std::uint32_t start = *meta.start_address;
    const std::uint32_t count = meta.word_count.value_or(1);
    if (k < start || k >= start + count) return false;
  }
  return true;
}

struct ApplyResult {
  modbus::Frame frame;
  StageState stages;
};

/// Rewrites `frame` (the packet named by PacketToChange) and returns the
/// stage state after the rule's stage updates.
inline ApplyResult apply(const AttackRule& rule, const modbus::Frame& frame, const StageState& stages,
                         const std::string& plc_key) {
  using namespace modbus;
  ApplyResult r{frame, stages};
  const NewValues& nv = rule.new_values;
  auto& payload = r.frame.payload;

  if (nv.starting_address || !nv.data.empty()) {
    const bool single_write = (frame.function == kWriteSingleRegister && payload.size() == 4);
    MessageKind kind = single_write ? MessageKind::write_coil_request : classify(frame, direction_of(rule.packet_to_change));
    switch (kind) {
      case MessageKind::read_request:
        if (!nv.data.empty()) throw RuleError("rule " + std::to_string(rule.id) + ": read request carries no data values");
        write_u16(payload, 0, nv.starting_address->eval(read_u16(payload, 0)));
        break;
      case MessageKind::read_response: {
        if (nv.starting_address) throw RuleError("rule " + std::to_string(rule.id) + ": read response carries no address");
        const std::size_t slots = payload[0] / 2;
        if (nv.data.size() > slots) {
          throw RuleError("rule " + std::to_string(rule.id) + ": " + std::to_string(nv.data.size()) +
                          " DATA expressions for " + std::to_string(slots) + " values");
        }
        for (std::size_t i = 0; i < nv.data.size(); ++i) {
          const std::size_t at = 1 + 2 * i;
          write_u16(payload, at, nv.data[i].eval(read_u16(payload, at)));
        }
        break;
      }
      case MessageKind::write_coil_request:
      case MessageKind::write_coil_response:
        if (nv.data.size() > 1) throw RuleError("rule " + std::to_string(rule.id) + ": single write has one value slot");
        if (nv.starting_address) write_u16(payload, 0, nv.starting_address->eval(read_u16(payload, 0)));
        if (!nv.data.empty()) write_u16(payload, 2, nv.data[0].eval(read_u16(payload, 2)));
        break;
      default:
        throw RuleError("rule " + std::to_string(rule.id) + ": packet has no rewritable fields");
    }
  }
  if (nv.function) r.frame.function = *nv.function;
  if (nv.global_stage) r.stages.global_stage = *nv.global_stage;
  if (nv.local_stage) r.stages.local_stage[plc_key] = *nv.local_stage;
  if (r.frame.wire_size() != frame.wire_size()) throw RuleError("rewrite would change frame length");
  return r;
}

// ---------------------------------------------------------------------------
// XML

namespace detail {

using boost::property_tree::ptree;

inline std::string trim(std::string s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline long parse_integer(const std::string& text, const std::string& where, long lo, long hi) {
  const std::string t = trim(text);
  std::size_t used = 0;
  long v = 0;
  try {
    v = std::stol(t, &used, t.rfind("0x", 0) == 0 || t.rfind("0X", 0) == 0 ? 16 : 10);
  } catch (const std::exception&) {
    throw ParseError(where + ": '" + text + "' is not an integer");
  }
  if (used != t.size()) throw ParseError(where + ": '" + text + "' is not an integer");
  if (v < lo || v > hi) throw ParseError(where + ": " + t + " outside " + std::to_string(lo) + ".." + std::to_string(hi));
  return v;
}

inline std::vector<Expr> parse_data(const std::string& text, const std::string& where) {
  std::vector<Expr> out;
  std::size_t start = 0;
  for (;;) {
    auto comma = text.find(',', start);
    auto piece = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    try {
      out.push_back(Expr::parse(piece));
    } catch (const ParseError& e) {
      throw ParseError(where + ": " + e.what());
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

inline PacketType parse_packet_type(const std::string& v, const std::string& where) {
  const auto t = trim(v);
  if (t == "REQUEST") return PacketType::request;
  if (t == "RESPONSE") return PacketType::response;
  throw ParseError(where + ": '" + v + "' is neither REQUEST nor RESPONSE");
}

struct KeyValue {
  std::string key;
  std::string value;
};

inline std::map<std::string, std::string> attributes(const ptree& node, const std::string& where,
                                                     std::initializer_list<const char*> allowed) {
  std::map<std::string, std::string> out;
  if (auto attrs = node.get_child_optional("<xmlattr>")) {
    for (const auto& [name, value] : *attrs) {
      bool ok = false;
      for (auto a : allowed) ok = ok || name == a;
      if (!ok) throw ParseError(where + ": unknown attribute '" + name + "'");
      out[name] = value.data();
    }
  }
  return out;
}

inline void reject_text(const ptree& node, const std::string& where) {
  if (!trim(node.data()).empty()) throw ParseError(where + ": unexpected text '" + trim(node.data()) + "'");
}

inline std::vector<KeyValue> entries(const ptree& node, const char* entry_tag, const std::string& where) {
  reject_text(node, where);
  std::vector<KeyValue> out;
  std::size_t n = 0;
  for (const auto& [tag, child] : node) {
    if (tag == "<xmlattr>") throw ParseError(where + ": takes no attributes");
    if (tag != entry_tag) throw ParseError(where + ": unknown element <" + tag + ">");
    const std::string here = where + "/" + entry_tag + "[" + std::to_string(++n) + "]";
    reject_text(child, here);
    if (!child.empty() && !(child.size() == 1 && child.begin()->first == "<xmlattr>")) {
      throw ParseError(here + ": unexpected child element");
    }
    auto attrs = attributes(child, here, {"Key", "Value"});
    if (!attrs.count("Key") || !attrs.count("Value")) throw ParseError(here + ": needs Key and Value attributes");
    out.push_back({trim(attrs["Key"]), attrs["Value"]});
  }
  return out;
}

inline const ptree& single_child(const ptree& node, const char* tag, const std::string& where) {
  const ptree* found = nullptr;
  for (const auto& [t, child] : node) {
    if (t == tag) {
      if (found) throw ParseError(where + ": more than one <" + tag + ">");
      found = &child;
    }
  }
  if (!found) throw ParseError(where + ": missing <" + tag + ">");
  return *found;
}

// Checks that can be decided from the rule alone.
inline void validate(const AttackRule& r, const std::string& where) {
  const auto& q = r.query;
  const auto& nv = r.new_values;
  if (q.type == PacketType::response && r.packet_to_change == PacketType::request) {
    throw ParseError(where + ": a RESPONSE query cannot change a REQUEST");
  }
  if (q.function && *q.function == modbus::kReadHoldingRegisters) {
    if (r.packet_to_change == PacketType::request && !nv.data.empty()) {
      throw ParseError(where + ": DATA on a read request would change its length");
    }
    if (r.packet_to_change == PacketType::response && nv.starting_address) {
      throw ParseError(where + ": STARTING_ADDRESS on a read response would change its length");
    }
    if (r.packet_to_change == PacketType::response && q.word_count && nv.data.size() > *q.word_count) {
      throw ParseError(where + ": more DATA expressions than WORD_COUNT values");
    }
  }
  if (q.function && (*q.function == modbus::kWriteSingleCoil || *q.function == modbus::kWriteSingleRegister) &&
      nv.data.size() > 1) {
    throw ParseError(where + ": single writes carry one value");
  }
}

inline AttackRule parse_change(const ptree& node, std::size_t index) {
  const std::string where = "Change[" + std::to_string(index + 1) + "]";
  reject_text(node, where);
  AttackRule rule;
  rule.id = index;
  auto attrs = attributes(node, where, {"PacketToChange"});
  if (!attrs.count("PacketToChange")) throw ParseError(where + ": missing PacketToChange attribute");
  rule.packet_to_change = parse_packet_type(attrs["PacketToChange"], where + " PacketToChange");
  for (const auto& [tag, child] : node) {
    if (tag != "<xmlattr>" && tag != "Query" && tag != "NewValues") {
      throw ParseError(where + ": unknown element <" + tag + ">");
    }
  }

  bool have_type = false;
  for (const auto& kv : entries(single_child(node, "Query", where), "QueryEntry", where + "/Query")) {
    const std::string at = where + "/Query " + kv.key;
    auto once = [&](bool present) {
      if (present) throw ParseError(at + ": duplicate entry");
    };
    if (kv.key == "TYPE") {
      once(have_type);
      have_type = true;
      rule.query.type = parse_packet_type(kv.value, at);
    } else if (kv.key == "PLC_IP") {
      once(rule.query.plc_ip.has_value());
      rule.query.plc_ip = trim(kv.value);
    } else if (kv.key == "GLOBAL_STAGE") {
      once(rule.query.global_stage.has_value());
      rule.query.global_stage = static_cast<int>(parse_integer(kv.value, at, 0, 1 << 30));
    } else if (kv.key == "LOCAL_STAGE") {
      once(rule.query.local_stage.has_value());
      rule.query.local_stage = static_cast<int>(parse_integer(kv.value, at, 0, 1 << 30));
    } else if (kv.key == "FUNCTION") {
      once(rule.query.function.has_value());
      rule.query.function = static_cast<std::uint8_t>(parse_integer(kv.value, at, 0, 255));
    } else if (kv.key == "WORD_COUNT") {
      once(rule.query.word_count.has_value());
      rule.query.word_count = static_cast<std::uint16_t>(parse_integer(kv.value, at, 0, 0xFFFF));
    } else if (kv.key == "ADDRESS") {
      rule.query.addresses.push_back(static_cast<std::uint16_t>(parse_integer(kv.value, at, 0, 0xFFFF)));
    } else {
      throw ParseError(where + "/Query: unknown key '" + kv.key + "'");
    }
  }
  if (!have_type) throw ParseError(where + "/Query: mandatory TYPE entry is missing");

  auto& nv = rule.new_values;
  for (const auto& kv : entries(single_child(node, "NewValues", where), "NewValueEntry", where + "/NewValues")) {
    const std::string at = where + "/NewValues " + kv.key;
    auto once = [&](bool present) {
      if (present) throw ParseError(at + ": duplicate entry");
    };
    if (kv.key == "GLOBAL_STAGE") {
      once(nv.global_stage.has_value());
      nv.global_stage = static_cast<int>(parse_integer(kv.value, at, 0, 1 << 30));
    } else if (kv.key == "LOCAL_STAGE") {
      once(nv.local_stage.has_value());
      nv.local_stage = static_cast<int>(parse_integer(kv.value, at, 0, 1 << 30));
    } else if (kv.key == "FUNCTION") {
      once(nv.function.has_value());
      nv.function = static_cast<std::uint8_t>(parse_integer(kv.value, at, 0, 255));
    } else if (kv.key == "STARTING_ADDRESS") {
      once(nv.starting_address.has_value());
      try {
        nv.starting_address = Expr::parse(kv.value);
      } catch (const ParseError& e) {
        throw ParseError(at + ": " + e.what());
      }
    } else if (kv.key == "DATA") {
      once(!nv.data.empty());
      nv.data = parse_data(kv.value, at);
    } else {
      throw ParseError(where + "/NewValues: unknown key '" + kv.key + "'");
    }
  }
  validate(rule, where);
  return rule;
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace detail

/// Parses an IAML document; rules come back in document order.
inline std::vector<AttackRule> parse(const std::string& document) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(document);
  try {
    pt::read_xml(in, tree, pt::xml_parser::no_comments);
  } catch (const pt::xml_parser_error& e) {
    throw ParseError(std::string("malformed XML: ") + e.what());
  }
  if (tree.size() != 1 || tree.begin()->first != "IAML") throw ParseError("root element must be <IAML>");
  const auto& root = tree.begin()->second;
  detail::reject_text(root, "IAML");
  std::vector<AttackRule> rules;
  for (const auto& [tag, child] : root) {
    if (tag != "Change") throw ParseError("IAML: unknown element <" + tag + ">");
    rules.push_back(detail::parse_change(child, rules.size()));
  }
  return rules;
}

inline std::vector<AttackRule> parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

/// Canonical document for `rules`: fixed entry order, one entry per line.
inline std::string print(const std::vector<AttackRule>& rules) {
  using detail::xml_escape;
  std::ostringstream o;
  auto entry = [&](const char* tag, const char* key, const std::string& value) {
    o << "      <" << tag << " Key=\"" << key << "\" Value=\"" << xml_escape(value) << "\"/>\n";
  };
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<IAML>\n";
  for (const auto& r : rules) {
    const auto& q = r.query;
    const auto& nv = r.new_values;
    o << "  <Change PacketToChange=\"" << to_string(r.packet_to_change) << "\">\n    <Query>\n";
    entry("QueryEntry", "TYPE", to_string(q.type));
    if (q.plc_ip) entry("QueryEntry", "PLC_IP", *q.plc_ip);
    if (q.global_stage) entry("QueryEntry", "GLOBAL_STAGE", std::to_string(*q.global_stage));
    if (q.local_stage) entry("QueryEntry", "LOCAL_STAGE", std::to_string(*q.local_stage));
    if (q.function) entry("QueryEntry", "FUNCTION", std::to_string(*q.function));
    if (q.word_count) entry("QueryEntry", "WORD_COUNT", std::to_string(*q.word_count));
    for (auto a : q.addresses) entry("QueryEntry", "ADDRESS", std::to_string(a));
    o << "    </Query>\n    <NewValues>\n";
    if (nv.global_stage) entry("NewValueEntry", "GLOBAL_STAGE", std::to_string(*nv.global_stage));
    if (nv.local_stage) entry("NewValueEntry", "LOCAL_STAGE", std::to_string(*nv.local_stage));
    if (nv.function) entry("NewValueEntry", "FUNCTION", std::to_string(*nv.function));
    if (nv.starting_address) entry("NewValueEntry", "STARTING_ADDRESS", nv.starting_address->to_string());
    if (!nv.data.empty()) {
      std::string joined;
      for (std::size_t i = 0; i < nv.data.size(); ++i) joined += (i ? "," : "") + nv.data[i].to_string();
      entry("NewValueEntry", "DATA", joined);
    }
    o << "    </NewValues>\n  </Change>\n";
  }
  o << "</IAML>\n";
  return o.str();
}

}  // namespace gridghost::iaml
