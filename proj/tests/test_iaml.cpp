#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "gridghost/iaml.hpp"
#include "support/expr_oracle.hpp"

using namespace gridghost;
using namespace gridghost::iaml;

namespace {

std::string fixture(const std::string& name) { return std::string(GRIDGHOST_SOURCE_DIR) + "/iaml/" + name; }

std::string change(const std::string& to, const std::string& query, const std::string& values) {
  return "<IAML><Change PacketToChange=\"" + to + "\"><Query>" + query + "</Query><NewValues>" + values +
         "</NewValues></Change></IAML>";
}

std::string q(const std::string& k, const std::string& v) { return "<QueryEntry Key=\"" + k + "\" Value=\"" + v + "\"/>"; }
std::string nv(const std::string& k, const std::string& v) {
  return "<NewValueEntry Key=\"" + k + "\" Value=\"" + v + "\"/>";
}

AttackRule one(const std::string& doc) {
  auto rules = parse(doc);
  EXPECT_EQ(rules.size(), 1u);
  return rules.at(0);
}

const PlcRef kRtu01{"RTU_01", "10.0.0.1", "127.0.0.1:15021"};

}  // namespace

TEST(Parse, ListingOneReconstruction) {
  const auto rules = parse_file(fixture("listing1_multistage_plc.xml"));
  ASSERT_EQ(rules.size(), 8u);
  EXPECT_EQ(rules[0].packet_to_change, PacketType::response);
  EXPECT_TRUE(rules[0].arms_on_request());
  EXPECT_EQ(rules[0].query.addresses, std::vector<std::uint16_t>{130});
  EXPECT_EQ(rules[0].query.plc_ip, "10.0.0.1");
  EXPECT_EQ(rules[4].packet_to_change, PacketType::request);
  EXPECT_EQ(rules[4].new_values.global_stage, 1);
  for (std::size_t i = 0; i < rules.size(); ++i) EXPECT_EQ(rules[i].id, i);
}

TEST(Parse, Fixtures) {
  EXPECT_EQ(parse_file(fixture("multistage.xml")).size(), 48u);
  EXPECT_EQ(parse_file(fixture("zero_values.xml")).size(), 6u);
  EXPECT_EQ(parse_file(fixture("half_duplex.xml")).size(), 6u);
  EXPECT_TRUE(parse_file(fixture("empty.xml")).empty());
}

TEST(Parse, ZeroDataIsTwoConstants) {
  auto r = one(change("RESPONSE", q("TYPE", "REQUEST"), nv("DATA", "0,0")));
  ASSERT_EQ(r.new_values.data.size(), 2u);
  EXPECT_EQ(r.new_values.data[0], Expr::constant(0));
  EXPECT_EQ(r.new_values.data[1], Expr::constant(0));
}

TEST(Parse, Errors) {
  auto bad = [](const std::string& doc, const std::string& needle) {
    try {
      parse(doc);
      ADD_FAILURE() << "accepted: " << doc;
    } catch (const ParseError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  bad(change("RESPONSE", q("ADDRESS", "130"), nv("DATA", "0")), "TYPE");
  bad(change("BOTH", q("TYPE", "REQUEST"), ""), "PacketToChange");
  bad(change("RESPONSE", q("TYPE", "REQUEST"), nv("DATA", "X+")), "Change[1]/NewValues DATA");
  bad(change("RESPONSE", q("TYPE", "REQUEST"), nv("DATA", "(X")), "missing ')'");
  bad(change("RESPONSE", q("TYPE", "REQUEST"), nv("DATA", "X/0")), "division");
  bad(change("RESPONSE", q("TYPE", "REQUEST"), nv("DATA", "X/(3-3)")), "division");
  bad(change("RESPONSE", q("TYPE", "REQUEST"), nv("DATA", "70000")), "16 bits");
  bad(change("RESPONSE", q("TYPE", "REQUEST") + q("COLOR", "red"), ""), "unknown key 'COLOR'");
  bad(change("RESPONSE", q("TYPE", "REQUEST"), nv("SPEED", "1")), "unknown key 'SPEED'");
  bad(change("RESPONSE", q("TYPE", "REQUEST") + q("TYPE", "RESPONSE"), ""), "duplicate");
  bad(change("RESPONSE", q("TYPE", "MAYBE"), ""), "neither");
  bad(change("REQUEST", q("TYPE", "RESPONSE"), ""), "cannot change a REQUEST");
  bad(change("REQUEST", q("TYPE", "REQUEST") + q("FUNCTION", "3"), nv("DATA", "1")), "length");
  bad(change("RESPONSE", q("TYPE", "REQUEST") + q("FUNCTION", "3"), nv("STARTING_ADDRESS", "1")), "length");
  bad(change("RESPONSE", q("TYPE", "REQUEST") + q("FUNCTION", "3") + q("WORD_COUNT", "1"), nv("DATA", "1,2")),
      "WORD_COUNT");
  bad(change("RESPONSE", q("TYPE", "REQUEST") + q("FUNCTION", "256"), ""), "outside");
  bad("<IAML><Rule/></IAML>", "<Rule>");
  bad("<Attack/>", "root");
  bad("<IAML><Change", "malformed");
  bad("<IAML><Change PacketToChange=\"REQUEST\"><Query>" + q("TYPE", "REQUEST") + "</Query></Change></IAML>",
      "NewValues");
}

TEST(Match, Examples) {
  auto meta = describe(modbus::make_read_request(1, 1, 129, 4), PacketType::request, kRtu01);
  StageState st;
  EXPECT_TRUE(match(one(change("RESPONSE", q("TYPE", "REQUEST") + q("ADDRESS", "130"), "")), meta, st));
  EXPECT_TRUE(match(one(change("RESPONSE", q("TYPE", "REQUEST") + q("ADDRESS", "132"), "")), meta, st));
  EXPECT_FALSE(match(one(change("RESPONSE", q("TYPE", "REQUEST") + q("ADDRESS", "133"), "")), meta, st));
  EXPECT_FALSE(match(one(change("RESPONSE", q("TYPE", "REQUEST") + q("ADDRESS", "128"), "")), meta, st));
  EXPECT_FALSE(match(one(change("RESPONSE", q("TYPE", "REQUEST") + q("GLOBAL_STAGE", "1"), "")), meta, st));
  st.global_stage = 1;
  EXPECT_TRUE(match(one(change("RESPONSE", q("TYPE", "REQUEST") + q("GLOBAL_STAGE", "1"), "")), meta, st));
  EXPECT_FALSE(match(one(change("RESPONSE", q("TYPE", "REQUEST") + q("LOCAL_STAGE", "1"), "")), meta, st));
  st.local_stage["RTU_01"] = 1;
  EXPECT_TRUE(match(one(change("RESPONSE", q("TYPE", "REQUEST") + q("LOCAL_STAGE", "1"), "")), meta, st));

  const PlcRef rtu06{"RTU_06", "10.0.0.6", "127.0.0.1:15026"};
  auto meta6 = describe(modbus::make_read_request(1, 1, 130, 2), PacketType::request, rtu06);
  EXPECT_FALSE(match(one(change("RESPONSE", q("TYPE", "REQUEST") + q("PLC_IP", "10.0.0.5"), "")), meta6, st));
  EXPECT_TRUE(match(one(change("RESPONSE", q("TYPE", "REQUEST") + q("PLC_IP", "10.0.0.6"), "")), meta6, st));
  EXPECT_TRUE(match(one(change("RESPONSE", q("TYPE", "REQUEST") + q("PLC_IP", "127.0.0.1:15026"), "")), meta6, st));
  EXPECT_FALSE(match(one(change("RESPONSE", q("TYPE", "RESPONSE"), "")), meta6, st));
  EXPECT_FALSE(match(one(change("RESPONSE", q("TYPE", "REQUEST") + q("FUNCTION", "5"), "")), meta6, st));
  EXPECT_FALSE(match(one(change("RESPONSE", q("TYPE", "REQUEST") + q("WORD_COUNT", "4"), "")), meta6, st));

  auto resp = describe(modbus::make_read_response(1, 1, {11391, 2318}), PacketType::response, kRtu01);
  EXPECT_TRUE(match(one(change("RESPONSE", q("TYPE", "RESPONSE") + q("WORD_COUNT", "2"), "")), resp, st));
  EXPECT_FALSE(match(one(change("RESPONSE", q("TYPE", "RESPONSE") + q("ADDRESS", "130"), "")), resp, st));
}

TEST(Apply, Examples) {
  StageState st;
  auto zero = one(change("RESPONSE", q("TYPE", "REQUEST"), nv("DATA", "0,0")));
  EXPECT_EQ(apply(zero, modbus::make_read_response(4, 1, {11391, 2318}), st, "RTU_01").frame,
            modbus::make_read_response(4, 1, {0, 0}));

  auto flip = one(change("REQUEST", q("TYPE", "REQUEST") + q("FUNCTION", "5"), nv("DATA", "65280-X")));
  EXPECT_EQ(apply(flip, modbus::make_write_coil(1, 1, 0, true), st, "RTU_01").frame,
            modbus::make_write_coil(1, 1, 0, false));
  EXPECT_EQ(apply(flip, modbus::make_write_coil(1, 1, 0, false), st, "RTU_01").frame,
            modbus::make_write_coil(1, 1, 0, true));

  auto nominal = one(change("RESPONSE", q("TYPE", "REQUEST"), nv("DATA", "11391-X")));
  EXPECT_EQ(apply(nominal, modbus::make_read_response(1, 1, {2500, 2318}), st, "RTU_01").frame,
            modbus::make_read_response(1, 1, {8891, 2318}));

  auto shift = one(change("REQUEST", q("TYPE", "REQUEST"), nv("STARTING_ADDRESS", "131")));
  EXPECT_EQ(apply(shift, modbus::make_read_request(1, 1, 130, 2), st, "RTU_01").frame,
            modbus::make_read_request(1, 1, 131, 2));
  auto shift_x = one(change("REQUEST", q("TYPE", "REQUEST"), nv("STARTING_ADDRESS", "X+1")));
  EXPECT_EQ(apply(shift_x, modbus::make_read_request(1, 1, 130, 2), st, "RTU_01").frame,
            modbus::make_read_request(1, 1, 131, 2));

  auto staged = one(change("REQUEST", q("TYPE", "REQUEST"), nv("GLOBAL_STAGE", "2") + nv("LOCAL_STAGE", "1")));
  auto r = apply(staged, modbus::make_write_coil(1, 1, 0, true), st, "RTU_03");
  EXPECT_EQ(r.frame, modbus::make_write_coil(1, 1, 0, true));
  EXPECT_EQ(r.stages.global_stage, 2);
  EXPECT_EQ(r.stages.local("RTU_03"), 1);
  EXPECT_EQ(r.stages.local("RTU_01"), 0);
  EXPECT_EQ(st.global_stage, 0);

  auto fn = one(change("REQUEST", q("TYPE", "REQUEST"), nv("FUNCTION", "4")));
  EXPECT_EQ(apply(fn, modbus::make_read_request(1, 1, 130, 2), st, "RTU_01").frame.function, 4);
}

TEST(Apply, RuleErrors) {
  StageState st;
  auto three = one(change("RESPONSE", q("TYPE", "REQUEST"), nv("DATA", "1,2,3")));
  EXPECT_THROW(apply(three, modbus::make_read_response(1, 1, {11391, 2318}), st, "RTU_01"), RuleError);
  auto div = one(change("RESPONSE", q("TYPE", "REQUEST"), nv("DATA", "100/X")));
  EXPECT_THROW(apply(div, modbus::make_read_response(1, 1, {0}), st, "RTU_01"), RuleError);
  EXPECT_EQ(apply(div, modbus::make_read_response(1, 1, {7}), st, "RTU_01").frame, modbus::make_read_response(1, 1, {14}));
  auto addr = one(change("RESPONSE", q("TYPE", "REQUEST"), nv("STARTING_ADDRESS", "1")));
  EXPECT_THROW(apply(addr, modbus::make_read_response(1, 1, {1}), st, "RTU_01"), RuleError);
  auto data = one(change("REQUEST", q("TYPE", "REQUEST"), nv("DATA", "1")));
  EXPECT_THROW(apply(data, modbus::make_read_request(1, 1, 130, 2), st, "RTU_01"), RuleError);
  EXPECT_THROW(apply(data, modbus::make_exception(1, 1, 3, 2), st, "RTU_01"), RuleError);
}

TEST(Properties, LengthPreservedAndDeterministic) {
  std::mt19937 rng(11);
  const std::vector<std::string> exprs{"0", "X", "X+1", "65280-X", "X*3", "(X+7)/2", "11391-X", "X-65535"};
  for (int i = 0; i < 2000; ++i) {
    const auto e = exprs[rng() % exprs.size()];
    modbus::Frame f;
    AttackRule r;
    const std::size_t words = 1 + rng() % 10;
    switch (rng() % 3) {
      case 0: {
        std::vector<std::uint16_t> v(words);
        for (auto& x : v) x = static_cast<std::uint16_t>(rng());
        f = modbus::make_read_response(static_cast<std::uint16_t>(rng()), 1, v);
        std::string d = e;
        for (std::size_t k = 1; k < 1 + rng() % words; ++k) d += "," + e;
        r = one(change("RESPONSE", q("TYPE", "REQUEST"), nv("DATA", d)));
        break;
      }
      case 1:
        f = modbus::make_read_request(static_cast<std::uint16_t>(rng()), 1, static_cast<std::uint16_t>(rng()), words);
        r = one(change("REQUEST", q("TYPE", "REQUEST"), nv("STARTING_ADDRESS", e)));
        break;
      default:
        f = modbus::make_write_coil(static_cast<std::uint16_t>(rng()), 1, 0, rng() % 2);
        r = one(change("REQUEST", q("TYPE", "REQUEST"), nv("DATA", e)));
    }
    StageState st;
    try {
      const auto a = apply(r, f, st, "RTU_01");
      ASSERT_EQ(modbus::encode_frame(a.frame).size(), modbus::encode_frame(f).size());
      ASSERT_EQ(a.frame.header, f.header);
      ASSERT_EQ(apply(r, f, st, "RTU_01").frame, a.frame);
    } catch (const RuleError&) {
      // 100/X-style runtime errors are allowed; lengths never change
    }
  }
}

TEST(Properties, PrintParseRoundTrip) {
  for (const auto& entry : std::filesystem::directory_iterator(std::string(GRIDGHOST_SOURCE_DIR) + "/iaml")) {
    if (entry.path().extension() != ".xml") continue;
    const auto rules = parse_file(entry.path().string());
    const auto text = print(rules);
    EXPECT_EQ(parse(text), rules) << entry.path();
    EXPECT_EQ(print(parse(text)), text) << entry.path();
  }
}

// Brute-force interpreter over an explicit tree.
TEST(Properties, EvaluatorMatchesTreeInterpreter) {
  std::mt19937 rng(2024);
  int cases = 0, rejected = 0, runtime = 0;
  while (cases < 10000) {
    const auto tree = oracle::random_tree(rng, 1 + static_cast<int>(rng() % 5));
    const auto text = oracle::render(*tree, rng);
    if (oracle::static_div_zero(*tree)) {
      EXPECT_THROW(Expr::parse(text), ParseError) << text;
      ++rejected;
      continue;
    }
    const Expr e = Expr::parse(text);
    for (int k = 0; k < 4 && cases < 10000; ++k, ++cases) {
      const auto x = static_cast<std::uint16_t>(k == 0 ? 0 : rng() % 65536);
      std::optional<std::uint32_t> want;
      try {
        want = oracle::eval(*tree, x);
      } catch (const oracle::DivZero&) {
      }
      if (want) {
        ASSERT_EQ(e.eval(x), *want) << text << " X=" << x;
      } else {
        ++runtime;
        ASSERT_THROW(e.eval(x), RuleError) << text << " X=" << x;
      }
    }
    ASSERT_EQ(Expr::parse(e.to_string()), e) << text;
  }
  EXPECT_GT(rejected, 0);
  EXPECT_GT(runtime, 0);
}

TEST(Expr, PrecedenceAndAssociativity) {
  EXPECT_EQ(Expr::parse("10-3-2").eval(0), 5);
  EXPECT_EQ(Expr::parse("10-(3-2)").eval(0), 9);
  EXPECT_EQ(Expr::parse("2+3*4").eval(0), 14);
  EXPECT_EQ(Expr::parse("(2+3)*4").eval(0), 20);
  EXPECT_EQ(Expr::parse("100/10/5").eval(0), 2);
  EXPECT_EQ(Expr::parse("0-1").eval(0), 65535);
  EXPECT_EQ(Expr::parse("X+5").eval(65535), 4);
  EXPECT_EQ(Expr::parse("10-(3-2)").to_string(), "10-(3-2)");
  EXPECT_EQ(Expr::parse("((10-3))-2").to_string(), "10-3-2");
  EXPECT_THROW(Expr::parse(""), ParseError);
  EXPECT_THROW(Expr::parse("X X"), ParseError);
  EXPECT_THROW(Expr::parse("-1"), ParseError);
}
