#include <thread>

#include <gtest/gtest.h>

#include "gridghost/proxy.hpp"

using namespace gridghost;
using namespace gridghost::proxy;
using namespace std::chrono_literals;

namespace {

std::string fixture(const std::string& name) { return std::string(GRIDGHOST_SOURCE_DIR) + "/iaml/" + name; }

iaml::PlcRef ref(int n) {
  char rtu[16];
  std::snprintf(rtu, sizeof rtu, "RTU_%02d", n);
  return {rtu, "10.0.0." + std::to_string(n), "127.0.0.1:" + std::to_string(15020 + n)};
}

std::vector<plc::PlcConfig> fleet_configs() { return plc::parse_fleet(YAML::Node(), grid::Topology::default_topology()); }

const auto kRead = [](std::uint16_t tid) { return modbus::make_read_request(tid, 1, 130, 2); };

}  // namespace

TEST(Engine, ZeroValuesArmsOnRequestAndRewritesResponse) {
  AttackEngine e(iaml::parse_file(fixture("zero_values.xml")), {});
  auto ch = e.make_channel(ref(1));
  auto q = e.on_request(*ch, kRead(10), 1.0);
  EXPECT_EQ(q.frame, kRead(10));
  EXPECT_FALSE(q.rewritten);
  EXPECT_EQ(ch->armed(), 1u);
  auto r = e.on_response(*ch, modbus::make_read_response(10, 1, {11391, 2318}), 1.1);
  EXPECT_EQ(r.frame, modbus::make_read_response(10, 1, {0, 0}));
  EXPECT_TRUE(r.rewritten);
  EXPECT_EQ(ch->armed(), 0u);
  // A response whose TID was never armed passes untouched.
  const auto other = modbus::make_read_response(11, 1, {11391, 2318});
  EXPECT_EQ(e.on_response(*ch, other, 1.2).frame, other);
  // Breaker polls do not match ADDRESS=130.
  e.on_request(*ch, modbus::make_read_request(12, 1, 1, 1), 1.3);
  EXPECT_EQ(ch->armed(), 0u);
  EXPECT_EQ(ch->rewrites_response.load(), 1u);
}

TEST(Engine, WindowsGateArmingNotApplication) {
  EngineOptions opt;
  opt.windows = std::vector<Window>{{10, 20}};
  AttackEngine e(iaml::parse_file(fixture("zero_values.xml")), opt);
  auto ch = e.make_channel(ref(2));
  e.on_request(*ch, kRead(1), 5);
  EXPECT_EQ(ch->armed(), 0u);
  EXPECT_EQ(e.on_response(*ch, modbus::make_read_response(1, 1, {7391, 2318}), 5.1).frame,
            modbus::make_read_response(1, 1, {7391, 2318}));
  e.on_request(*ch, kRead(2), 19.99);
  EXPECT_EQ(e.on_response(*ch, modbus::make_read_response(2, 1, {7391, 2318}), 20.05).frame,
            modbus::make_read_response(2, 1, {0, 0}));
  EXPECT_TRUE(e.active(10));
  EXPECT_TRUE(e.active(20));
  EXPECT_FALSE(e.active(20.01));
}

TEST(Engine, HalfDuplexShiftsRequestsOnly) {
  EngineOptions opt;
  opt.half_duplex = true;
  auto rules = iaml::parse_file(fixture("half_duplex.xml"));
  rules.push_back(iaml::parse_file(fixture("zero_values.xml")).front());
  AttackEngine e(rules, opt);
  auto ch = e.make_channel(ref(1));
  EXPECT_EQ(e.on_request(*ch, kRead(3), 0).frame, modbus::make_read_request(3, 1, 131, 2));
  EXPECT_EQ(ch->armed(), 0u);
  const auto resp = modbus::make_read_response(3, 1, {2318, 0});
  EXPECT_EQ(e.on_response(*ch, resp, 0.1).frame, resp);
  const auto brk = modbus::make_read_request(4, 1, 1, 1);
  EXPECT_EQ(e.on_request(*ch, brk, 0.2).frame, brk);
}

TEST(Engine, MultistageWalkthrough) {
  AttackEngine e(iaml::parse_file(fixture("listing1_multistage_plc.xml")), {});
  auto ch = e.make_channel(ref(1));
  auto ch2 = e.make_channel(ref(2));
  EXPECT_FALSE(ch2->attacked());

  // Stage 0: readings hidden.
  e.on_request(*ch, kRead(1), 0);
  EXPECT_EQ(e.on_response(*ch, modbus::make_read_response(1, 1, {11391, 2318}), 0).frame,
            modbus::make_read_response(1, 1, {0, 0}));
  const auto brk = modbus::make_read_response(2, 1, {1});
  e.on_request(*ch, modbus::make_read_request(2, 1, 1, 1), 0);
  EXPECT_EQ(e.on_response(*ch, brk, 0).frame, brk);

  // First command: open becomes close, the echo is restored, stage 1.
  auto cmd = e.on_request(*ch, modbus::make_write_coil(3, 1, 0, false), 1);
  EXPECT_EQ(cmd.frame, modbus::make_write_coil(3, 1, 0, true));
  EXPECT_EQ(e.on_response(*ch, modbus::make_write_coil(3, 1, 0, true), 1).frame, modbus::make_write_coil(3, 1, 0, false));
  EXPECT_EQ(e.stages().global_stage, 1);
  EXPECT_EQ(e.stages().local("RTU_01"), 1);

  e.on_request(*ch, kRead(4), 2);
  EXPECT_EQ(e.on_response(*ch, modbus::make_read_response(4, 1, {2500, 2318}), 2).frame,
            modbus::make_read_response(4, 1, {8891, 0}));
  e.on_request(*ch, modbus::make_read_request(5, 1, 1, 1), 2);
  EXPECT_EQ(e.on_response(*ch, modbus::make_read_response(5, 1, {1}), 2).frame, modbus::make_read_response(5, 1, {0}));

  // Second command: close becomes open, stage 2 shows nominal values.
  EXPECT_EQ(e.on_request(*ch, modbus::make_write_coil(6, 1, 0, true), 3).frame, modbus::make_write_coil(6, 1, 0, false));
  EXPECT_EQ(e.on_response(*ch, modbus::make_write_coil(6, 1, 0, false), 3).frame, modbus::make_write_coil(6, 1, 0, true));
  EXPECT_EQ(e.stages().global_stage, 2);
  e.on_request(*ch, kRead(7), 4);
  EXPECT_EQ(e.on_response(*ch, modbus::make_read_response(7, 1, {0, 0}), 4).frame,
            modbus::make_read_response(7, 1, {11391, 2318}));

  // Any further command stays inverted.
  EXPECT_EQ(e.on_request(*ch, modbus::make_write_coil(8, 1, 0, false), 5).frame, modbus::make_write_coil(8, 1, 0, true));
  EXPECT_EQ(e.stages().global_stage, 2);
  EXPECT_EQ((std::vector<std::pair<double, int>>{{1, 1}, {3, 2}}), e.stage_log());
}

TEST(Engine, UnmatchedFramesAreUntouched) {
  AttackEngine e(iaml::parse_file(fixture("multistage.xml")), {});
  auto ch = e.make_channel(ref(11));
  EXPECT_FALSE(ch->attacked());
  for (std::uint16_t tid = 0; tid < 50; ++tid) {
    EXPECT_EQ(e.on_request(*ch, kRead(tid), 0).frame, kRead(tid));
    const auto r = modbus::make_read_response(tid, 1, {18076, 2318});
    EXPECT_EQ(e.on_response(*ch, r, 0).frame, r);
  }
  EXPECT_EQ(ch->frames_in_query.load(), 50u);
}

TEST(Engine, FaultsFailOpen) {
  const auto rules = iaml::parse("<IAML><Change PacketToChange=\"RESPONSE\"><Query>"
                                 "<QueryEntry Key=\"TYPE\" Value=\"REQUEST\"/></Query><NewValues>"
                                 "<NewValueEntry Key=\"DATA\" Value=\"100/X,1\"/>"
                                 "<NewValueEntry Key=\"GLOBAL_STAGE\" Value=\"3\"/></NewValues></Change></IAML>");
  AttackEngine e(rules, {});
  auto ch = e.make_channel(ref(1));
  e.on_request(*ch, kRead(1), 0);
  const auto zero = modbus::make_read_response(1, 1, {0, 5});
  EXPECT_EQ(e.on_response(*ch, zero, 0).frame, zero);
  EXPECT_EQ(ch->faults.load(), 1u);
  EXPECT_EQ(e.stages().global_stage, 0);
  ASSERT_EQ(e.faults().size(), 1u);
  EXPECT_NE(e.faults()[0].find("division"), std::string::npos);
  // Too few slots for two expressions.
  e.on_request(*ch, modbus::make_read_request(2, 1, 130, 1), 0);
  const auto one = modbus::make_read_response(2, 1, {4});
  EXPECT_EQ(e.on_response(*ch, one, 0).frame, one);
  EXPECT_EQ(ch->faults.load(), 2u);
  e.on_request(*ch, kRead(3), 0);
  EXPECT_EQ(e.on_response(*ch, modbus::make_read_response(3, 1, {4, 9}), 0).frame, modbus::make_read_response(3, 1, {25, 1}));
  EXPECT_EQ(e.stages().global_stage, 3);
}

TEST(Engine, ArmedTidsEvictFifo) {
  AttackEngine e(iaml::parse_file(fixture("zero_values.xml")), {});
  auto ch = e.make_channel(ref(1));
  for (std::uint16_t tid = 0; tid < 70; ++tid) e.on_request(*ch, kRead(tid), 0);
  EXPECT_EQ(ch->armed(), kTidRetention);
  EXPECT_EQ(ch->evicted.load(), 6u);
  const auto old = modbus::make_read_response(5, 1, {11391, 2318});
  EXPECT_EQ(e.on_response(*ch, old, 0).frame, old);
  EXPECT_EQ(e.on_response(*ch, modbus::make_read_response(6, 1, {11391, 2318}), 0).frame,
            modbus::make_read_response(6, 1, {0, 0}));
  // Re-arming an armed TID does not duplicate it.
  e.on_request(*ch, kRead(69), 0);
  EXPECT_EQ(ch->armed(), kTidRetention - 1);
}

TEST(Engine, TidCoherencePerChannel) {
  AttackEngine e(iaml::parse_file(fixture("zero_values.xml")), {});
  auto a = e.make_channel(ref(1));
  auto b = e.make_channel(ref(2));
  e.on_request(*a, kRead(9), 0);
  const auto r = modbus::make_read_response(9, 1, {7391, 2318});
  EXPECT_EQ(e.on_response(*b, r, 0).frame, r);
  EXPECT_EQ(e.on_response(*a, r, 0).frame, modbus::make_read_response(9, 1, {0, 0}));
}

TEST(Engine, BindsSixOfEleven) {
  AttackEngine e(iaml::parse_file(fixture("zero_values.xml")), {});
  int attacked = 0;
  for (int n = 1; n <= 11; ++n) {
    auto ch = e.make_channel(ref(n));
    if (ch->attacked()) {
      ++attacked;
      EXPECT_LE(n, 6);
      EXPECT_EQ(ch->bound_rules().size(), 1u);
    }
  }
  EXPECT_EQ(attacked, 6);
  AttackEngine any(iaml::parse("<IAML><Change PacketToChange=\"REQUEST\"><Query><QueryEntry Key=\"TYPE\" "
                               "Value=\"REQUEST\"/></Query><NewValues/></Change></IAML>"),
                   {});
  EXPECT_TRUE(any.make_channel(ref(9))->attacked());
  AttackEngine by_endpoint(iaml::parse("<IAML><Change PacketToChange=\"REQUEST\"><Query><QueryEntry Key=\"TYPE\" "
                                       "Value=\"REQUEST\"/><QueryEntry Key=\"PLC_IP\" Value=\"127.0.0.1:15029\"/>"
                                       "</Query><NewValues/></Change></IAML>"),
                           {});
  EXPECT_TRUE(by_endpoint.make_channel(ref(9))->attacked());
  EXPECT_FALSE(by_endpoint.make_channel(ref(8))->attacked());
}

// Stage writes from some channels must be visible to every channel's next frame.
TEST(Engine, StageChangesAreLinearizable) {
  constexpr int kStages = 120;
  std::string doc = "<IAML>";
  for (int k = 0; k < kStages; ++k) {
    doc += "<Change PacketToChange=\"REQUEST\"><Query><QueryEntry Key=\"TYPE\" Value=\"REQUEST\"/>"
           "<QueryEntry Key=\"FUNCTION\" Value=\"5\"/><QueryEntry Key=\"GLOBAL_STAGE\" Value=\"" +
           std::to_string(k) + "\"/></Query><NewValues><NewValueEntry Key=\"GLOBAL_STAGE\" Value=\"" +
           std::to_string(k + 1) + "\"/></NewValues></Change>";
  }
  for (int k = 0; k <= kStages; ++k) {
    doc += "<Change PacketToChange=\"RESPONSE\"><Query><QueryEntry Key=\"TYPE\" Value=\"RESPONSE\"/>"
           "<QueryEntry Key=\"FUNCTION\" Value=\"3\"/><QueryEntry Key=\"GLOBAL_STAGE\" Value=\"" +
           std::to_string(k) + "\"/></Query><NewValues><NewValueEntry Key=\"DATA\" Value=\"" + std::to_string(k) +
           "\"/></NewValues></Change>";
  }
  doc += "</IAML>";
  AttackEngine e(iaml::parse(doc), {});
  std::vector<std::unique_ptr<ChannelState>> chans;
  for (int n = 1; n <= 11; ++n) chans.push_back(e.make_channel(ref(n)));

  std::atomic<int> published{0};
  std::atomic<bool> failed{false};
  std::vector<std::thread> threads;
  for (int w = 0; w < 3; ++w) {
    threads.emplace_back([&, w] {
      for (int i = 0; i < kStages / 3; ++i) {
        e.on_request(*chans[w], modbus::make_write_coil(static_cast<std::uint16_t>(i), 1, 0, true));
        const int now = e.stages().global_stage;
        int p = published.load();
        while (p < now && !published.compare_exchange_weak(p, now)) {
        }
      }
    });
  }
  for (int rd = 3; rd < 11; ++rd) {
    threads.emplace_back([&, rd] {
      int last = 0;
      for (int i = 0; i < 3000; ++i) {
        const int floor = published.load();
        auto out = e.on_response(*chans[rd], modbus::make_read_response(static_cast<std::uint16_t>(i), 1, {999}));
        const int seen = modbus::read_u16(out.frame.payload, 1);
        if (seen < floor || seen < last) failed = true;
        last = seen;
      }
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_FALSE(failed.load());
  EXPECT_EQ(e.stages().global_stage, kStages);
  const auto log = e.stage_log();
  ASSERT_EQ(log.size(), static_cast<std::size_t>(kStages));
  for (std::size_t i = 0; i < log.size(); ++i) {
    EXPECT_EQ(log[i].second, static_cast<int>(i) + 1);
    if (i) {
      EXPECT_GE(log[i].first, log[i - 1].first);
    }
  }
}

// ---------------------------------------------------------------------------
// Over TCP

namespace {

struct Bench {
  grid::GridSim sim{grid::Topology::default_topology()};
  plc::Fleet fleet{fleet_configs(), sim, true};
  capture::CaptureSink hmi, plc;
  AttackEngine engine;
  Dispatcher dispatcher;

  explicit Bench(std::vector<iaml::AttackRule> rules, EngineOptions opt = {})
      : engine(std::move(rules), opt), dispatcher(engine, make_config()) {
    fleet.start();
    dispatcher.start();
  }
  ~Bench() {
    dispatcher.stop();
    fleet.stop();
  }

  DispatcherConfig make_config() {
    DispatcherConfig c;
    c.identities = fleet_configs();
    c.upstreams = fleet.bound();
    c.taps = {&hmi, &plc};
    return c;
  }
};

std::vector<modbus::Frame> roundtrip(const net::Socket& s, const std::vector<modbus::Frame>& reqs) {
  modbus::Bytes wire;
  for (const auto& f : reqs) {
    auto b = modbus::encode_frame(f);
    wire.insert(wire.end(), b.begin(), b.end());
  }
  s.send_all(wire);
  modbus::StreamDecoder dec;
  std::vector<modbus::Frame> got;
  std::vector<std::uint8_t> buf(8192);
  auto deadline = std::chrono::steady_clock::now() + 5s;
  while (got.size() < reqs.size() && std::chrono::steady_clock::now() < deadline) {
    auto n = s.recv_some(buf, 50ms);
    if (!n) continue;
    if (*n == 0) break;
    for (auto& f : dec.feed(std::span(buf.data(), *n))) got.push_back(std::move(f));
  }
  return got;
}

}  // namespace

TEST(Proxy, TransparentWithEmptyRules) {
  Bench b({});
  EXPECT_EQ(b.dispatcher.channel_count(), 11u);
  EXPECT_EQ(b.dispatcher.attacked_count(), 0u);
  std::size_t sent = 0;
  for (const char* rtu : {"RTU_01", "RTU_07", "RTU_11"}) {
    auto s = net::connect_to("127.0.0.1", b.dispatcher.listen_port(rtu), 1s);
    for (int burst = 0; burst < 10; ++burst) {
      std::vector<modbus::Frame> reqs;
      for (int i = 0; i < 40; ++i) {
        auto tid = static_cast<std::uint16_t>(burst * 40 + i);
        reqs.push_back(i % 3 == 0 ? modbus::make_read_request(tid, 1, 200, 4)
                                  : i % 3 == 1 ? kRead(tid) : modbus::make_read_request(tid, 1, 300, 1));
      }
      auto got = roundtrip(s, reqs);
      ASSERT_EQ(got.size(), reqs.size());
      for (std::size_t i = 0; i < got.size(); ++i) EXPECT_EQ(got[i].header.tid, reqs[i].header.tid);
      sent += reqs.size();
    }
  }
  std::this_thread::sleep_for(100ms);
  const auto hmi = b.hmi.records();
  const auto plc = b.plc.records();
  ASSERT_EQ(hmi.size(), 2 * sent);
  ASSERT_EQ(plc.size(), hmi.size());
  for (std::size_t i = 0; i < hmi.size(); ++i) {
    ASSERT_EQ(hmi[i].raw, plc[i].raw);
    ASSERT_EQ(hmi[i].dir, plc[i].dir);
  }
  EXPECT_EQ(b.dispatcher.status()["channels"][0]["frames_query"], 400);
}

TEST(Proxy, ZeroValuesOverTcp) {
  Bench b(iaml::parse_file(fixture("zero_values.xml")));
  EXPECT_EQ(b.dispatcher.attacked_count(), 6u);
  auto s1 = net::connect_to("127.0.0.1", b.dispatcher.listen_port("RTU_01"), 1s);
  auto got = roundtrip(s1, {kRead(1), modbus::make_read_request(2, 1, 1, 1)});
  ASSERT_EQ(got.size(), 2u);
  EXPECT_EQ(got[0], modbus::make_read_response(1, 1, {0, 0}));
  EXPECT_EQ(got[1], modbus::make_read_response(2, 1, {1}));
  auto s11 = net::connect_to("127.0.0.1", b.dispatcher.listen_port("RTU_11"), 1s);
  EXPECT_EQ(roundtrip(s11, {kRead(1)}).at(0), modbus::make_read_response(1, 1, {18076, 2318}));
  std::this_thread::sleep_for(50ms);
  const auto plc = capture::select(b.plc.records(), capture::Segment::plc, "RTU_01");
  const auto hmi = capture::select(b.hmi.records(), capture::Segment::hmi, "RTU_01");
  auto first_response = [](const capture::Capture& c) {
    return std::find_if(c.begin(), c.end(), [](const auto& r) { return r.dir == capture::Dir::response; });
  };
  const auto p = first_response(plc), h = first_response(hmi);
  ASSERT_NE(p, plc.end());
  ASSERT_NE(h, hmi.end());
  EXPECT_EQ(p->values, (std::vector<std::uint16_t>{11391, 2318}));
  EXPECT_EQ(h->values, (std::vector<std::uint16_t>{0, 0}));
  EXPECT_EQ(h->raw_len, p->raw_len);
}

TEST(Proxy, RefusesSecondClientAndAcceptsAfterDisconnect) {
  Bench b({});
  const auto port = b.dispatcher.listen_port("RTU_03");
  {
    auto a = net::connect_to("127.0.0.1", port, 1s);
    ASSERT_EQ(roundtrip(a, {kRead(1)}).size(), 1u);
    auto c = net::connect_to("127.0.0.1", port, 1s);
    std::vector<std::uint8_t> buf(8);
    std::optional<std::size_t> n;
    for (int i = 0; i < 40 && !n; ++i) n = c.recv_some(buf, 50ms);
    ASSERT_TRUE(n);
    EXPECT_EQ(*n, 0u);
  }
  std::vector<modbus::Frame> got;
  for (int i = 0; i < 50 && got.empty(); ++i) {
    std::this_thread::sleep_for(50ms);
    try {
      auto d = net::connect_to("127.0.0.1", port, 1s);
      got = roundtrip(d, {kRead(2)});
    } catch (const std::exception&) {
    }
  }
  ASSERT_EQ(got.size(), 1u);
  EXPECT_EQ(got[0], modbus::make_read_response(2, 1, {3891, 2318}));
  EXPECT_EQ(b.dispatcher.channel("RTU_03").status()["refused"], 1);
}

TEST(Proxy, UnreachableUpstreamIsReported) {
  AttackEngine e({}, {});
  auto cfg = fleet_configs();
  DispatcherConfig c;
  c.identities = {cfg[0]};
  auto dead = cfg[0];
  {
    net::TcpListener probe("127.0.0.1", 0);
    dead.port = probe.port();
  }
  c.upstreams = {dead};
  c.retry = {3, 10ms, 100ms};
  Dispatcher d(e, c);
  d.start();
  auto s = net::connect_to("127.0.0.1", d.listen_port("RTU_01"), 1s);
  std::vector<std::uint8_t> buf(8);
  std::optional<std::size_t> n;
  for (int i = 0; i < 40 && !n; ++i) n = s.recv_some(buf, 50ms);
  ASSERT_TRUE(n);
  EXPECT_EQ(*n, 0u);
  auto st = d.status()["channels"][0];
  EXPECT_EQ(st["upstream_failures"], 3);
  EXPECT_NE(st["last_error"].get<std::string>().find("upstream"), std::string::npos);
  d.stop();
}
