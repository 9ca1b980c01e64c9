// attack-proxy: in-path Modbus/TCP rewriter driven by an IAML script.
//
//   attack-proxy --config config/topology.yaml --iaml iaml/zero_values.xml --listen-base 16020
//
// Channel N listens on listen-base + N and forwards to the PLC configured
// for RTU N. GET /status on the status port reports channels and stages.

#include <iostream>

#include <CLI11.hpp>

#include "gridghost/http.hpp"
#include "gridghost/proxy.hpp"
#include "signals.hpp"

using namespace gridghost;

int main(int argc, char** argv) {
  CLI::App app{"IAML-driven Modbus/TCP MITM proxy"};
  std::string config, iaml_path, listen_host = "127.0.0.1", capture_dir;
  bool half_duplex = false;
  int listen_base = 16020, status_port = 16000;
  double time_scale = 1.0;
  std::vector<std::string> windows;
  app.add_option("--config", config, "Topology YAML with the PLC list")->check(CLI::ExistingFile);
  app.add_option("--iaml", iaml_path, "Attack script")->check(CLI::ExistingFile);
  app.add_flag("--half-duplex", half_duplex, "Rewrite HMI->PLC only; responses pass verbatim");
  app.add_option("--listen-base", listen_base, "Channel N listens on base + N");
  app.add_option("--listen-host", listen_host);
  app.add_option("--status-port", status_port, "HTTP status port (0 disables)");
  app.add_option("--window", windows, "Active window START,END in seconds since start (repeatable)");
  app.add_option("--time-scale", time_scale, "Clock speed for windows and timestamps");
  app.add_option("--capture-dir", capture_dir, "Write hmi/plc capture JSONL here on exit");
  CLI11_PARSE(app, argc, argv);

  try {
    YAML::Node root;
    if (!config.empty()) root = YAML::LoadFile(config);
    const auto topology = root ? grid::parse_topology(root) : grid::Topology::default_topology();
    const auto plcs = plc::parse_fleet(root, topology);
    std::vector<iaml::AttackRule> rules;
    if (!iaml_path.empty()) rules = iaml::parse_file(iaml_path);

    proxy::EngineOptions opt;
    opt.half_duplex = half_duplex;
    if (!windows.empty()) {
      opt.windows.emplace();
      for (const auto& w : windows) {
        auto comma = w.find(',');
        if (comma == std::string::npos) throw std::invalid_argument("window must be START,END");
        opt.windows->push_back({std::stod(w.substr(0, comma)), std::stod(w.substr(comma + 1))});
      }
    }
    ScenarioClock clock(time_scale);
    proxy::AttackEngine engine(rules, opt, &clock);
    capture::CaptureSink hmi_tap, plc_tap;
    proxy::DispatcherConfig dc;
    dc.identities = plcs;
    dc.upstreams = plcs;
    dc.listen_host = listen_host;
    dc.listen_base = static_cast<std::uint16_t>(listen_base);
    if (!capture_dir.empty()) dc.taps = {&hmi_tap, &plc_tap};
    proxy::Dispatcher dispatcher(engine, dc);
    dispatcher.start();
    std::cerr << "[attack-proxy] " << rules.size() << " rules, " << dispatcher.channel_count() << " channels, "
              << dispatcher.attacked_count() << " attacked" << (half_duplex ? ", half-duplex" : "") << "\n";
    for (const auto& c : plcs)
      std::cerr << "[attack-proxy] " << c.rtu << " :" << dispatcher.listen_port(c.rtu) << " -> " << c.endpoint() << "\n";

    std::unique_ptr<http::Server> status;
    if (status_port > 0) {
      status = std::make_unique<http::Server>(listen_host, static_cast<std::uint16_t>(status_port), [&](const http::Request& r) {
        if (r.target == "/status") return http::Response{200, dispatcher.status().dump(2)};
        return http::Response{404, R"({"error":"not found"})"};
      });
      status->start();
      std::cerr << "[attack-proxy] status on http://" << listen_host << ":" << status->port() << "/status\n";
    }
    tools::wait_for_interrupt();
    if (status) status->stop();
    dispatcher.stop();
    if (!capture_dir.empty()) {
      std::filesystem::create_directories(capture_dir);
      capture::write_capture(capture_dir + "/hmi_capture.jsonl", hmi_tap.records());
      capture::write_capture(capture_dir + "/plc_capture.jsonl", plc_tap.records());
    }
  } catch (const std::exception& e) {
    std::cerr << "attack-proxy: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
