// gridghost: scenario runner and artifact tools.
//
//   gridghost run scenarios/zero_values.yaml --out runs/zv
//   gridghost plot runs/zv/hmi_capture.jsonl --out fig4_hmi.csv
//   gridghost report runs/zv
//   gridghost fleet --config config/topology.yaml
//   gridghost hmi --config config/topology.yaml --target-base 16020 --api-port 8080

#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "gridghost/harness.hpp"
#include "signals.hpp"

using namespace gridghost;

namespace {

YAML::Node load_yaml(const std::string& path) {
  if (path.empty()) return {};
  return YAML::LoadFile(path);
}

grid::Topology topology_from(const YAML::Node& root) {
  return root ? grid::parse_topology(root) : grid::Topology::default_topology();
}

void print_summary(const harness::RunResult& r) {
  const auto& rep = r.report;
  std::cout << "run directory: " << r.dir.string() << "\n"
            << "wall time: " << r.wall_seconds << " s\n"
            << "frames hmi/plc: " << r.artifacts.hmi.size() << "/" << r.artifacts.plc.size()
            << (rep["frames"]["lengths_preserved"].get<bool>() ? " (lengths preserved)" : " (LENGTH MISMATCH)") << "\n";
  for (const auto& c : rep["commands"])
    std::cout << "command t=" << c["t"] << " " << c["rtu"].get<std::string>() << " intended "
              << c["intended"].get<std::string>() << " executed "
              << (c["executed"].is_null() ? std::string("-") : c["executed"].get<std::string>()) << "\n";
  std::cout << "blackout hidden from HMI: " << (rep["blackout"]["verdict"].get<bool>() ? "yes" : "no") << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GridGhost ICS deception testbed"};
  app.require_subcommand(1);

  std::string scenario_path, out_dir;
  double time_scale = 0;
  int api_port = -1;
  bool verbose = false;
  auto* run = app.add_subcommand("run", "Run a scenario and write its artifacts");
  run->add_option("scenario", scenario_path, "Scenario YAML")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "Run directory (default runs/<name>)");
  run->add_option("--time-scale", time_scale, "Override the scenario time-scale");
  run->add_option("--api-port", api_port, "HMI API port (default ephemeral)");
  run->add_flag("-v,--verbose", verbose);

  std::string capture_path, csv_out, channel, segment;
  auto* plot = app.add_subcommand("plot", "Capture to CSV time series (t, rtu, current, voltage)");
  plot->add_option("capture", capture_path, "Capture JSONL")->required()->check(CLI::ExistingFile);
  plot->add_option("--out", csv_out, "CSV file (default stdout)");
  plot->add_option("--channel", channel, "Only this RTU");
  plot->add_option("--segment", segment, "hmi or plc (default: as recorded)");

  std::string run_dir, report_out;
  auto* report = app.add_subcommand("report", "Recompute the deception report of a run");
  report->add_option("run_dir", run_dir)->required()->check(CLI::ExistingDirectory);
  report->add_option("--out", report_out, "Write here instead of stdout");

  std::string fleet_config;
  auto* fleet = app.add_subcommand("fleet", "Serve the grid and PLC fleet on the configured ports");
  fleet->add_option("--config", fleet_config, "Topology YAML")->check(CLI::ExistingFile);

  std::string hmi_config, hmi_host = "127.0.0.1";
  int target_base = -1, hmi_api_port = 8080;
  double hmi_period = 0.5, hmi_timeout = 1.0;
  auto* hmi_cmd = app.add_subcommand("hmi", "Run the HMI master with its HTTP/WS API");
  hmi_cmd->add_option("--config", hmi_config, "Topology YAML")->check(CLI::ExistingFile);
  hmi_cmd->add_option("--target-host", hmi_host, "Host of the PLCs or proxy");
  hmi_cmd->add_option("--target-base", target_base, "Connect to base + RTU index (e.g. a proxy's listen base)");
  hmi_cmd->add_option("--api-port", hmi_api_port, "HTTP/WS port");
  hmi_cmd->add_option("--period", hmi_period, "Poll period, seconds");
  hmi_cmd->add_option("--timeout", hmi_timeout, "Poll timeout, seconds");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      auto sc = harness::load_scenario(scenario_path);
      if (time_scale > 0) sc.time_scale = time_scale;
      if (out_dir.empty()) out_dir = "runs/" + sc.name;
      harness::RunOptions opt;
      opt.verbose = verbose;
      if (api_port >= 0) opt.api_port = static_cast<std::uint16_t>(api_port);
      std::cout << "running " << sc.name << ": " << sc.duration << " s at " << sc.time_scale << "x\n";
      print_summary(harness::run(sc, out_dir, opt));
    } else if (*plot) {
      auto cap = capture::read_capture(capture_path);
      if (!segment.empty()) cap = capture::select(cap, capture::parse_segment(segment));
      const auto csv = harness::timeseries_csv(harness::samples(cap, channel));
      if (csv_out.empty()) {
        std::cout << csv;
      } else {
        std::ofstream(csv_out) << csv;
      }
    } else if (*report) {
      const auto rep = harness::deception_report(harness::load_run(run_dir)).dump(2);
      if (report_out.empty()) {
        std::cout << rep << "\n";
      } else {
        std::ofstream(report_out) << rep << "\n";
      }
    } else if (*fleet) {
      const auto root = load_yaml(fleet_config);
      const auto topology = topology_from(root);
      grid::GridSim sim(topology);
      plc::Fleet f(plc::parse_fleet(root, topology), sim);
      f.start();
      for (const auto& c : f.bound()) std::cout << c.rtu << " " << c.endpoint() << " unit " << int(c.unit) << "\n";
      tools::wait_for_interrupt();
      f.stop();
    } else if (*hmi_cmd) {
      const auto root = load_yaml(hmi_config);
      const auto topology = topology_from(root);
      hmi::HmiConfig hc;
      for (auto c : plc::parse_fleet(root, topology)) {
        c.host = hmi_host;
        if (target_base >= 0) c.port = static_cast<std::uint16_t>(target_base + plc::rtu_index(c.rtu, 0));
        hc.targets.push_back(c);
      }
      hc.poll_period = hmi_period;
      hc.timeout = hmi_timeout;
      ScenarioClock clock(1.0);
      hmi::HmiService service(hc, clock);
      hmi::HmiApi api(service, "0.0.0.0", static_cast<std::uint16_t>(hmi_api_port));
      api.start();
      service.start();
      std::cout << "hmi api on port " << api.port() << "\n";
      tools::wait_for_interrupt();
      api.stop();
      service.stop();
    }
  } catch (const std::exception& e) {
    std::cerr << "gridghost: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
