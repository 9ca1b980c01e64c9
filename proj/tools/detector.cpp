// detector: learn per-channel protocol cycles, then classify captures.
//
//   detector learn runs/clean/hmi_capture.jsonl runs/clean/plc_capture.jsonl --out model.json
//   detector classify --model model.json runs/half-duplex/plc_capture.jsonl

#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "gridghost/detector.hpp"

using namespace gridghost;

int main(int argc, char** argv) {
  CLI::App app{"GW-model protocol anomaly detector"};
  app.require_subcommand(1);

  std::vector<std::string> inputs;
  std::string model_out = "model.json";
  double rarity = 0.05;
  auto* learn = app.add_subcommand("learn", "Learn a model from attack-free captures");
  learn->add_option("captures", inputs, "Capture JSONL files")->required()->check(CLI::ExistingFile);
  learn->add_option("--out", model_out, "Model file");
  learn->add_option("--rarity", rarity, "Symbols rarer than this fraction are whitelisted");

  std::string model_in, capture_in, report_out;
  bool fail_on_anomaly = false;
  auto* classify = app.add_subcommand("classify", "Classify a capture against a model");
  classify->add_option("capture", capture_in)->required()->check(CLI::ExistingFile);
  classify->add_option("--model", model_in)->required()->check(CLI::ExistingFile);
  classify->add_option("--out", report_out, "Report file (default stdout)");
  classify->add_flag("--fail-on-anomaly", fail_on_anomaly, "Exit 2 if any event is not Normal");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*learn) {
      capture::Capture all;
      for (const auto& f : inputs) {
        auto c = capture::read_capture(f);
        all.insert(all.end(), c.begin(), c.end());
      }
      detector::Options opt;
      opt.rarity = rarity;
      const auto model = detector::learn_all(all, opt);
      std::ofstream(model_out) << detector::to_json(model).dump(2) << "\n";
      for (const auto& [k, d] : model.channels)
        std::cout << capture::to_string(k.first) << "/" << k.second << ": period " << d.period() << "\n";
    } else {
      std::ifstream in(model_in);
      const auto model = detector::model_from_json(nlohmann::json::parse(in));
      const auto result = detector::summary(detector::classify_all(capture::read_capture(capture_in), model));
      if (report_out.empty()) {
        std::cout << result.dump(2) << "\n";
      } else {
        std::ofstream(report_out) << result.dump(2) << "\n";
        std::cout << "UnknownSymbol " << result["UnknownSymbol"] << ", OutOfOrder " << result["OutOfOrder"] << "\n";
      }
      if (fail_on_anomaly && (result["UnknownSymbol"].get<std::size_t>() + result["OutOfOrder"].get<std::size_t>()) > 0)
        return 2;
    }
  } catch (const std::exception& e) {
    std::cerr << "detector: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
