#pragma once

// Scenario time: wall time since start multiplied by a time-scale factor.
// Every recorded timestamp in the testbed is scenario seconds.

#include <chrono>
#include <condition_variable>
#include <mutex>
#include <stdexcept>
#include <stop_token>

namespace gridghost {

class ScenarioClock {
 public:
  using wall = std::chrono::steady_clock;

  explicit ScenarioClock(double time_scale = 1.0) : scale_(time_scale), start_(wall::now()) {
    if (!(time_scale > 0)) throw std::invalid_argument("time scale must be > 0");
  }

  double scale() const noexcept { return scale_; }

  double now() const {
    return std::chrono::duration<double>(wall::now() - start_).count() * scale_;
  }

  wall::time_point wall_at(double scenario_seconds) const {
    return start_ + std::chrono::duration_cast<wall::duration>(std::chrono::duration<double>(scenario_seconds / scale_));
  }

  /// Wall duration corresponding to `scenario_seconds`.
  std::chrono::milliseconds wall_span(double scenario_seconds) const {
    auto ms = static_cast<long long>(scenario_seconds / scale_ * 1000.0);
    return std::chrono::milliseconds(ms < 1 ? 1 : ms);
  }

  /// Returns false if `stop` was requested first.
  bool sleep_until(double scenario_seconds, std::stop_token stop = {}) const {
    std::mutex m;
    std::condition_variable_any cv;
    std::unique_lock lock(m);
    cv.wait_until(lock, stop, wall_at(scenario_seconds), [] { return false; });
    return !stop.stop_requested();
  }

 private:
  double scale_;
  wall::time_point start_;
};

}  // namespace gridghost
