#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "cotdr/channel.hpp"
#include "cotdr/receiver.hpp"
#include "cotdr/signal.hpp"

namespace cotdr {

/// Breakpoint of a piecewise-linear temperature track. Section "*" is the oven
/// air, which every section follows unless it has a track of its own.
struct ProfilePoint {
  double time_s = 0.0;
  std::string section = "*";
  double temperature_c = 25.0;
};

class TemperatureProfile {
 public:
  TemperatureProfile() = default;
  TemperatureProfile(std::vector<ProfilePoint> points, std::map<std::string, double> lag_s = {});

  bool empty() const { return points_.empty(); }
  const std::vector<ProfilePoint>& points() const { return points_; }
  const std::map<std::string, double>& lag_s() const { return lag_s_; }

  /// Oven (thermometer) temperature.
  double oven(double time_s) const;
  /// Fiber temperature of a section: its own track or the oven, passed through
  /// the section's first-order lag when one is configured.
  double section(const std::string& label, double time_s) const;
  double end_time() const;

 private:
  double track(const std::string& label, double time_s) const;

  std::vector<ProfilePoint> points_;
  std::map<std::string, double> lag_s_;
};

struct StaircaseSchedule {
  std::vector<double> levels_c;
  double dwell_s = 600.0;
  std::size_t measurements_per_level = 10;
  double ramp_s = 0.0;  // 0: a third of the dwell
};

struct PeriodicSchedule {
  double interval_s = 2.0;
  double duration_s = 240.0;
};

using Schedule = std::variant<StaircaseSchedule, PeriodicSchedule>;

/// Noise given either as an absolute sigma or as single-trace SNR in dB,
/// 20 log10(weakest echo amplitude / sigma).
struct NoiseSpec {
  std::optional<double> sigma;
  std::optional<double> snr_db;
};

struct ModeSetup {
  int samples_per_chip = 4;
  ReceiverConfig receiver;
  NoiseSpec noise;
  std::optional<double> rx_bandwidth_hz;
};

/// Built-in front ends: "portable" (4x oversampling, 1-bit slicer, 4000
/// traces) and "lab" (20x oversampling, 7-bit ADC, 1000 traces).
ModeSetup default_mode_setup(const std::string& mode);

struct Scenario {
  std::string name;
  FiberPath path;
  FrameConfig probe;
  int code_order = 9;
  std::string mode = "portable";
  std::map<std::string, ModeSetup> modes;
  TemperatureProfile temperature_profile;
  Schedule schedule = StaircaseSchedule{};
  std::uint64_t seed = 1;
  double resolution_span_k = 10.0;
  double min_peak_height = 0.3;
  double min_peak_separation_s = 10e-9;

  void validate() const;
};

/// Concrete pipeline settings for the scenario's active mode.
struct Setup {
  FrameConfig frame;
  ReceiverConfig receiver;  // seed left at 0; set per capture
  double rx_bandwidth_hz = 0.0;
  double snr_db = 0.0;
};

Setup resolve_setup(const Scenario& scenario);

Scenario parse_scenario(const nlohmann::json& doc);
Scenario load_scenario(const std::filesystem::path& file);

}  // namespace cotdr
