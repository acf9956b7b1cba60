#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cotdr/signal.hpp"

namespace cotdr {

inline constexpr double kSpeedOfLight = 2.99792458e8;  // m/s

struct FiberSection {
  std::string label;
  double length_m = 1.0;
  double group_index = 1.468;
  double tcd_ppm_per_k = 7.49;
  double attenuation_db_per_km = 0.0;
  double end_reflectance = 0.01;  // power fraction of the reflector after this section
  double temperature_c = 25.0;
  double reference_temperature_c = 25.0;  // length_m and group_index are quoted here

  void validate() const;
};

/// Cascade of sections behind a front (reference) reflector.
struct FiberPath {
  std::vector<FiberSection> sections;
  double reference_reflectance = 0.01;
  // Round-trip delay from the instrument to the reference reflector. It is
  // common to every echo and cancels in latency differences.
  double lead_delay_s = 0.0;

  void validate() const;
};

struct ReflectionEvent {
  double round_trip_delay_s = 0.0;
  double amplitude = 0.0;
  std::string label;
};

struct AnalogTrace {
  std::vector<double> samples;
  double sample_period_s = 0.0;
  double t0_s = 0.0;
};

/// 2 L n / c scaled by the temperature coefficient of delay relative to the
/// section's reference temperature.
double section_round_trip_delay(const FiberSection& section);

/// Echo list of the cascade, sorted by delay. The reference reflector is
/// labelled "reference"; section reflectors carry the section label.
/// Second-order bounces are only listed when include_ghosts is set.
std::vector<ReflectionEvent> enumerate_reflections(const FiberPath& path, bool include_ghosts = false);

struct PropagateOptions {
  // Gaussian receiver low-pass (-3 dB frequency); nullopt leaves the echo unfiltered.
  std::optional<double> rx_bandwidth_hz;
  double rx_sample_period_s = 0.0;
  int interpolation_taps = 64;
};

inline double default_rx_bandwidth(double bit_rate_hz) { return 0.75 * bit_rate_hz; }

/// Renders the received intensity for one frame period of a continuously
/// repeated probe frame.
///
/// Optical intensity is (s + 1) / 2 for a probe sample s, so a -1 chip is dark,
/// a +1 chip is full power and the DC-balanced fill sits at half power. Each
/// echo is the filtered intensity delayed by its round-trip time with
/// windowed-sinc interpolation and scaled by its amplitude. Events are summed
/// in list order.
///
/// Throws ConfigurationError when an echo is not unambiguous (its delay is not
/// shorter than the frame, or in pair mode not shorter than the fill), naming
/// the event.
AnalogTrace propagate(const ProbeSignal& probe, std::span<const ReflectionEvent> events,
                      const PropagateOptions& options, bool pair_mode = false);

/// Periodic fractional delay of a sampled waveform by shift_samples, using a
/// Blackman-windowed sinc with `taps` coefficients normalised to unit DC gain.
std::vector<double> fractional_delay(std::span<const double> x, double shift_samples, int taps = 64);

/// Circular Gaussian low-pass with -3 dB frequency bandwidth_hz.
std::vector<double> gaussian_lowpass(std::span<const double> x, double sample_period_s, double bandwidth_hz);

void write_csv(std::ostream& out, const AnalogTrace& trace);

}  // namespace cotdr
