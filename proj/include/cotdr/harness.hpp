#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cotdr/channel.hpp"
#include "cotdr/correlate.hpp"
#include "cotdr/receiver.hpp"
#include "cotdr/scenario.hpp"
#include "cotdr/signal.hpp"
#include "cotdr/thermo.hpp"

namespace cotdr {

/// The measurement chain of one scenario: probe frames, channel, receiver,
/// correlation and peak fitting. Built once; measurements are const calls.
class Interrogator {
 public:
  explicit Interrogator(const Scenario& scenario);

  const Setup& setup() const { return setup_; }
  const GolayPair& codes() const { return codes_; }
  const FiberPath& path() const { return path_; }
  /// Echoes of the path at its reference temperatures, used to label peaks.
  const std::vector<ReflectionEvent>& nominal_events() const { return config_.expected; }

  /// Echoes with each section at the given temperature (one per section).
  std::vector<ReflectionEvent> echoes(std::span<const double> section_temperatures_c) const;
  /// One analog trace per transmitted code (two in pair mode).
  std::vector<AnalogTrace> synthesize(std::span<const ReflectionEvent> events) const;
  std::vector<AccumulatedTrace> acquire(std::span<const AnalogTrace> analog, std::uint64_t seed) const;
  CorrelationTrace correlate(std::span<const AccumulatedTrace> captured) const;
  LatencyMeasurement estimate(const CorrelationTrace& corr) const;

 private:
  Setup setup_;
  FiberPath path_;
  GolayPair codes_;
  std::vector<ProbeSignal> frames_;
  PeakConfig config_;
};

/// Per-measurement seed derived from the scenario seed by SplitMix64.
std::uint64_t measurement_seed(std::uint64_t scenario_seed, std::uint64_t index);

struct SectionReading {
  std::string label;
  double latency_s = 0.0;  // NaN when either bounding peak is missing
  double true_temperature_c = 0.0;
  double delay_std_s = 0.0;  // estimator std assigned after the run, NaN if unknown
  std::optional<TemperatureEstimate> estimate;
};

struct MeasurementRecord {
  std::size_t index = 0;
  double timestamp_s = 0.0;
  double oven_temperature_c = 0.0;
  std::vector<LabeledPeak> peaks;  // reference first
  std::vector<SectionReading> sections;
  std::vector<std::string> warnings;
};

struct LevelSummary {
  double set_point_c = 0.0;
  double oven_mean_c = 0.0;
  std::vector<double> mean_delay_s;  // per section, NaN when no valid reading
  std::vector<double> std_delay_s;   // per section, sample std, NaN below two readings
  std::vector<std::size_t> count;
  bool aborted = false;
};

struct SectionSummary {
  std::string label;
  double nominal_delay_s = 0.0;
  double shift_per_kelvin_s = 0.0;
  double estimator_std_s = 0.0;
  // Shift over the scenario's resolution span is at least 3x the estimator std.
  bool sufficient_resolution = false;
};

struct ExperimentResult {
  Setup setup;
  std::vector<MeasurementRecord> records;
  std::vector<LevelSummary> levels;  // staircase runs only
  std::vector<TcdCalibration> calibrations;
  std::vector<SectionSummary> sections;
  std::vector<std::string> diagnostics;

  const SectionSummary* section(const std::string& label) const;
  const TcdCalibration* calibration(const std::string& label) const;
};

struct RunOptions {
  std::optional<std::filesystem::path> dump_dir;  // per-measurement binary accumulations
};

/// Oven staircase: level i is held from i * dwell after a linear ramp of
/// ramp_s from the previous level.
TemperatureProfile staircase_profile(const StaircaseSchedule& schedule);

/// Measurement times of a staircase: evenly spread over the second half of
/// each dwell, after the oven has settled.
std::vector<double> staircase_times(const StaircaseSchedule& schedule, std::size_t level);

/// Staircase run followed by a per-section TCD regression over level means.
/// A pipeline error aborts the rest of its level with a diagnostic.
ExperimentResult run_experiment_a(const Scenario& scenario, const RunOptions& options = {});

/// Periodic run converting each section latency to temperature through the
/// matching calibration. A failed measurement is skipped with a diagnostic.
ExperimentResult run_experiment_b(const Scenario& scenario, std::span<const TcdCalibration> calibrations,
                                  const RunOptions& options = {});

/// [start, end] of the first rise of the oven track to its maximum.
std::pair<double, double> heating_window(const TemperatureProfile& profile);

struct BenchmarkReport {
  std::size_t traces = 0;
  std::size_t frame_samples = 0;
  std::size_t repetitions = 0;
  double capture_s = 0.0;  // median per measurement, all codes
  double correlate_s = 0.0;
  double estimate_s = 0.0;  // peak fitting through temperature conversion
  double total_s = 0.0;
  double worst_total_s = 0.0;
  double single_trace_s = 0.0;  // capture and correlation with one trace per code
  double budget_s = 2.0;
  bool within_budget = false;
};

/// Wall-clock time of one measurement, from accumulation to temperature
/// estimate; synthesis of the analog traces is excluded.
BenchmarkReport run_wallclock_benchmark(const Scenario& scenario, std::size_t repetitions = 3);

// One row of records.csv.
struct RecordRow {
  double timestamp_s = 0.0;
  std::string section;
  double delay_s = 0.0;
  double delay_std_s = 0.0;
  double temp_est_c = 0.0;
  double temp_true_c = 0.0;
};

std::vector<RecordRow> record_rows(const ExperimentResult& result);
std::vector<RecordRow> read_records_csv(std::istream& in);

/// TCD regression over the records of a staircase run: rows are grouped into
/// levels by true temperature (to 0.01 K), in order of first appearance, and
/// each section is regressed over its level means. The nominal delay is the
/// mean of the first level.
std::vector<TcdCalibration> calibrate_from_records(std::span<const RecordRow> rows,
                                                   std::vector<std::string>* diagnostics = nullptr);

void write_records_csv(std::ostream& out, const ExperimentResult& result);
void write_peaks_csv(std::ostream& out, const ExperimentResult& result);
void write_sections_csv(std::ostream& out, const ExperimentResult& result);
/// Oven temperature against time, sampled every step_s.
void write_oven_csv(std::ostream& out, const TemperatureProfile& profile, double end_s, double step_s = 10.0);
/// Level-mean delay change per section relative to the first level.
void write_delay_vs_temperature_csv(std::ostream& out, const ExperimentResult& result);
/// Oven, true and estimated temperature per measurement, one column pair per section.
void write_temperature_series_csv(std::ostream& out, const ExperimentResult& result);

}  // namespace cotdr
