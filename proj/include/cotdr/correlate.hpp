#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "cotdr/channel.hpp"
#include "cotdr/signal.hpp"

namespace cotdr {

enum class CorrelationMethod { automatic, direct, fft };

struct CorrelationOptions {
  bool remove_mean = true;
  CorrelationMethod method = CorrelationMethod::automatic;
};

/// Circular cross-correlation indexed by lag in receiver samples. The trace is
/// one period of a periodic record, so lag L-1 is also lag -1.
struct CorrelationTrace {
  std::vector<double> values;
  double sample_period_s = 0.0;

  double at(std::ptrdiff_t lag) const;
};

/// Correlates the (mean-removed) trace against the oversampled bipolar code,
/// scaled by the reference energy so that a bipolar unit echo peaks at 1.
///
/// The automatic method correlates directly for codes of up to 1024 chips
/// whose direct cost stays below 2^20 multiply-adds and goes through the FFT
/// otherwise; the two agree to floating-point rounding.
CorrelationTrace cross_correlate(std::span<const double> trace, const BinaryCode& code, int samples_per_chip,
                                 double sample_period_s, const CorrelationOptions& options = {});

/// Sum of the per-code correlations of two accumulations, one per code of the
/// complementary pair, normalised by the combined reference energy.
CorrelationTrace cross_correlate_pair(std::span<const double> trace_a, std::span<const double> trace_b,
                                      const GolayPair& pair, int samples_per_chip, double sample_period_s,
                                      const CorrelationOptions& options = {});

/// Local maxima at or above min_height * global max, thinned greedily (tallest
/// first) to at least min_separation_s apart. Sorted by lag.
std::vector<std::ptrdiff_t> find_peaks(const CorrelationTrace& corr, double min_height, double min_separation_s);

struct FitOptions {
  bool refine = true;          // Gauss-Newton polish of the log-domain solution
  bool subtract_floor = true;  // median of the guard annulus around the window
  int guard_width = 0;         // 0: same as the half window
  int max_iterations = 20;
  double step_tolerance = 1e-10;
};

struct PeakEstimate {
  double delay_s = 0.0;
  double amplitude = 0.0;
  double sigma_s = 0.0;
  double rms_residual = 0.0;
  double floor = 0.0;
  std::ptrdiff_t first_lag = 0;
  std::ptrdiff_t last_lag = 0;
  bool refined = false;
};

/// Fits A exp(-(x - mu)^2 / (2 sigma^2)) over peak_lag +- half_window.
///
/// The closed-form estimate solves the quadratic in log y by least squares
/// with weights y^2 over the strictly positive samples. With `refine` set the
/// estimate seeds a bounded Gauss-Newton iteration on the linear residuals; if
/// that iteration leaves the window or stops being finite the closed-form
/// estimate is kept.
///
/// Throws FitFailure when fewer than three samples are positive or the
/// quadratic does not open downward.
PeakEstimate fit_gaussian(const CorrelationTrace& corr, std::ptrdiff_t peak_lag, int half_window,
                          const FitOptions& options = {});

struct PeakConfig {
  double min_height = 0.3;
  double min_separation_s = 10e-9;
  int half_window = 8;
  FitOptions fit;
  // When non-empty, peaks are labelled by matching the nearest expected echo
  // and the first expected echo is the reference.
  std::vector<ReflectionEvent> expected;
  double match_tolerance_s = 0.0;  // 0: half of min_separation_s
};

struct LabeledPeak {
  std::string label;
  PeakEstimate peak;
};

struct LabeledLatency {
  std::string label;
  double latency_s = 0.0;
};

struct LatencyMeasurement {
  double reference_delay_s = 0.0;
  PeakEstimate reference;
  std::vector<LabeledPeak> events;  // excludes the reference
  std::vector<LabeledLatency> absolute_latencies;
  std::vector<std::string> warnings;

  const LabeledPeak* find(const std::string& label) const;
};

/// Fits every reflection peak and reports each echo delay relative to the
/// reference reflector. Throws MeasurementError when no reference is found.
LatencyMeasurement measure_latency(const CorrelationTrace& corr, const PeakConfig& config);

void write_csv(std::ostream& out, const CorrelationTrace& corr);
void write_csv(std::ostream& out, std::span<const LabeledPeak> peaks);
/// Window samples next to the fitted curve, for plotting a fit.
void write_fit_diagnostics(std::ostream& out, const CorrelationTrace& corr, const PeakEstimate& peak);

}  // namespace cotdr
