#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace cotdr {

struct CalibrationPoint {
  double temperature_c = 0.0;
  double delay_s = 0.0;
};

/// Linear delay-versus-temperature model of one fiber section.
///
/// The TCD is the fitted slope relative to nominal_delay_s, the round-trip
/// delay observed at the start of the calibration. intercept_s is the fitted
/// delay at reference_temperature_c.
struct TcdCalibration {
  std::string section_label;
  double tcd_ppm_per_k = 0.0;
  double intercept_s = 0.0;
  double reference_temperature_c = 0.0;
  double r_squared = 0.0;
  double nominal_delay_s = 0.0;
  double residual_std_s = 0.0;  // OLS residual standard deviation, 0 for two points
  std::string timestamp;
};

struct TemperatureEstimate {
  double temperature_c = 0.0;
  double delta_delay_s = 0.0;
  double uncertainty_k = 0.0;
};

/// Ordinary least squares delay = a + b T. The reference temperature is that
/// of the first point. Throws DegenerateRegression when all temperatures are
/// equal.
TcdCalibration calibrate_tcd(std::span<const CalibrationPoint> points, double nominal_delay_s,
                             std::string section_label = {});

/// base + delta / (nominal * TCD). The uncertainty combines the calibration
/// residual std and the delay estimator std in quadrature.
TemperatureEstimate delay_to_temperature(double delta_delay_s, const TcdCalibration& cal, double base_temperature_c,
                                         double estimator_std_s = 0.0);

/// Temperature for an absolute delay, measured from the calibration's
/// intercept at its reference temperature.
TemperatureEstimate temperature_from_delay(double delay_s, const TcdCalibration& cal, double estimator_std_s = 0.0);

// Plain-text key = value blocks, one "[section <label>]" header per calibration.
void save_calibrations(std::ostream& out, std::span<const TcdCalibration> cals);
std::vector<TcdCalibration> load_calibrations(std::istream& in);

}  // namespace cotdr
