#include "cotdr/thermo.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>

#include "cotdr/error.hpp"

namespace cotdr {

TcdCalibration calibrate_tcd(std::span<const CalibrationPoint> points, double nominal_delay_s,
                             std::string section_label) {
  if (!(nominal_delay_s > 0.0)) throw InvalidArgument("nominal delay must be positive");
  if (points.size() < 2) throw DegenerateRegression("calibration needs at least two points");

  const auto n = static_cast<double>(points.size());
  double mean_t = 0.0, mean_d = 0.0;
  for (const auto& p : points) {
    mean_t += p.temperature_c;
    mean_d += p.delay_s;
  }
  mean_t /= n;
  mean_d /= n;

  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& p : points) {
    const double dx = p.temperature_c - mean_t;
    const double dy = p.delay_s - mean_d;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (!(sxx > 0.0)) throw DegenerateRegression("all calibration temperatures are equal");

  const double slope = sxy / sxx;
  const double offset = mean_d - slope * mean_t;
  double ss_res = 0.0;
  for (const auto& p : points) {
    const double r = p.delay_s - (offset + slope * p.temperature_c);
    ss_res += r * r;
  }

  TcdCalibration cal;
  cal.section_label = std::move(section_label);
  cal.tcd_ppm_per_k = slope / nominal_delay_s * 1e6;
  cal.reference_temperature_c = points.front().temperature_c;
  cal.intercept_s = offset + slope * cal.reference_temperature_c;
  cal.r_squared = syy > 0.0 ? std::clamp(1.0 - ss_res / syy, 0.0, 1.0) : 0.0;
  cal.nominal_delay_s = nominal_delay_s;
  cal.residual_std_s = points.size() > 2 ? std::sqrt(ss_res / (n - 2.0)) : 0.0;
  return cal;
}

TemperatureEstimate delay_to_temperature(double delta_delay_s, const TcdCalibration& cal, double base_temperature_c,
                                         double estimator_std_s) {
  if (!(cal.nominal_delay_s > 0.0)) throw InvalidArgument("calibration has no nominal delay");
  const double per_kelvin = cal.nominal_delay_s * cal.tcd_ppm_per_k * 1e-6;
  if (per_kelvin == 0.0) throw DegenerateRegression("calibration TCD is zero");

  TemperatureEstimate est;
  est.delta_delay_s = delta_delay_s;
  est.temperature_c = base_temperature_c + delta_delay_s / per_kelvin;
  est.uncertainty_k = std::hypot(cal.residual_std_s, estimator_std_s) / std::abs(per_kelvin);
  return est;
}

TemperatureEstimate temperature_from_delay(double delay_s, const TcdCalibration& cal, double estimator_std_s) {
  return delay_to_temperature(delay_s - cal.intercept_s, cal, cal.reference_temperature_c, estimator_std_s);
}

void save_calibrations(std::ostream& out, std::span<const TcdCalibration> cals) {
  const auto old = out.precision(17);
  for (const auto& c : cals) {
    out << "[section " << c.section_label << "]\n"
        << "tcd_ppm_per_k = " << c.tcd_ppm_per_k << '\n'
        << "intercept_s = " << c.intercept_s << '\n'
        << "reference_temperature_c = " << c.reference_temperature_c << '\n'
        << "nominal_delay_s = " << c.nominal_delay_s << '\n'
        << "r_squared = " << c.r_squared << '\n'
        << "residual_std_s = " << c.residual_std_s << '\n'
        << "timestamp = " << c.timestamp << "\n\n";
  }
  out.precision(old);
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double parse_number(const std::string& key, const std::string& text) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw InvalidArgument("calibration key '" + key + "' has non-numeric value '" + text + "'");
  return v;
}

}  // namespace

std::vector<TcdCalibration> load_calibrations(std::istream& in) {
  std::vector<TcdCalibration> cals;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = trim(line);
    if (text.empty() || text[0] == '#') continue;
    if (text.front() == '[') {
      const std::string prefix = "[section ";
      if (text.back() != ']' || text.rfind(prefix, 0) != 0)
        throw InvalidArgument("calibration line " + std::to_string(line_no) + ": bad header");
      cals.emplace_back();
      cals.back().section_label = trim(std::string_view(text).substr(prefix.size(), text.size() - prefix.size() - 1));
      continue;
    }
    const auto eq = text.find('=');
    if (eq == std::string::npos || cals.empty())
      throw InvalidArgument("calibration line " + std::to_string(line_no) + ": expected key = value");
    const auto key = trim(std::string_view(text).substr(0, eq));
    const auto value = trim(std::string_view(text).substr(eq + 1));
    auto& c = cals.back();
    if (key == "tcd_ppm_per_k")
      c.tcd_ppm_per_k = parse_number(key, value);
    else if (key == "intercept_s")
      c.intercept_s = parse_number(key, value);
    else if (key == "reference_temperature_c")
      c.reference_temperature_c = parse_number(key, value);
    else if (key == "nominal_delay_s")
      c.nominal_delay_s = parse_number(key, value);
    else if (key == "r_squared")
      c.r_squared = parse_number(key, value);
    else if (key == "residual_std_s")
      c.residual_std_s = parse_number(key, value);
    else if (key == "timestamp")
      c.timestamp = value;
    else
      throw InvalidArgument("calibration line " + std::to_string(line_no) + ": unknown key '" + key + "'");
  }
  return cals;
}

}  // namespace cotdr
