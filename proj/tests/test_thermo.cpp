#include <doctest.h>

#include <cmath>
#include <sstream>

#include "cotdr/channel.hpp"
#include "cotdr/error.hpp"
#include "cotdr/thermo.hpp"
#include "support.hpp"

using namespace cotdr;

namespace {

TcdCalibration ten_metre_cal() {
  TcdCalibration c;
  c.section_label = "10m";
  c.tcd_ppm_per_k = 7.49;
  c.nominal_delay_s = 97.93e-9;
  c.intercept_s = 97.93e-9;
  c.reference_temperature_c = 25.0;
  return c;
}

}  // namespace

TEST_CASE("regressing the channel model returns its TCD") {
  FiberSection s;
  s.length_m = 10.0;
  const double nominal = section_round_trip_delay(s);
  std::vector<CalibrationPoint> pts;
  for (double t : {10.0, 20.0, 30.0, 40.0, 50.0}) {
    s.temperature_c = t;
    pts.push_back({t, section_round_trip_delay(s)});
  }
  const auto cal = calibrate_tcd(pts, nominal, "10m");
  CHECK(std::abs(cal.tcd_ppm_per_k - 7.49) < 1e-6);
  CHECK(cal.r_squared == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(cal.reference_temperature_c == 10.0);
  CHECK(cal.intercept_s == doctest::Approx(pts.front().delay_s).epsilon(1e-12));
  CHECK(cal.section_label == "10m");
}

TEST_CASE("two-point calibration by hand") {
  const std::vector<CalibrationPoint> pts{{25.0, 97.93e-9}, {35.0, 97.93e-9 + 7.33e-12}};
  const auto cal = calibrate_tcd(pts, 97.93e-9);
  // 7.33e-12 / 97.93e-9 / 10 * 1e6
  CHECK(cal.tcd_ppm_per_k == doctest::Approx(7.4849).epsilon(1e-4));
  CHECK(cal.residual_std_s == 0.0);
}

TEST_CASE("degenerate calibrations") {
  const std::vector<CalibrationPoint> same{{30.0, 1e-7}, {30.0, 1.1e-7}, {30.0, 1.2e-7}};
  CHECK_THROWS_AS(calibrate_tcd(same, 1e-7), DegenerateRegression);
  const std::vector<CalibrationPoint> one{{30.0, 1e-7}};
  CHECK_THROWS_AS(calibrate_tcd(one, 1e-7), DegenerateRegression);
  const std::vector<CalibrationPoint> ok{{20.0, 1e-7}, {30.0, 1.1e-7}};
  CHECK_THROWS_AS(calibrate_tcd(ok, 0.0), InvalidArgument);
}

TEST_CASE("r squared stays in [0, 1]") {
  const std::vector<CalibrationPoint> noisy{{10, 1.0}, {20, 3.0}, {30, 0.5}, {40, 2.0}, {50, 1.1}};
  const auto cal = calibrate_tcd(noisy, 1.0);
  CHECK(cal.r_squared >= 0.0);
  CHECK(cal.r_squared <= 1.0);
  CHECK(cal.residual_std_s > 0.0);
}

TEST_CASE("delay to temperature examples") {
  const auto cal = ten_metre_cal();
  CHECK(delay_to_temperature(7.33e-12, cal, 25.0).temperature_c == doctest::Approx(35.0).epsilon(1e-3));
  const auto zero = delay_to_temperature(0.0, cal, 25.0);
  CHECK(zero.temperature_c == 25.0);
  CHECK(zero.delta_delay_s == 0.0);

  TcdCalibration four = cal;
  four.nominal_delay_s = 39.17e-9;
  CHECK(delay_to_temperature(0.293e-12, four, 0.0).temperature_c == doctest::Approx(1.0).epsilon(2e-3));

  TcdCalibration flat = cal;
  flat.tcd_ppm_per_k = 0.0;
  CHECK_THROWS_AS(delay_to_temperature(1e-12, flat, 25.0), DegenerateRegression);
}

TEST_CASE("temperature is linear in the delay shift") {
  const auto cal = ten_metre_cal();
  const double k = delay_to_temperature(1e-12, cal, 0.0).temperature_c;
  for (double d : {-5e-12, 0.3e-12, 2e-12, 40e-12})
    CHECK(delay_to_temperature(d, cal, 0.0).temperature_c == doctest::Approx(k * d / 1e-12).epsilon(1e-12));
}

TEST_CASE("calibration round trip") {
  std::vector<CalibrationPoint> pts;
  for (double t : {10.0, 20.0, 30.0, 40.0, 50.0}) pts.push_back({t, 1e-7 * (1.0 + 7e-6 * (t - 10.0))});
  const auto exact = calibrate_tcd(pts, pts.front().delay_s);
  for (const auto& p : pts)
    CHECK(temperature_from_delay(p.delay_s, exact).temperature_c == doctest::Approx(p.temperature_c).epsilon(1e-9));

  // With scatter the residual bounds the error.
  pts[1].delay_s += 1e-12;
  pts[3].delay_s -= 0.7e-12;
  const auto noisy = calibrate_tcd(pts, pts.front().delay_s);
  const double per_k = noisy.nominal_delay_s * noisy.tcd_ppm_per_k * 1e-6;
  for (const auto& p : pts) {
    const double err = temperature_from_delay(p.delay_s, noisy).temperature_c - p.temperature_c;
    CHECK(std::abs(err) <= 3.0 * noisy.residual_std_s / per_k);
  }
}

TEST_CASE("results do not depend on the delay unit") {
  std::vector<CalibrationPoint> sec, ps;
  for (double t : {10.0, 25.0, 50.0}) {
    const double d = 97.93e-9 + 0.7335e-12 * (t - 10.0) + (t == 25.0 ? 0.2e-12 : 0.0);
    sec.push_back({t, d});
    ps.push_back({t, d * 1e12});
  }
  const auto a = calibrate_tcd(sec, sec.front().delay_s), b = calibrate_tcd(ps, ps.front().delay_s);
  CHECK(a.tcd_ppm_per_k == doctest::Approx(b.tcd_ppm_per_k).epsilon(1e-9));
  CHECK(a.r_squared == doctest::Approx(b.r_squared).epsilon(1e-9));
  CHECK(delay_to_temperature(3e-12, a, 20.0).temperature_c ==
        doctest::Approx(delay_to_temperature(3.0, b, 20.0).temperature_c).epsilon(1e-9));
}

TEST_CASE("uncertainty combines residual and estimator std") {
  auto cal = ten_metre_cal();
  cal.residual_std_s = 0.3e-12;
  const double per_k = cal.nominal_delay_s * cal.tcd_ppm_per_k * 1e-6;
  const auto est = delay_to_temperature(1e-12, cal, 25.0, 0.4e-12);
  CHECK(est.uncertainty_k == doctest::Approx(0.5e-12 / per_k).epsilon(1e-12));
  CHECK(delay_to_temperature(1e-12, ten_metre_cal(), 25.0).uncertainty_k == 0.0);
}

TEST_CASE("calibration files round trip") {
  auto a = ten_metre_cal();
  a.r_squared = 0.99951234567;
  a.residual_std_s = 1.234567e-13;
  a.timestamp = "simulated t=3000 s";
  auto b = a;
  b.section_label = "25 m spool";
  b.tcd_ppm_per_k = 7.5319;
  const std::vector<TcdCalibration> cals{a, b};
  std::stringstream io;
  save_calibrations(io, cals);
  const auto back = load_calibrations(io);
  REQUIRE(back.size() == 2);
  CHECK(back[0].section_label == "10m");
  CHECK(back[1].section_label == "25 m spool");
  CHECK(back[0].r_squared == a.r_squared);
  CHECK(back[0].residual_std_s == a.residual_std_s);
  CHECK(back[1].tcd_ppm_per_k == b.tcd_ppm_per_k);
  CHECK(back[0].intercept_s == a.intercept_s);
  CHECK(back[0].timestamp == a.timestamp);

  std::istringstream bad("[section x]\ntcd_ppm_per_k = seven\n");
  CHECK_THROWS_AS(load_calibrations(bad), InvalidArgument);
  std::istringstream orphan("tcd_ppm_per_k = 7\n");
  CHECK_THROWS_AS(load_calibrations(orphan), InvalidArgument);
  std::istringstream unknown("[section x]\nslope = 7\n");
  CHECK_THROWS_AS(load_calibrations(unknown), InvalidArgument);
}
