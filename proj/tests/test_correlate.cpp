#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cotdr/error.hpp"
#include "support.hpp"

using namespace cotdr;

namespace {

std::vector<double> rotate(const std::vector<double>& x, std::size_t m) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[(i + m) % x.size()] = x[i];
  return out;
}

CorrelationTrace gaussian_trace(std::size_t n, double amplitude, double mu, double sigma, double floor = 0.0) {
  CorrelationTrace c;
  c.sample_period_s = 1e-10;
  c.values.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    c.values[i] = floor + amplitude * std::exp(-0.5 * std::pow((static_cast<double>(i) - mu) / sigma, 2));
  return c;
}

}  // namespace

TEST_CASE("complementary frames correlate to a single unit peak") {
  for (int spc : {1, 4}) {
    CAPTURE(spc);
    const auto pair = generate_golay_pair(7);
    FrameConfig f;
    f.samples_per_chip = spc;
    f.code_length = 128;
    f.fill_chips = 128;
    const auto a = build_frame(pair.a, f), b = build_frame(pair.b, f);
    CorrelationOptions raw;
    raw.remove_mean = false;
    const auto c = cross_correlate_pair(a.samples, b.samples, pair, spc, f.sample_period_s(), raw);
    CHECK(c.values[0] == 1.0);
    const auto len = static_cast<std::ptrdiff_t>(c.values.size());
    bool exact = true;
    for (std::ptrdiff_t k = 1; k < len; ++k) {
      const std::ptrdiff_t d = std::min(k, len - k);
      const double want = d < spc ? 1.0 - static_cast<double>(d) / spc : 0.0;
      exact = exact && c.values[static_cast<std::size_t>(k)] == want;
    }
    CHECK(exact);
  }
}

TEST_CASE("single-code correlation peaks at the shift") {
  const auto pair = generate_golay_pair(6);
  FrameConfig f;
  f.code_length = 64;
  f.fill_chips = 64;
  const auto a = build_frame(pair.a, f);
  const auto c = cross_correlate(rotate(a.samples, 7), pair.a, 4, f.sample_period_s());
  const auto argmax = std::max_element(c.values.begin(), c.values.end()) - c.values.begin();
  CHECK(argmax == 7);
}

TEST_CASE("trace shorter than the code is rejected") {
  const auto pair = generate_golay_pair(5);
  std::vector<double> short_trace(100, 0.0);
  CHECK_THROWS_AS(cross_correlate(short_trace, pair.a, 4, 1e-10), InvalidArgument);
}

TEST_CASE("direct and FFT correlation agree") {
  const testing::PairChain chain(9, 4, 1024);
  const auto events = enumerate_reflections(testing::cascade_path());
  const auto ta = propagate(chain.fa, events, chain.opts, true);
  const auto tb = propagate(chain.fb, events, chain.opts, true);
  CorrelationOptions direct, fft;
  direct.method = CorrelationMethod::direct;
  fft.method = CorrelationMethod::fft;
  const auto cd = cross_correlate_pair(ta.samples, tb.samples, chain.pair, 4, chain.ts(), direct);
  const auto cf = cross_correlate_pair(ta.samples, tb.samples, chain.pair, 4, chain.ts(), fft);
  const double peak = *std::max_element(cd.values.begin(), cd.values.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < cd.values.size(); ++i) worst = std::max(worst, std::abs(cd.values[i] - cf.values[i]));
  CHECK(worst <= 1e-9 * peak);
}

TEST_CASE("noiseless cascade gives four peaks at the channel delays") {
  const testing::PairChain chain(9, 4, 1024);
  const auto events = enumerate_reflections(testing::cascade_path());
  const auto corr = chain.correlate(events);
  const auto peaks = find_peaks(corr, 0.3, 10e-9);
  REQUIRE(peaks.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    const auto fit = fit_gaussian(corr, peaks[i], 8);
    CHECK(std::abs(fit.delay_s - events[i].round_trip_delay_s) / chain.ts() < 0.1);
  }
}

TEST_CASE("find_peaks basics") {
  CorrelationTrace tri;
  tri.sample_period_s = 1e-10;
  tri.values = {0, 0, 1, 2, 3, 4, 3, 2, 1, 0, 0, 0};
  CHECK(find_peaks(tri, 0.5, 1e-10) == std::vector<std::ptrdiff_t>{5});

  CorrelationTrace flat;
  flat.sample_period_s = 1e-10;
  flat.values.assign(64, 0.0);
  CHECK(find_peaks(flat, 0.5, 1e-10).empty());

  // Two bumps closer than the separation keep only the taller one.
  auto twin = gaussian_trace(200, 1.0, 50, 2);
  const auto small = gaussian_trace(200, 0.6, 58, 2);
  for (std::size_t i = 0; i < 200; ++i) twin.values[i] += small.values[i];
  CHECK(find_peaks(twin, 0.3, 2e-9).size() == 1);
  CHECK(find_peaks(twin, 0.3, 0.5e-9).size() == 2);
}

TEST_CASE("exact Gaussian samples are fitted exactly") {
  const auto c = gaussian_trace(40, 1.0, 10.37, 2.0);
  for (bool refine : {false, true}) {
    FitOptions o;
    o.refine = refine;
    o.subtract_floor = false;
    const auto fit = fit_gaussian(c, 10, 6, o);
    CHECK(std::abs(fit.delay_s / c.sample_period_s - 10.37) < 1e-9);
    CHECK(fit.sigma_s / c.sample_period_s == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(fit.amplitude == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(fit.rms_residual >= 0.0);
    CHECK(fit.first_lag == 4);
    CHECK(fit.last_lag == 16);
  }
}

TEST_CASE("floor subtraction removes a constant pedestal") {
  const auto c = gaussian_trace(80, 0.5, 40.2, 1.8, 0.3);
  const auto fit = fit_gaussian(c, 40, 6);
  CHECK(fit.floor == doctest::Approx(0.3).epsilon(1e-6));
  CHECK(std::abs(fit.delay_s / c.sample_period_s - 40.2) < 1e-6);
}

TEST_CASE("fit failures carry the window") {
  CorrelationTrace neg;
  neg.sample_period_s = 1e-10;
  neg.values.assign(40, -1.0);
  FitOptions o;
  o.subtract_floor = false;
  try {
    fit_gaussian(neg, 20, 4, o);
    FAIL("expected a fit failure");
  } catch (const FitFailure& e) {
    CHECK(e.first_lag() == 16);
    CHECK(e.last_lag() == 24);
  }
  CorrelationTrace valley;
  valley.sample_period_s = 1e-10;
  for (int i = 0; i < 40; ++i) valley.values.push_back(1.0 + 0.01 * (i - 20) * (i - 20));
  CHECK_THROWS_AS(fit_gaussian(valley, 20, 4, o), FitFailure);
}

TEST_CASE("quarter-sample echo is recovered") {
  const testing::PairChain chain(9, 4, 1024);
  const int k = 800;
  const auto corr = chain.correlate({{(k + 0.25) * chain.ts(), 1.0, "echo"}});
  const auto fit = fit_gaussian(corr, find_peaks(corr, 0.3, 10e-9).front(), 8);
  CHECK(std::abs(fit.delay_s / chain.ts() - (k + 0.25)) < 0.02);
  CHECK(fit.delay_s >= fit.first_lag * chain.ts());
  CHECK(fit.delay_s <= fit.last_lag * chain.ts());
  CHECK(fit.sigma_s > 0.0);
}

TEST_CASE("fitted location is shift equivariant and scale invariant") {
  const testing::PairChain chain(9, 4, 1024);
  const auto events = enumerate_reflections(testing::cascade_path());
  const auto ta = propagate(chain.fa, events, chain.opts, true).samples;
  const auto tb = propagate(chain.fb, events, chain.opts, true).samples;
  const auto base = cross_correlate_pair(ta, tb, chain.pair, 4, chain.ts());
  const auto peaks = find_peaks(base, 0.3, 10e-9);

  const std::size_t m = 123;
  const auto shifted = cross_correlate_pair(rotate(ta, m), rotate(tb, m), chain.pair, 4, chain.ts());
  std::vector<double> sa = ta, sb = tb;
  for (auto& v : sa) v *= 2.5;
  for (auto& v : sb) v *= 2.5;
  const auto scaled = cross_correlate_pair(sa, sb, chain.pair, 4, chain.ts());

  for (auto lag : peaks) {
    const auto f0 = fit_gaussian(base, lag, 8);
    const auto f1 = fit_gaussian(shifted, lag + static_cast<std::ptrdiff_t>(m), 8);
    CHECK(std::abs((f1.delay_s - f0.delay_s) / chain.ts() - static_cast<double>(m)) < 1e-9);
    const auto f2 = fit_gaussian(scaled, lag, 8);
    CHECK(f2.delay_s == doctest::Approx(f0.delay_s).epsilon(1e-12));
    CHECK(f2.sigma_s == doctest::Approx(f0.sigma_s).epsilon(1e-12));
    CHECK(f2.amplitude == doctest::Approx(2.5 * f0.amplitude).epsilon(1e-12));
  }
}

TEST_CASE("pair-mode sidelobes are flat for integer delays") {
  // Without the receiver filter and at whole-sample delays the sidelobes of
  // the summed correlation cancel; what remains off-peak is one constant, the
  // pedestal of the half-power intensity, which the fit floor removes.
  const testing::PairChain chain(9, 4, 1024, false);
  std::vector<ReflectionEvent> events;
  const int lags[] = {0, 392, 1371, 3819};
  for (int i = 0; i < 4; ++i) events.push_back({lags[i] * chain.ts(), 0.01, "e" + std::to_string(i)});
  const auto corr = chain.correlate(events);
  const auto len = static_cast<int>(corr.values.size());
  double lo = 1e9, hi = -1e9;
  for (int k = 0; k < len; ++k) {
    bool near = false;
    for (int l : lags) near = near || std::min(std::abs(k - l), len - std::abs(k - l)) < 4;
    if (near) continue;
    lo = std::min(lo, corr.values[k]);
    hi = std::max(hi, corr.values[k]);
  }
  CHECK(hi - lo < 1e-15);
  const auto fit = fit_gaussian(corr, 392, 8);
  CHECK(fit.floor == doctest::Approx(lo).epsilon(1e-9));
}

TEST_CASE("latency relative to the reference") {
  const testing::PairChain chain(9, 4, 1024);
  FiberPath p;
  p.reference_reflectance = 0.01;
  FiberSection s;
  s.label = "end";
  s.length_m = 10.0;
  p.sections.push_back(s);
  const auto events = enumerate_reflections(p);
  PeakConfig cfg;
  cfg.expected = events;
  const auto m = measure_latency(chain.correlate(events), cfg);
  REQUIRE(m.absolute_latencies.size() == 1);
  CHECK(m.absolute_latencies[0].label == "end");
  CHECK(m.absolute_latencies[0].latency_s * 1e9 == doctest::Approx(97.93).epsilon(1e-4));
  CHECK(m.absolute_latencies[0].latency_s == doctest::Approx(testing::hand_delay(10.0)).epsilon(1e-6));
  CHECK(m.warnings.empty());
}

TEST_CASE("reference only yields no latencies") {
  const testing::PairChain chain(9, 4, 1024);
  const std::vector<ReflectionEvent> ev{{0.0, 0.01, "reference"}};
  PeakConfig cfg;
  const auto m = measure_latency(chain.correlate(ev), cfg);
  CHECK(m.absolute_latencies.empty());
  CHECK(std::abs(m.reference_delay_s) < 0.02 * chain.ts());
}

TEST_CASE("missing peaks: reference is an error, others are warnings") {
  const testing::PairChain chain(9, 4, 1024);
  auto expected = enumerate_reflections(testing::cascade_path());
  auto present = expected;
  present.pop_back();
  PeakConfig cfg;
  cfg.expected = expected;
  const auto m = measure_latency(chain.correlate(present), cfg);
  CHECK(m.events.size() == 2);
  CHECK_FALSE(m.warnings.empty());
  CHECK(m.find("25m") == nullptr);

  std::vector<ReflectionEvent> no_ref(expected.begin() + 1, expected.end());
  CHECK_THROWS_AS(measure_latency(chain.correlate(no_ref), cfg), MeasurementError);
}

TEST_CASE("10 m section latency tracks a 10 K step") {
  const testing::PairChain chain(9, 4, 1024);
  auto path = testing::cascade_path();
  PeakConfig cfg;
  cfg.expected = enumerate_reflections(path);
  const auto section = [&](double t) {
    for (auto& s : path.sections) s.temperature_c = t;
    const auto m = measure_latency(chain.correlate(enumerate_reflections(path)), cfg);
    return m.find("10m")->peak.delay_s - m.find("4m")->peak.delay_s;
  };
  const double shift = section(35.0) - section(25.0);
  const double oracle = testing::hand_delay(10.0, 10.0) - testing::hand_delay(10.0);
  CHECK(shift * 1e12 == doctest::Approx(7.3355).epsilon(0.01));
  CHECK(std::abs(shift - oracle) < 0.01e-12);
}

TEST_CASE("fit std at 30 dB post-accumulation SNR stays below 0.01 samples") {
  const testing::PairChain chain(9, 4, 64);
  const std::vector<ReflectionEvent> ev{{101.4 * chain.ts(), 1.0, "echo"}};
  const auto ta = propagate(chain.fa, ev, chain.opts, true);
  const auto tb = propagate(chain.fb, ev, chain.opts, true);

  ReceiverConfig rc;
  rc.noise_sigma = 0.84;
  rc.traces = 4000;
  // Post-accumulation SNR: half swing of the expected normalised trace over
  // the per-sample std of the accumulation noise.
  const auto expected_level = [&](double x) { return 2.0 * 0.5 * std::erfc(-x / (rc.noise_sigma * std::sqrt(2.0))) - 1.0; };
  auto centred = ta.samples;
  const double m = testing::mean(centred);
  double lo = 1e9, hi = -1e9;
  for (auto& v : centred) {
    v -= m;
    lo = std::min(lo, expected_level(v));
    hi = std::max(hi, expected_level(v));
  }
  rc.seed = 1;
  const auto one = normalize(capture(ta, rc));
  std::vector<double> resid;
  for (std::size_t i = 0; i < one.size(); ++i) resid.push_back(one[i] - expected_level(centred[i]));
  const double snr_db = 20.0 * std::log10(0.5 * (hi - lo) / testing::stdev(resid));
  CHECK(snr_db == doctest::Approx(30.0).epsilon(0.03));

  std::vector<double> mus;
  for (int r = 0; r < 100; ++r) {
    rc.seed = 1000 + 2 * r;
    const auto a = normalize(capture(ta, rc));
    rc.seed = 1001 + 2 * r;
    const auto b = normalize(capture(tb, rc));
    const auto corr = cross_correlate_pair(a, b, chain.pair, 4, chain.ts());
    mus.push_back(fit_gaussian(corr, 101, 8).delay_s / chain.ts());
  }
  MESSAGE("fit std " << testing::stdev(mus) << " samples at " << snr_db << " dB");
  CHECK(testing::stdev(mus) < 0.01);
}

TEST_CASE("correlation and peak csv exports") {
  const auto c = gaussian_trace(30, 1.0, 12.2, 2.0);
  std::ostringstream a, b, d;
  write_csv(a, c);
  CHECK(a.str().rfind("lag,time_s,value\n", 0) == 0);
  const auto fit = fit_gaussian(c, 12, 5);
  const std::vector<LabeledPeak> peaks{{"reference", fit}};
  write_csv(b, peaks);
  CHECK(b.str().find("reference,") != std::string::npos);
  write_fit_diagnostics(d, c, fit);
  std::size_t lines = 0;
  for (char ch : d.str()) lines += ch == '\n';
  CHECK(lines >= 11);
}
