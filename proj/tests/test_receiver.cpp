#include <doctest.h>

#include <cmath>
#include <sstream>

#include "cotdr/error.hpp"
#include "support.hpp"

using namespace cotdr;

namespace {

double phi(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

AnalogTrace constant(double value, std::size_t n, double ts = 1e-10) {
  return AnalogTrace{std::vector<double>(n, value), ts, 0.0};
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double ma = testing::mean(a), mb = testing::mean(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_CASE("noiseless slicer saturates on a positive input") {
  ReceiverConfig rc;
  rc.traces = 100;
  rc.ac_coupled = false;
  const auto acc = capture(constant(0.3, 50), rc);
  for (auto s : acc.sums) CHECK(s == 100);
  for (double v : normalize(acc)) CHECK(v == 1.0);
}

TEST_CASE("slicer mean follows the Gaussian CDF") {
  const double sigma = 0.2, t = 0.05;
  const std::size_t n_traces = 4000;
  for (double offset : {-1.0, 0.0, 1.0}) {
    CAPTURE(offset);
    ReceiverConfig rc;
    rc.mode = Slicer{t};
    rc.noise_sigma = sigma;
    rc.traces = n_traces;
    rc.ac_coupled = false;
    rc.seed = 99;
    const auto acc = capture(constant(t + offset * sigma, 64), rc);
    const double p = phi(offset);
    const double se = std::sqrt(p * (1 - p) / n_traces);
    CHECK(std::abs(static_cast<double>(acc.sums[0]) / n_traces - p) < 3 * se);
    double total = 0.0;
    for (auto s : acc.sums) total += static_cast<double>(s);
    CHECK(std::abs(total / (64.0 * n_traces) - p) < 3 * se / 8.0);
  }
}

TEST_CASE("slicer sums are monotone in the input level") {
  std::vector<double> x(200);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.01 * std::sin(0.3 * static_cast<double>(i));
  ReceiverConfig rc;
  rc.noise_sigma = 0.02;
  rc.traces = 500;
  rc.ac_coupled = false;
  rc.seed = 5;
  const auto base = capture(AnalogTrace{x, 1e-10, 0.0}, rc);
  auto raised = x;
  for (std::size_t i = 0; i < raised.size(); i += 7) raised[i] += 0.005;
  const auto up = capture(AnalogTrace{raised, 1e-10, 0.0}, rc);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(up.sums[i] >= base.sums[i]);
}

TEST_CASE("full-resolution capture of a noiseless ramp averages to the quantized ramp") {
  const FullResolution adc{7, 1.0};
  const double lsb = 2.0 / 128.0;
  CHECK(adc.lsb() == lsb);
  std::vector<double> ramp(300);
  for (std::size_t i = 0; i < ramp.size(); ++i) ramp[i] = -1.2 + 2.4 * static_cast<double>(i) / 299.0;
  ReceiverConfig rc;
  rc.mode = adc;
  rc.traces = 1000;
  rc.ac_coupled = false;
  const auto acc = capture(AnalogTrace{ramp, 1e-10, 0.0}, rc);
  const auto out = normalize(acc);
  std::uint64_t clipped = 0;
  for (std::size_t i = 0; i < ramp.size(); ++i) {
    long long q = static_cast<long long>(std::floor(ramp[i] / lsb));
    if (q > 63 || q < -64) ++clipped;
    q = std::clamp(q, -64LL, 63LL);
    CHECK(acc.sums[i] == 1000 * q);
    CHECK(out[i] == doctest::Approx((q + 0.5) * lsb).epsilon(1e-12));
    CHECK(std::llabs(acc.sums[i]) <= 1000LL * 64);
  }
  CHECK(clipped > 0);
  CHECK(acc.saturated == clipped * 1000);
}

TEST_CASE("normalize maps the accumulator range") {
  AccumulatedTrace slicer;
  slicer.sums = {10, 5, 0};
  slicer.trace_count = 10;
  CHECK(normalize(slicer) == std::vector<double>{1.0, 0.0, -1.0});

  const double lsb = 2.0 / 128.0;
  const double c = 9.5 * lsb;
  ReceiverConfig rc;
  rc.mode = FullResolution{7, 1.0};
  rc.traces = 37;
  rc.ac_coupled = false;
  for (double v : normalize(capture(constant(c, 8), rc))) CHECK(v == doctest::Approx(c).epsilon(1e-15));

  AccumulatedTrace empty;
  CHECK_THROWS_AS(normalize(empty), InvalidArgument);
}

TEST_CASE("slicer sums stay within the trace count") {
  std::vector<double> x(256);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::cos(0.1 * static_cast<double>(i));
  ReceiverConfig rc;
  rc.noise_sigma = 0.7;
  rc.traces = 333;
  const auto acc = capture(AnalogTrace{x, 1e-10, 0.0}, rc);
  for (auto s : acc.sums) CHECK((s >= 0 && s <= 333));
  CHECK(acc.mode == ModeTag::slicer);
}

TEST_CASE("receiver config invariants") {
  ReceiverConfig rc;
  rc.traces = 0;
  CHECK_THROWS_AS(rc.validate(), InvalidArgument);
  CHECK_THROWS_AS(capture(constant(0.0, 4), rc), InvalidArgument);
  rc.traces = 1;
  rc.noise_sigma = -1.0;
  CHECK_THROWS_AS(rc.validate(), InvalidArgument);
  rc.noise_sigma = 0.0;
  rc.mode = FullResolution{17, 1.0};
  CHECK_THROWS_AS(rc.validate(), InvalidArgument);
  rc.mode = FullResolution{0, 1.0};
  CHECK_THROWS_AS(rc.validate(), InvalidArgument);
  rc.mode = FullResolution{16, 1.0};
  CHECK_NOTHROW(rc.validate());
  CHECK_THROWS_AS(capture(AnalogTrace{{}, 1e-10, 0.0}, rc), InvalidArgument);
}

TEST_CASE("capture is reproducible from its seed") {
  std::vector<double> x(128);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.02 * std::sin(0.2 * static_cast<double>(i));
  for (ReceiverMode mode : {ReceiverMode{Slicer{}}, ReceiverMode{FullResolution{7, 0.1}}}) {
    ReceiverConfig rc;
    rc.mode = mode;
    rc.noise_sigma = 0.03;
    rc.traces = 300;
    rc.seed = 1234;
    const AnalogTrace in{x, 1e-10, 0.0};
    const auto a = capture(in, rc), b = capture(in, rc);
    CHECK(a.sums == b.sums);
    rc.seed = 1235;
    CHECK(capture(in, rc).sums != a.sums);
  }
}

TEST_CASE("dithered slicer recovers the analog amplitude") {
  // Full-scale cascade rendered on the portable grid.
  const testing::PairChain chain(9, 4, 1024);
  const auto events = enumerate_reflections(testing::cascade_path());
  const auto analog = propagate(chain.fa, events, chain.opts, true);
  auto centred = analog.samples;
  const double m = testing::mean(centred);
  for (auto& v : centred) v -= m;
  double peak = 0.0;
  for (double v : centred) peak = std::max(peak, std::abs(v));
  // Noise comparable to the signal peak.
  for (double sigma : {0.5 * peak, peak, 2.0 * peak}) {
    CAPTURE(sigma);
    ReceiverConfig rc;
    rc.noise_sigma = sigma;
    rc.traces = 4000;
    rc.seed = 77;
    CHECK(pearson(normalize(capture(analog, rc)), centred) > 0.99);
  }
}

TEST_CASE("coherent accumulation keeps the single-trace peak width") {
  const testing::PairChain chain(6, 4, 64);
  const std::vector<ReflectionEvent> ev{{40.3 * chain.ts(), 1.0, "echo"}};
  const auto ta = propagate(chain.fa, ev, chain.opts, true);
  const auto tb = propagate(chain.fb, ev, chain.opts, true);
  const auto width = [&](std::size_t traces, double jitter_s, std::uint64_t seed) {
    ReceiverConfig rc;
    rc.mode = FullResolution{16, 1.0};
    rc.traces = traces;
    rc.jitter_sigma_s = jitter_s;
    rc.seed = seed;
    const auto a = normalize(capture(ta, rc));
    rc.seed = seed + 1;
    const auto b = normalize(capture(tb, rc));
    const auto corr = cross_correlate_pair(a, b, chain.pair, 4, chain.ts());
    return fit_gaussian(corr, find_peaks(corr, 0.5, 5e-9).front(), 8).sigma_s / chain.ts();
  };
  const double single = width(1, 0.0, 1);
  CHECK(width(2000, 0.0, 1) == doctest::Approx(single).epsilon(1e-9));

  // Random clock offsets convolve the lobe with their distribution, so the
  // width grows in quadrature: sqrt(s0^2 + j^2).
  for (double j : {0.2, 1.0}) {
    CAPTURE(j);
    const double widened = width(2000, j * chain.ts(), 3);
    CHECK(widened == doctest::Approx(std::hypot(single, j)).epsilon(0.01));
  }
  CHECK(width(2000, 1.0 * chain.ts(), 3) > 1.05 * single);
}

TEST_CASE("accumulation csv and binary records") {
  AccumulatedTrace acc;
  acc.sums = {-3, 0, 70000000000LL};
  acc.trace_count = 4000;
  acc.sample_period_s = 1e-10;
  acc.mode = ModeTag::full_res;
  acc.lsb = 0.001;

  std::ostringstream csv;
  write_csv(csv, acc);
  CHECK(csv.str() == "index,sum\n0,-3\n1,0\n2,70000000000\n");

  std::ostringstream bin;
  write_binary(bin, acc);
  const auto bytes = bin.str();
  REQUIRE(bytes.size() == 4 + 8 + 3 * 8);
  CHECK(static_cast<unsigned char>(bytes[0]) == 0xa0);  // 4000 = 0x0fa0, little-endian
  CHECK(static_cast<unsigned char>(bytes[1]) == 0x0f);
  CHECK(static_cast<unsigned char>(bytes[4]) == 3);
  CHECK(static_cast<unsigned char>(bytes[12]) == 0xfd);  // -3 two's complement

  std::istringstream in(bytes);
  const auto back = read_binary(in, ModeTag::full_res, 1e-10, 0.001);
  CHECK(back.sums == acc.sums);
  CHECK(back.trace_count == 4000);
  std::istringstream truncated(bytes.substr(0, 20));
  CHECK_THROWS_AS(read_binary(truncated, ModeTag::slicer, 1e-10), InvalidArgument);
}
