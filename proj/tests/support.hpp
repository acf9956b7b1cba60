#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "cotdr/channel.hpp"
#include "cotdr/correlate.hpp"
#include "cotdr/receiver.hpp"
#include "cotdr/signal.hpp"

namespace testing {

inline cotdr::FiberPath cascade_path() {
  cotdr::FiberPath path;
  path.reference_reflectance = 0.01;
  for (auto [label, length] : {std::pair{"4m", 4.0}, {"10m", 10.0}, {"25m", 25.0}}) {
    cotdr::FiberSection s;
    s.label = label;
    s.length_m = length;
    path.sections.push_back(s);
  }
  return path;
}

// 2 L n / c by hand, optionally with the TCD scaling.
inline double hand_delay(double length_m, double dt_k = 0.0, double n = 1.468, double tcd_ppm = 7.49) {
  return 2.0 * length_m * n / 299792458.0 * (1.0 + tcd_ppm * 1e-6 * dt_k);
}

// Noiseless pair-mode chain on a given grid: render, normalise the identity
// capture (analog samples straight through), correlate.
struct PairChain {
  cotdr::FrameConfig frame;
  cotdr::GolayPair pair;
  cotdr::ProbeSignal fa, fb;
  cotdr::PropagateOptions opts;

  explicit PairChain(int order = 9, int spc = 4, std::size_t fill = 1024, bool lowpass = true)
      : pair(cotdr::generate_golay_pair(order)),
        fa(cotdr::build_frame(pair.a, make_frame(order, spc, fill))),
        fb(cotdr::build_frame(pair.b, make_frame(order, spc, fill))) {
    frame = make_frame(order, spc, fill);
    if (lowpass) opts.rx_bandwidth_hz = cotdr::default_rx_bandwidth(frame.bit_rate_hz);
    opts.rx_sample_period_s = frame.sample_period_s();
  }

  static cotdr::FrameConfig make_frame(int order, int spc, std::size_t fill) {
    cotdr::FrameConfig f;
    f.samples_per_chip = spc;
    f.code_length = std::size_t{1} << order;
    f.fill_chips = fill;
    return f;
  }

  double ts() const { return frame.sample_period_s(); }

  cotdr::CorrelationTrace correlate(const std::vector<cotdr::ReflectionEvent>& events) const {
    const auto ta = cotdr::propagate(fa, events, opts, true);
    const auto tb = cotdr::propagate(fb, events, opts, true);
    return cotdr::cross_correlate_pair(ta.samples, tb.samples, pair, frame.samples_per_chip, ts());
  }
};

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double stdev(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace testing
