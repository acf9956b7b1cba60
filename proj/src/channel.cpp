#include "cotdr/channel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <sstream>

#include "cotdr/error.hpp"

namespace cotdr {

namespace {

std::ptrdiff_t wrap_index(std::ptrdiff_t i, std::ptrdiff_t n) {
  i %= n;
  return i < 0 ? i + n : i;
}

double blackman_sinc(double v, double half_width) {
  if (std::abs(v) >= half_width) return 0.0;
  const double arg = std::numbers::pi * v / half_width;
  const double window = 0.42 + 0.5 * std::cos(arg) + 0.08 * std::cos(2.0 * arg);
  if (v == 0.0) return window;
  const double x = std::numbers::pi * v;
  return window * std::sin(x) / x;
}

// Interpolation weights for the samples at floor(p) - (taps/2 - 1) ... floor(p) + taps/2,
// where frac = p - floor(p).
std::vector<double> sinc_kernel(double frac, int taps) {
  const int lead = taps / 2 - 1;
  std::vector<double> h(static_cast<std::size_t>(taps));
  double sum = 0.0;
  for (int m = 0; m < taps; ++m) {
    h[static_cast<std::size_t>(m)] = blackman_sinc(frac - (m - lead), taps / 2.0);
    sum += h[static_cast<std::size_t>(m)];
  }
  for (auto& w : h) w /= sum;
  return h;
}

void check_taps(int taps) {
  if (taps < 2 || taps % 2 != 0) throw InvalidArgument("interpolation taps must be even and >= 2");
}

// out[n] += gain * x(n * step - offset), x periodic on its own grid.
void accumulate_resampled(std::span<const double> x, double offset, double step, double gain, int taps,
                          std::span<double> out) {
  const auto len = static_cast<std::ptrdiff_t>(x.size());
  const int lead = taps / 2 - 1;
  const bool same_grid = std::abs(step - 1.0) < 1e-12;

  std::vector<double> kernel;
  const double base0 = std::floor(-offset);
  if (same_grid) kernel = sinc_kernel(-offset - base0, taps);
  for (std::size_t n = 0; n < out.size(); ++n) {
    double base = static_cast<double>(n) + base0;
    if (!same_grid) {
      const double p = static_cast<double>(n) * step - offset;
      base = std::floor(p);
      kernel = sinc_kernel(p - base, taps);
    }
    std::ptrdiff_t idx = wrap_index(static_cast<std::ptrdiff_t>(base) - lead, len);
    double acc = 0.0;
    for (int m = 0; m < taps; ++m) {
      acc += kernel[static_cast<std::size_t>(m)] * x[static_cast<std::size_t>(idx)];
      if (++idx == len) idx = 0;
    }
    out[n] += gain * acc;
  }
}

}  // namespace

void FiberSection::validate() const {
  const std::string name = label.empty() ? std::string("section") : "section '" + label + "'";
  if (!(length_m > 0.0)) throw InvalidArgument(name + ": length must be positive");
  if (!(end_reflectance >= 0.0 && end_reflectance <= 1.0))
    throw InvalidArgument(name + ": reflectance must be in [0, 1]");
  if (!(group_index >= 1.0 && group_index <= 2.0))
    throw InvalidArgument(name + ": group index must be in [1, 2]");
  if (!(tcd_ppm_per_k >= 0.0)) throw InvalidArgument(name + ": TCD must be non-negative");
  if (!(attenuation_db_per_km >= 0.0)) throw InvalidArgument(name + ": attenuation must be non-negative");
}

void FiberPath::validate() const {
  for (const auto& s : sections) s.validate();
  if (!(reference_reflectance >= 0.0 && reference_reflectance <= 1.0))
    throw InvalidArgument("reference reflectance must be in [0, 1]");
  if (!(lead_delay_s >= 0.0)) throw InvalidArgument("lead delay must be non-negative");
  const bool any = reference_reflectance > 0.0 ||
                   std::any_of(sections.begin(), sections.end(),
                               [](const FiberSection& s) { return s.end_reflectance > 0.0; });
  if (!any) throw InvalidArgument("fiber path has no reflector");
}

double section_round_trip_delay(const FiberSection& section) {
  section.validate();
  const double base = 2.0 * section.length_m * section.group_index / kSpeedOfLight;
  const double dt = section.temperature_c - section.reference_temperature_c;
  return base * (1.0 + section.tcd_ppm_per_k * 1e-6 * dt);
}

std::vector<ReflectionEvent> enumerate_reflections(const FiberPath& path, bool include_ghosts) {
  path.validate();

  struct Reflector {
    double delay;
    double reflectance;
    double transmission_before;  // one-way power transmission from the launch plane
    std::string label;
  };
  std::vector<Reflector> reflectors;

  double delay = path.lead_delay_s;
  double transmission = 1.0;
  if (path.reference_reflectance > 0.0)
    reflectors.push_back({delay, path.reference_reflectance, transmission, "reference"});
  transmission *= 1.0 - path.reference_reflectance;

  for (std::size_t i = 0; i < path.sections.size(); ++i) {
    const auto& s = path.sections[i];
    delay += section_round_trip_delay(s);
    transmission *= std::pow(10.0, -s.attenuation_db_per_km * s.length_m * 1e-3 / 10.0);
    if (s.end_reflectance > 0.0)
      reflectors.push_back({delay, s.end_reflectance, transmission,
                            s.label.empty() ? "section" + std::to_string(i) : s.label});
    transmission *= 1.0 - s.end_reflectance;
  }

  std::vector<ReflectionEvent> events;
  for (const auto& r : reflectors)
    events.push_back({r.delay, r.reflectance * r.transmission_before * r.transmission_before, r.label});

  if (include_ghosts) {
    // Bounce j -> i -> j: one extra round trip between the two reflectors.
    for (std::size_t j = 0; j < reflectors.size(); ++j) {
      for (std::size_t i = 0; i < j; ++i) {
        const auto& ri = reflectors[i];
        const auto& rj = reflectors[j];
        const double between = rj.transmission_before / (ri.transmission_before * (1.0 - ri.reflectance));
        const double primary = rj.reflectance * rj.transmission_before * rj.transmission_before;
        events.push_back({2.0 * rj.delay - ri.delay, primary * rj.reflectance * ri.reflectance * between * between,
                          "ghost:" + ri.label + "-" + rj.label});
      }
    }
  }

  std::stable_sort(events.begin(), events.end(), [](const ReflectionEvent& a, const ReflectionEvent& b) {
    return a.round_trip_delay_s < b.round_trip_delay_s;
  });
  return events;
}

std::vector<double> gaussian_lowpass(std::span<const double> x, double sample_period_s, double bandwidth_hz) {
  if (!(bandwidth_hz > 0.0) || !(sample_period_s > 0.0))
    throw InvalidArgument("low-pass needs positive bandwidth and sample period");
  if (x.empty()) return {};
  // |H(f3)|^2 = 1/2 for H(f) = exp(-2 pi^2 sigma^2 f^2)
  const double sigma = std::sqrt(std::log(2.0)) / (2.0 * std::numbers::pi * bandwidth_hz) / sample_period_s;
  const auto half = static_cast<std::ptrdiff_t>(std::max(1.0, std::ceil(6.0 * sigma)));
  std::vector<double> g(static_cast<std::size_t>(2 * half + 1));
  double sum = 0.0;
  for (std::ptrdiff_t k = -half; k <= half; ++k) {
    const double v = std::exp(-0.5 * static_cast<double>(k * k) / (sigma * sigma));
    g[static_cast<std::size_t>(k + half)] = v;
    sum += v;
  }
  for (auto& v : g) v /= sum;

  const auto len = static_cast<std::ptrdiff_t>(x.size());
  std::vector<double> y(x.size(), 0.0);
  for (std::ptrdiff_t n = 0; n < len; ++n) {
    double acc = 0.0;
    for (std::ptrdiff_t k = -half; k <= half; ++k)
      acc += g[static_cast<std::size_t>(k + half)] * x[static_cast<std::size_t>(wrap_index(n - k, len))];
    y[static_cast<std::size_t>(n)] = acc;
  }
  return y;
}

std::vector<double> fractional_delay(std::span<const double> x, double shift_samples, int taps) {
  check_taps(taps);
  std::vector<double> y(x.size(), 0.0);
  if (x.empty()) return y;
  accumulate_resampled(x, shift_samples, 1.0, 1.0, taps, y);
  return y;
}

AnalogTrace propagate(const ProbeSignal& probe, std::span<const ReflectionEvent> events,
                      const PropagateOptions& options, bool pair_mode) {
  check_taps(options.interpolation_taps);
  if (probe.samples.empty()) throw InvalidArgument("empty probe");
  if (!(options.rx_sample_period_s > 0.0)) throw InvalidArgument("receiver sample period must be positive");

  const double tx_period = probe.sample_period_s;
  const double frame = tx_period * static_cast<double>(probe.samples.size());
  const double fill = frame - tx_period * static_cast<double>(probe.burst_samples());
  const double limit = pair_mode ? fill : frame;

  for (const auto& e : events) {
    if (e.round_trip_delay_s < 0.0) throw InvalidArgument("negative echo delay for '" + e.label + "'");
    if (e.round_trip_delay_s >= limit) {
      std::ostringstream msg;
      msg << "echo '" << e.label << "' at " << e.round_trip_delay_s * 1e9 << " ns is ambiguous: "
          << (pair_mode ? "fill" : "frame") << " lasts only " << limit * 1e9 << " ns";
      throw ConfigurationError(msg.str());
    }
  }

  const double rx_period = options.rx_sample_period_s;
  const double rx_len = frame / rx_period;
  const auto n_rx = static_cast<std::size_t>(std::llround(rx_len));
  if (n_rx == 0 || std::abs(rx_len - static_cast<double>(n_rx)) > 1e-6)
    throw ConfigurationError("frame period is not a whole number of receiver samples");

  std::vector<double> intensity(probe.samples.size());
  std::transform(probe.samples.begin(), probe.samples.end(), intensity.begin(),
                 [](double s) { return 0.5 * (s + 1.0); });
  if (options.rx_bandwidth_hz) intensity = gaussian_lowpass(intensity, tx_period, *options.rx_bandwidth_hz);

  AnalogTrace trace{std::vector<double>(n_rx, 0.0), rx_period, 0.0};
  const double step = rx_period / tx_period;
  for (const auto& e : events) {
    if (e.amplitude == 0.0) continue;
    accumulate_resampled(intensity, e.round_trip_delay_s / tx_period, step, e.amplitude,
                         options.interpolation_taps, trace.samples);
  }
  return trace;
}

void write_csv(std::ostream& out, const AnalogTrace& trace) {
  out << "time_s,amplitude\n";
  const auto old = out.precision(12);
  for (std::size_t i = 0; i < trace.samples.size(); ++i)
    out << trace.t0_s + static_cast<double>(i) * trace.sample_period_s << ',' << trace.samples[i] << '\n';
  out.precision(old);
}

}  // namespace cotdr
