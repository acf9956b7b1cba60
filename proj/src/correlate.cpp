#include "cotdr/correlate.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <numeric>
#include <ostream>

#include <Eigen/Dense>
#include <fftw3.h>

#include "cotdr/error.hpp"

namespace cotdr {

namespace {

std::ptrdiff_t wrap(std::ptrdiff_t i, std::ptrdiff_t n) {
  i %= n;
  return i < 0 ? i + n : i;
}

// fftw planning is not thread-safe; execution on distinct plans is.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

class RealFft {
 public:
  explicit RealFft(std::size_t n) : n_(n), real_(n), spectrum_(n / 2 + 1) {
    std::lock_guard lock(fftw_planner_mutex());
    auto* freq = reinterpret_cast<fftw_complex*>(spectrum_.data());
    forward_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), real_.data(), freq, FFTW_ESTIMATE);
    inverse_ = fftw_plan_dft_c2r_1d(static_cast<int>(n), freq, real_.data(), FFTW_ESTIMATE);
  }
  ~RealFft() {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(inverse_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::vector<std::complex<double>> forward(std::span<const double> x) {
    std::fill(real_.begin(), real_.end(), 0.0);
    std::copy(x.begin(), x.end(), real_.begin());
    fftw_execute(forward_);
    return spectrum_;
  }

  // Unnormalised inverse.
  std::vector<double> inverse(std::span<const std::complex<double>> spectrum) {
    std::copy(spectrum.begin(), spectrum.end(), spectrum_.begin());
    fftw_execute(inverse_);
    return real_;
  }

 private:
  std::size_t n_;
  std::vector<double> real_;
  std::vector<std::complex<double>> spectrum_;
  fftw_plan forward_;
  fftw_plan inverse_;
};

// r[k] = sum_j ref[j] x[(k + j) mod L]
std::vector<double> correlate_direct(std::span<const double> x, std::span<const double> ref) {
  const std::size_t len = x.size();
  std::vector<double> r(len, 0.0);
  for (std::size_t k = 0; k < len; ++k) {
    double acc = 0.0;
    const std::size_t head = std::min(ref.size(), len - k);
    for (std::size_t j = 0; j < head; ++j) acc += ref[j] * x[k + j];
    for (std::size_t j = head; j < ref.size(); ++j) acc += ref[j] * x[(k + j) % len];
    r[k] = acc;
  }
  return r;
}

std::vector<double> correlate_fft(std::span<const double> x, std::span<const double> ref) {
  const std::size_t len = x.size();
  RealFft fft(len);
  auto xs = fft.forward(x);
  std::vector<double> ref_padded(len, 0.0);
  for (std::size_t j = 0; j < ref.size(); ++j) ref_padded[j % len] += ref[j];
  const auto rs = fft.forward(ref_padded);
  for (std::size_t i = 0; i < xs.size(); ++i) xs[i] *= std::conj(rs[i]);
  auto r = fft.inverse(xs);
  for (auto& v : r) v /= static_cast<double>(len);
  return r;
}

std::vector<double> correlate_one(std::span<const double> trace, const BinaryCode& code, int samples_per_chip,
                                  const CorrelationOptions& options) {
  const auto ref = oversample(code, samples_per_chip);
  if (trace.size() < ref.size())
    throw InvalidArgument("trace (" + std::to_string(trace.size()) + " samples) is shorter than the code (" +
                          std::to_string(ref.size()) + " samples)");

  std::vector<double> x(trace.begin(), trace.end());
  if (options.remove_mean) {
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
    for (auto& v : x) v -= mean;
  }

  bool direct = options.method == CorrelationMethod::direct;
  if (options.method == CorrelationMethod::automatic)
    direct = code.length() <= 1024 && static_cast<double>(x.size()) * static_cast<double>(ref.size()) <= 1048576.0;
  return direct ? correlate_direct(x, ref) : correlate_fft(x, ref);
}

double median(std::vector<double> v) {
  const auto mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  return 0.5 * (upper + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
}

struct GaussParams {
  double amplitude;
  double mu;
  double sigma;
};

double gauss(const GaussParams& p, double x) {
  const double d = (x - p.mu) / p.sigma;
  return p.amplitude * std::exp(-0.5 * d * d);
}

}  // namespace

double CorrelationTrace::at(std::ptrdiff_t lag) const {
  return values[static_cast<std::size_t>(wrap(lag, static_cast<std::ptrdiff_t>(values.size())))];
}

CorrelationTrace cross_correlate(std::span<const double> trace, const BinaryCode& code, int samples_per_chip,
                                 double sample_period_s, const CorrelationOptions& options) {
  auto r = correlate_one(trace, code, samples_per_chip, options);
  const double energy = static_cast<double>(code.length()) * samples_per_chip;
  for (auto& v : r) v /= energy;
  return {std::move(r), sample_period_s};
}

CorrelationTrace cross_correlate_pair(std::span<const double> trace_a, std::span<const double> trace_b,
                                      const GolayPair& pair, int samples_per_chip, double sample_period_s,
                                      const CorrelationOptions& options) {
  if (trace_a.size() != trace_b.size()) throw InvalidArgument("pair accumulations differ in length");
  auto r = correlate_one(trace_a, pair.a, samples_per_chip, options);
  const auto rb = correlate_one(trace_b, pair.b, samples_per_chip, options);
  const double energy = static_cast<double>(pair.a.length() + pair.b.length()) * samples_per_chip;
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = (r[i] + rb[i]) / energy;
  return {std::move(r), sample_period_s};
}

std::vector<std::ptrdiff_t> find_peaks(const CorrelationTrace& corr, double min_height, double min_separation_s) {
  if (corr.values.empty()) throw InvalidArgument("empty correlation");
  if (!(min_height > 0.0 && min_height <= 1.0)) throw InvalidArgument("min_height must be in (0, 1]");

  const auto len = static_cast<std::ptrdiff_t>(corr.values.size());
  const double global_max = *std::max_element(corr.values.begin(), corr.values.end());
  if (!(global_max > 0.0)) return {};
  const double floor = min_height * global_max;

  std::vector<std::ptrdiff_t> candidates;
  for (std::ptrdiff_t i = 0; i < len; ++i) {
    const double v = corr.values[static_cast<std::size_t>(i)];
    if (v >= floor && v > corr.at(i - 1) && v >= corr.at(i + 1)) candidates.push_back(i);
  }
  std::stable_sort(candidates.begin(), candidates.end(), [&](auto a, auto b) {
    return corr.values[static_cast<std::size_t>(a)] > corr.values[static_cast<std::size_t>(b)];
  });

  const double min_sep = corr.sample_period_s > 0.0 ? min_separation_s / corr.sample_period_s : 0.0;
  std::vector<std::ptrdiff_t> kept;
  for (auto c : candidates) {
    const bool clear = std::all_of(kept.begin(), kept.end(), [&](auto k) {
      const auto d = std::abs(c - k);
      return static_cast<double>(std::min(d, len - d)) >= min_sep;
    });
    if (clear) kept.push_back(c);
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

PeakEstimate fit_gaussian(const CorrelationTrace& corr, std::ptrdiff_t peak_lag, int half_window,
                          const FitOptions& options) {
  const auto len = static_cast<std::ptrdiff_t>(corr.values.size());
  const int guard = options.guard_width > 0 ? options.guard_width : half_window;
  const std::ptrdiff_t reach = half_window + (options.subtract_floor ? guard : 0);
  if (half_window < 1) throw InvalidArgument("half window must be at least 1");
  if (2 * reach + 1 > len) throw InvalidArgument("fit window does not fit in the correlation");

  const std::ptrdiff_t first = peak_lag - half_window;
  const std::ptrdiff_t last = peak_lag + half_window;

  double floor = 0.0;
  if (options.subtract_floor) {
    std::vector<double> annulus;
    for (std::ptrdiff_t k = 1; k <= guard; ++k) {
      annulus.push_back(corr.at(first - k));
      annulus.push_back(corr.at(last + k));
    }
    floor = median(std::move(annulus));
  }

  const auto count = static_cast<std::size_t>(2 * half_window + 1);
  std::vector<double> xs(count), ys(count);
  for (std::size_t i = 0; i < count; ++i) {
    xs[i] = static_cast<double>(static_cast<std::ptrdiff_t>(i) - half_window);
    ys[i] = corr.at(first + static_cast<std::ptrdiff_t>(i)) - floor;
  }

  // ln y = a + b x + c x^2, weighted by y^2
  Eigen::Matrix3d normal = Eigen::Matrix3d::Zero();
  Eigen::Vector3d rhs = Eigen::Vector3d::Zero();
  std::size_t positive = 0;
  for (std::size_t i = 0; i < count; ++i) {
    if (!(ys[i] > 0.0)) continue;
    ++positive;
    const double w = ys[i] * ys[i];
    const Eigen::Vector3d basis(1.0, xs[i], xs[i] * xs[i]);
    normal += w * basis * basis.transpose();
    rhs += w * std::log(ys[i]) * basis;
  }
  if (positive < 3) throw FitFailure("fewer than three positive samples", first, last);
  const Eigen::Vector3d coef = normal.colPivHouseholderQr().solve(rhs);
  const double c = coef[2];
  if (!(c < 0.0) || !std::isfinite(coef[0]) || !std::isfinite(coef[1]))
    throw FitFailure("log-quadratic does not open downward", first, last);

  GaussParams p{std::exp(coef[0] - coef[1] * coef[1] / (4.0 * c)), -coef[1] / (2.0 * c), std::sqrt(-0.5 / c)};
  if (!std::isfinite(p.amplitude)) throw FitFailure("log-quadratic amplitude overflows", first, last);

  bool refined = false;
  if (options.refine) {
    GaussParams q = p;
    bool ok = true;
    for (int it = 0; it < options.max_iterations && ok; ++it) {
      Eigen::Matrix3d jtj = Eigen::Matrix3d::Zero();
      Eigen::Vector3d jtr = Eigen::Vector3d::Zero();
      for (std::size_t i = 0; i < count; ++i) {
        const double d = xs[i] - q.mu;
        const double e = std::exp(-0.5 * d * d / (q.sigma * q.sigma));
        const double r = ys[i] - q.amplitude * e;
        const Eigen::Vector3d grad(e, q.amplitude * e * d / (q.sigma * q.sigma),
                                   q.amplitude * e * d * d / (q.sigma * q.sigma * q.sigma));
        jtj += grad * grad.transpose();
        jtr += r * grad;
      }
      const Eigen::Vector3d step = jtj.ldlt().solve(jtr);
      if (!step.allFinite()) {
        ok = false;
        break;
      }
      q.amplitude += step[0];
      q.mu += step[1];
      q.sigma += step[2];
      if (!(q.sigma > 0.0) || !(q.amplitude > 0.0) || std::abs(q.mu) > half_window) {
        ok = false;
        break;
      }
      if (std::abs(step[0]) <= options.step_tolerance * std::abs(q.amplitude) &&
          std::abs(step[1]) <= options.step_tolerance * q.sigma &&
          std::abs(step[2]) <= options.step_tolerance * q.sigma)
        break;
    }
    if (ok) {
      p = q;
      refined = true;
    }
  }

  if (!(p.mu >= -half_window && p.mu <= half_window))
    throw FitFailure("fitted centre falls outside the window", first, last);

  double sq = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const double r = ys[i] - gauss(p, xs[i]);
    sq += r * r;
  }

  PeakEstimate est;
  est.delay_s = (static_cast<double>(peak_lag) + p.mu) * corr.sample_period_s;
  est.amplitude = p.amplitude;
  est.sigma_s = p.sigma * corr.sample_period_s;
  est.rms_residual = std::sqrt(sq / static_cast<double>(count));
  est.floor = floor;
  est.first_lag = first;
  est.last_lag = last;
  est.refined = refined;
  return est;
}

const LabeledPeak* LatencyMeasurement::find(const std::string& label) const {
  for (const auto& e : events)
    if (e.label == label) return &e;
  return nullptr;
}

LatencyMeasurement measure_latency(const CorrelationTrace& corr, const PeakConfig& config) {
  if (!(corr.sample_period_s > 0.0)) throw InvalidArgument("correlation needs a sample period");
  const auto peaks = find_peaks(corr, config.min_height, config.min_separation_s);
  const auto len = static_cast<std::ptrdiff_t>(corr.values.size());
  const double period = corr.sample_period_s * static_cast<double>(len);

  LatencyMeasurement out;
  struct Assigned {
    std::string label;
    std::ptrdiff_t lag;
    double expected_s;
    bool has_expected;
  };
  std::vector<Assigned> assigned;

  if (config.expected.empty()) {
    for (std::size_t i = 0; i < peaks.size(); ++i)
      assigned.push_back({i == 0 ? "reference" : "peak" + std::to_string(i), peaks[i], 0.0, false});
  } else {
    const double tol_s = config.match_tolerance_s > 0.0 ? config.match_tolerance_s : 0.5 * config.min_separation_s;
    const double tol = tol_s / corr.sample_period_s;
    for (const auto& e : config.expected) {
      const double want = e.round_trip_delay_s / corr.sample_period_s;
      std::ptrdiff_t best = -1;
      double best_dist = tol;
      for (auto lag : peaks) {
        double d = std::fmod(std::abs(static_cast<double>(lag) - want), static_cast<double>(len));
        d = std::min(d, static_cast<double>(len) - d);
        if (d <= best_dist) {
          best_dist = d;
          best = lag;
        }
      }
      if (best < 0) {
        if (&e == &config.expected.front())
          throw MeasurementError("reference peak '" + e.label + "' not found");
        out.warnings.push_back("no peak found for '" + e.label + "'");
        continue;
      }
      assigned.push_back({e.label, best, e.round_trip_delay_s, true});
    }
    if (assigned.size() < config.expected.size())
      out.warnings.push_back("found " + std::to_string(assigned.size()) + " of " +
                             std::to_string(config.expected.size()) + " expected peaks");
  }
  if (assigned.empty()) throw MeasurementError("no reference peak found");

  for (std::size_t i = 0; i < assigned.size(); ++i) {
    const auto& a = assigned[i];
    PeakEstimate est;
    try {
      est = fit_gaussian(corr, a.lag, config.half_window, config.fit);
    } catch (const FitFailure& err) {
      if (i == 0) throw MeasurementError(std::string("reference fit failed: ") + err.what());
      out.warnings.push_back("fit failed for '" + a.label + "': " + err.what());
      continue;
    }
    if (a.has_expected) est.delay_s += std::round((a.expected_s - est.delay_s) / period) * period;
    if (i == 0) {
      out.reference = est;
      out.reference_delay_s = est.delay_s;
    } else {
      out.events.push_back({a.label, est});
      out.absolute_latencies.push_back({a.label, est.delay_s - out.reference_delay_s});
    }
  }
  return out;
}

void write_csv(std::ostream& out, const CorrelationTrace& corr) {
  const auto old = out.precision(12);
  out << "lag,time_s,value\n";
  for (std::size_t i = 0; i < corr.values.size(); ++i)
    out << i << ',' << static_cast<double>(i) * corr.sample_period_s << ',' << corr.values[i] << '\n';
  out.precision(old);
}

void write_csv(std::ostream& out, std::span<const LabeledPeak> peaks) {
  const auto old = out.precision(15);
  out << "label,delay_s,amplitude,sigma_s,rms_residual,first_lag,last_lag\n";
  for (const auto& p : peaks)
    out << p.label << ',' << p.peak.delay_s << ',' << p.peak.amplitude << ',' << p.peak.sigma_s << ','
        << p.peak.rms_residual << ',' << p.peak.first_lag << ',' << p.peak.last_lag << '\n';
  out.precision(old);
}

void write_fit_diagnostics(std::ostream& out, const CorrelationTrace& corr, const PeakEstimate& peak) {
  const auto old = out.precision(12);
  const double len = static_cast<double>(corr.values.size());
  const double centre = 0.5 * static_cast<double>(peak.first_lag + peak.last_lag);
  double mu = peak.delay_s / corr.sample_period_s;
  mu -= std::round((mu - centre) / len) * len;
  const double sigma = peak.sigma_s / corr.sample_period_s;
  out << "lag,value,fitted\n";
  for (auto lag = peak.first_lag; lag <= peak.last_lag; ++lag) {
    const double d = (static_cast<double>(lag) - mu) / sigma;
    out << lag << ',' << corr.at(lag) - peak.floor << ',' << peak.amplitude * std::exp(-0.5 * d * d) << '\n';
  }
  out.precision(old);
}

}  // namespace cotdr
