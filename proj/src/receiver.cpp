#include "cotdr/receiver.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>
#include <thread>

#include <boost/random/normal_distribution.hpp>
#include <boost/random/taus88.hpp>

#include "cotdr/error.hpp"

namespace cotdr {

namespace {

using NoiseEngine = boost::random::taus88;

// The seed is mixed before the trace index is folded in; a bare seed ^ index
// would make seeds differing in low bits share the same set of streams.
std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

NoiseEngine trace_engine(std::uint64_t seed, std::uint64_t trace_index) {
  const std::uint64_t s = mix(seed) ^ trace_index;
  std::seed_seq seq{static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(s >> 32)};
  return NoiseEngine(seq);
}

// The slicer fires when x + sigma z > t. Instead of drawing z we draw the
// uniform u = Phi(-z) directly: the decision is u < Phi((x - t) / sigma),
// evaluated against a 32-bit engine output scaled to [0, 2^32].
std::uint64_t slicer_threshold(double x, double t, double sigma) {
  double p;
  if (sigma == 0.0)
    p = x > t ? 1.0 : 0.0;
  else
    p = 0.5 * std::erfc(-(x - t) / (sigma * std::numbers::sqrt2));
  return static_cast<std::uint64_t>(std::llround(p * 4294967296.0));
}

struct Partial {
  std::vector<std::int64_t> sums;
  std::uint64_t saturated = 0;
};

class Accumulator {
 public:
  Accumulator(std::vector<double> base, const ReceiverConfig& config, double sample_period)
      : base_(std::move(base)), config_(config), sample_period_(sample_period) {
    if (const auto* slicer = std::get_if<Slicer>(&config_.mode); slicer && config_.jitter_sigma_s == 0.0) {
      thresholds_.resize(base_.size());
      for (std::size_t n = 0; n < base_.size(); ++n)
        thresholds_[n] = slicer_threshold(base_[n], slicer->threshold, config_.noise_sigma);
    }
  }

  Partial run(std::size_t first, std::size_t last) const {
    Partial part{std::vector<std::int64_t>(base_.size(), 0), 0};
    std::vector<double> shifted;
    for (std::size_t i = first; i < last; ++i) {
      auto engine = trace_engine(config_.seed, i);
      boost::random::normal_distribution<double> normal;
      const std::vector<double>* x = &base_;
      if (config_.jitter_sigma_s > 0.0) {
        const double offset = config_.jitter_sigma_s * normal(engine) / sample_period_;
        shifted = fractional_delay(base_, offset);
        x = &shifted;
      }
      if (const auto* slicer = std::get_if<Slicer>(&config_.mode)) {
        if (thresholds_.empty()) {
          for (std::size_t n = 0; n < x->size(); ++n)
            part.sums[n] += engine() < slicer_threshold((*x)[n], slicer->threshold, config_.noise_sigma);
        } else {
          for (std::size_t n = 0; n < x->size(); ++n) part.sums[n] += engine() < thresholds_[n];
        }
      } else {
        const auto& adc = std::get<FullResolution>(config_.mode);
        const double inv_lsb = 1.0 / adc.lsb();
        const std::int64_t top = (std::int64_t{1} << (adc.adc_bits - 1)) - 1;
        const std::int64_t bottom = -(std::int64_t{1} << (adc.adc_bits - 1));
        for (std::size_t n = 0; n < x->size(); ++n) {
          double v = (*x)[n];
          if (config_.noise_sigma > 0.0) v += config_.noise_sigma * normal(engine);
          auto q = static_cast<std::int64_t>(std::floor(v * inv_lsb));
          if (q > top || q < bottom) {
            q = std::clamp(q, bottom, top);
            ++part.saturated;
          }
          part.sums[n] += q;
        }
      }
    }
    return part;
  }

 private:
  std::vector<double> base_;
  const ReceiverConfig& config_;
  double sample_period_;
  std::vector<std::uint64_t> thresholds_;
};

}  // namespace

double FullResolution::lsb() const { return 2.0 * full_scale / std::ldexp(1.0, adc_bits); }

void ReceiverConfig::validate() const {
  if (traces < 1) throw InvalidArgument("receiver needs at least one trace");
  if (traces > 0xffffffffu) throw InvalidArgument("trace count does not fit the 32-bit counter");
  if (!(noise_sigma >= 0.0)) throw InvalidArgument("noise sigma must be non-negative");
  if (!(jitter_sigma_s >= 0.0)) throw InvalidArgument("jitter sigma must be non-negative");
  if (const auto* adc = std::get_if<FullResolution>(&mode)) {
    if (adc->adc_bits < 1 || adc->adc_bits > 16) throw InvalidArgument("ADC bits must be in [1, 16]");
    if (!(adc->full_scale > 0.0)) throw InvalidArgument("ADC full scale must be positive");
  }
}

AccumulatedTrace capture(const AnalogTrace& analog, const ReceiverConfig& config) {
  config.validate();
  if (analog.samples.empty()) throw InvalidArgument("empty analog trace");

  std::vector<double> base = analog.samples;
  if (config.ac_coupled) {
    const double mean = std::accumulate(base.begin(), base.end(), 0.0) / static_cast<double>(base.size());
    for (auto& v : base) v -= mean;
  }

  const Accumulator accumulator(std::move(base), config, analog.sample_period_s);

  const std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t workers = std::min(hw, std::max<std::size_t>(1, config.traces / 64));
  std::vector<Partial> parts(workers);
  if (workers == 1) {
    parts[0] = accumulator.run(0, config.traces);
  } else {
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t first = config.traces * w / workers;
      const std::size_t last = config.traces * (w + 1) / workers;
      threads.emplace_back([&, w, first, last] { parts[w] = accumulator.run(first, last); });
    }
    for (auto& t : threads) t.join();
  }

  AccumulatedTrace acc;
  acc.sums = std::move(parts[0].sums);
  acc.saturated = parts[0].saturated;
  for (std::size_t w = 1; w < workers; ++w) {
    for (std::size_t n = 0; n < acc.sums.size(); ++n) acc.sums[n] += parts[w].sums[n];
    acc.saturated += parts[w].saturated;
  }
  acc.trace_count = static_cast<std::uint32_t>(config.traces);
  acc.sample_period_s = analog.sample_period_s;
  if (const auto* adc = std::get_if<FullResolution>(&config.mode)) {
    acc.mode = ModeTag::full_res;
    acc.lsb = adc->lsb();
  } else {
    acc.mode = ModeTag::slicer;
  }
  return acc;
}

std::vector<double> normalize(const AccumulatedTrace& acc) {
  if (acc.trace_count < 1) throw InvalidArgument("accumulated trace holds no traces");
  const double n = acc.trace_count;
  std::vector<double> out(acc.sums.size());
  if (acc.mode == ModeTag::slicer) {
    std::transform(acc.sums.begin(), acc.sums.end(), out.begin(),
                   [n](std::int64_t s) { return 2.0 * static_cast<double>(s) / n - 1.0; });
  } else {
    // mid-rise: code q reconstructs to (q + 1/2) lsb
    std::transform(acc.sums.begin(), acc.sums.end(), out.begin(),
                   [&](std::int64_t s) { return (static_cast<double>(s) / n + 0.5) * acc.lsb; });
  }
  return out;
}

void write_csv(std::ostream& out, const AccumulatedTrace& acc) {
  out << "index,sum\n";
  for (std::size_t i = 0; i < acc.sums.size(); ++i) out << i << ',' << acc.sums[i] << '\n';
}

namespace {

template <typename T>
void put_le(std::ostream& out, T value) {
  auto u = static_cast<std::make_unsigned_t<T>>(value);
  char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bytes[i] = static_cast<char>(u & 0xff);
    u = static_cast<std::make_unsigned_t<T>>(u >> 8);
  }
  out.write(bytes, sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw InvalidArgument("truncated trace record");
  std::make_unsigned_t<T> u = 0;
  for (std::size_t i = sizeof(T); i-- > 0;) u = static_cast<std::make_unsigned_t<T>>((u << 8) | bytes[i]);
  return static_cast<T>(u);
}

}  // namespace

void write_binary(std::ostream& out, const AccumulatedTrace& acc) {
  put_le<std::uint32_t>(out, acc.trace_count);
  put_le<std::uint64_t>(out, acc.sums.size());
  for (auto s : acc.sums) put_le<std::int64_t>(out, s);
}

AccumulatedTrace read_binary(std::istream& in, ModeTag mode, double sample_period_s, double lsb) {
  AccumulatedTrace acc;
  acc.trace_count = get_le<std::uint32_t>(in);
  const auto length = get_le<std::uint64_t>(in);
  if (length > (std::uint64_t{1} << 32)) throw InvalidArgument("implausible trace record length");
  acc.sums.resize(length);
  for (auto& s : acc.sums) s = get_le<std::int64_t>(in);
  acc.mode = mode;
  acc.sample_period_s = sample_period_s;
  acc.lsb = lsb;
  return acc;
}

}  // namespace cotdr
