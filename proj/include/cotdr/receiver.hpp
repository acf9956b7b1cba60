#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <variant>
#include <vector>

#include "cotdr/channel.hpp"

namespace cotdr {

/// Multi-bit ADC: mid-rise uniform quantizer over [-full_scale, +full_scale].
struct FullResolution {
  int adc_bits = 7;
  double full_scale = 1.0;

  double lsb() const;
};

/// 1-bit decision: 1 when the sample exceeds the threshold.
struct Slicer {
  double threshold = 0.0;
};

using ReceiverMode = std::variant<FullResolution, Slicer>;

struct ReceiverConfig {
  ReceiverMode mode = Slicer{};
  double noise_sigma = 0.0;   // additive white Gaussian noise per sample and trace
  std::size_t traces = 1;
  double jitter_sigma_s = 0.0;  // per-trace clock offset
  std::uint64_t seed = 0;
  bool ac_coupled = true;  // remove the trace mean before quantization

  void validate() const;
};

enum class ModeTag { full_res, slicer };

struct AccumulatedTrace {
  std::vector<std::int64_t> sums;
  std::uint32_t trace_count = 0;
  double sample_period_s = 0.0;
  ModeTag mode = ModeTag::slicer;
  double lsb = 0.0;               // quantizer step, full_res only
  std::uint64_t saturated = 0;    // clipped samples over all traces, full_res only
};

/// Accumulates `traces` noisy, quantized copies of the analog trace.
///
/// Trace i draws its noise (and its clock offset, when jitter is enabled) from
/// an engine seeded with mix(seed) ^ i, so the result depends only on the seed and
/// never on how the traces are scheduled across threads.
AccumulatedTrace capture(const AnalogTrace& analog, const ReceiverConfig& config);

/// slicer: 2 s / N - 1; full_res: mean quantizer output in amplitude units.
std::vector<double> normalize(const AccumulatedTrace& acc);

void write_csv(std::ostream& out, const AccumulatedTrace& acc);

// Little-endian record: u32 trace_count, u64 length, i64 sums[length].
void write_binary(std::ostream& out, const AccumulatedTrace& acc);
AccumulatedTrace read_binary(std::istream& in, ModeTag mode, double sample_period_s, double lsb = 0.0);

}  // namespace cotdr
