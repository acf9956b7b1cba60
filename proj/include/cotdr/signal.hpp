#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace cotdr {

enum class CodeKind { golay_a, golay_b, custom };

/// A bipolar (+1/-1) chip sequence.
///
/// Construction validates the chips: at least two of them, every one exactly
/// +1 or -1, and a power-of-two length for the Golay kinds.
class BinaryCode {
 public:
  BinaryCode(std::vector<std::int8_t> chips, CodeKind kind);

  std::span<const std::int8_t> chips() const { return chips_; }
  std::size_t length() const { return chips_.size(); }
  CodeKind kind() const { return kind_; }
  std::int8_t operator[](std::size_t i) const { return chips_[i]; }

  friend bool operator==(const BinaryCode&, const BinaryCode&) = default;

 private:
  std::vector<std::int8_t> chips_;
  CodeKind kind_;
};

struct GolayPair {
  BinaryCode a;
  BinaryCode b;
};

/// Complementary pair of length 2^order built by the concatenation recursion
/// A' = A|B, B' = A|-B starting from A = B = [+1]. Valid orders are 1..20.
GolayPair generate_golay_pair(int order);

/// Aperiodic autocorrelation for lags 0..N-1, in exact integer arithmetic.
std::vector<std::int64_t> autocorrelation(const BinaryCode& code);

struct FrameConfig {
  double bit_rate_hz = 2.5e9;
  int samples_per_chip = 4;
  std::size_t code_length = 512;
  std::size_t fill_chips = 1024;
  bool pair_mode = true;

  void validate() const;
  double chip_period_s() const { return 1.0 / bit_rate_hz; }
  double sample_period_s() const { return 1.0 / (bit_rate_hz * samples_per_chip); }
  double frame_duration_s() const {
    return static_cast<double>(code_length + fill_chips) / bit_rate_hz;
  }
  std::size_t frame_samples() const {
    return (code_length + fill_chips) * static_cast<std::size_t>(samples_per_chip);
  }
};

/// One transmit frame on the transmit sample grid: the NRZ burst followed by
/// the fill, which is stored as exact zeros.
struct ProbeSignal {
  std::vector<double> samples;
  double sample_period_s = 0.0;
  BinaryCode code;
  double frame_duration_s = 0.0;
  int samples_per_chip = 1;

  std::size_t burst_samples() const { return code.length() * static_cast<std::size_t>(samples_per_chip); }
};

ProbeSignal build_frame(const BinaryCode& code, const FrameConfig& config);

/// Oversampled bipolar reference burst (chip value held for samples_per_chip samples).
std::vector<double> oversample(const BinaryCode& code, int samples_per_chip);

// Debug dumps, one value per line.
void write_csv(std::ostream& out, const BinaryCode& code);
void write_csv(std::ostream& out, const ProbeSignal& probe);

}  // namespace cotdr
