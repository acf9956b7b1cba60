#include "cotdr/signal.hpp"

#include <bit>
#include <ostream>
#include <string>

#include "cotdr/error.hpp"

namespace cotdr {

BinaryCode::BinaryCode(std::vector<std::int8_t> chips, CodeKind kind)
    : chips_(std::move(chips)), kind_(kind) {
  if (chips_.size() < 2) throw InvalidArgument("code needs at least 2 chips");
  if (kind_ != CodeKind::custom && !std::has_single_bit(chips_.size()))
    throw InvalidArgument("Golay code length must be a power of two, got " +
                          std::to_string(chips_.size()));
  for (std::size_t i = 0; i < chips_.size(); ++i) {
    if (chips_[i] != 1 && chips_[i] != -1)
      throw InvalidArgument("chip " + std::to_string(i) + " is not +1 or -1");
  }
}

GolayPair generate_golay_pair(int order) {
  if (order < 1 || order > 20)
    throw InvalidArgument("Golay order must be in 1..20, got " + std::to_string(order));

  std::vector<std::int8_t> a{1};
  std::vector<std::int8_t> b{1};
  for (int step = 0; step < order; ++step) {
    std::vector<std::int8_t> next_a = a;
    std::vector<std::int8_t> next_b = a;
    next_a.insert(next_a.end(), b.begin(), b.end());
    for (auto chip : b) next_b.push_back(static_cast<std::int8_t>(-chip));
    a = std::move(next_a);
    b = std::move(next_b);
  }
  return {BinaryCode(std::move(a), CodeKind::golay_a), BinaryCode(std::move(b), CodeKind::golay_b)};
}

std::vector<std::int64_t> autocorrelation(const BinaryCode& code) {
  const auto n = code.length();
  std::vector<std::int64_t> r(n, 0);
  for (std::size_t k = 0; k < n; ++k) {
    std::int64_t acc = 0;
    for (std::size_t j = 0; j + k < n; ++j) acc += code[j] * code[j + k];
    r[k] = acc;
  }
  return r;
}

void FrameConfig::validate() const {
  if (!(bit_rate_hz > 0.0)) throw InvalidArgument("bit_rate_hz must be positive");
  if (samples_per_chip < 1) throw InvalidArgument("samples_per_chip must be >= 1");
  if (code_length < 2) throw InvalidArgument("code_length must be >= 2");
}

std::vector<double> oversample(const BinaryCode& code, int samples_per_chip) {
  if (samples_per_chip < 1) throw InvalidArgument("samples_per_chip must be >= 1");
  std::vector<double> out;
  out.reserve(code.length() * static_cast<std::size_t>(samples_per_chip));
  for (auto chip : code.chips())
    for (int s = 0; s < samples_per_chip; ++s) out.push_back(chip);
  return out;
}

ProbeSignal build_frame(const BinaryCode& code, const FrameConfig& config) {
  config.validate();
  if (config.code_length != code.length())
    throw InvalidArgument("frame expects a " + std::to_string(config.code_length) +
                          "-chip code, got " + std::to_string(code.length()));

  std::vector<double> samples = oversample(code, config.samples_per_chip);
  samples.resize(config.frame_samples(), 0.0);
  return ProbeSignal{std::move(samples), config.sample_period_s(), code,
                     config.frame_duration_s(), config.samples_per_chip};
}

void write_csv(std::ostream& out, const BinaryCode& code) {
  for (auto chip : code.chips()) out << static_cast<int>(chip) << '\n';
}

void write_csv(std::ostream& out, const ProbeSignal& probe) {
  for (double s : probe.samples) out << s << '\n';
}

}  // namespace cotdr
