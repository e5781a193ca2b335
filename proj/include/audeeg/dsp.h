#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace audeeg::dsp {

/// Multichannel real-valued time series, channel-major.
class SignalBuffer {
 public:
  SignalBuffer() = default;
  SignalBuffer(std::size_t channels, std::size_t samples, double rate);
  /// Builds from per-channel vectors; all channels must have equal length.
  SignalBuffer(std::vector<std::vector<double>> channels, double rate);

  std::size_t channels() const { return channels_; }
  std::size_t samples() const { return samples_; }
  double rate() const { return rate_; }
  double duration() const { return rate_ > 0 ? static_cast<double>(samples_) / rate_ : 0.0; }

  std::span<double> channel(std::size_t c) { return {data_.data() + c * samples_, samples_}; }
  std::span<const double> channel(std::size_t c) const {
    return {data_.data() + c * samples_, samples_};
  }
  double& at(std::size_t c, std::size_t t) { return data_[c * samples_ + t]; }
  double at(std::size_t c, std::size_t t) const { return data_[c * samples_ + t]; }

  std::span<const double> values() const { return data_; }

  /// Throws ValidationError if the rate is not positive or a sample is not finite.
  void validate() const;

  bool operator==(const SignalBuffer&) const = default;

 private:
  std::size_t channels_ = 0;
  std::size_t samples_ = 0;
  double rate_ = 0.0;
  std::vector<double> data_;
};

enum class FilterKind { highpass, notch };

struct BiquadSpec {
  FilterKind kind = FilterKind::highpass;
  double frequency = 0.5;  ///< cutoff (high-pass) or center (notch), Hz
  double q = 0.7071067811865476;
  std::size_t cascade = 1;

  static BiquadSpec highpass(double cutoff_hz, double q = 0.7071067811865476,
                             std::size_t cascade = 1) {
    return {FilterKind::highpass, cutoff_hz, q, cascade};
  }
  static BiquadSpec notch(double center_hz, double q = 30.0, std::size_t cascade = 2) {
    return {FilterKind::notch, center_hz, q, cascade};
  }
};

/// Normalized second-order section, a0 = 1.
struct Biquad {
  double b0, b1, b2, a1, a2;
};

/// Bilinear-transform (RBJ) design of one section at the given sample rate.
Biquad design(const BiquadSpec& spec, double rate);

/// Zero-phase application: every section runs forward and then over the
/// time-reversed output, per channel. Edges use odd reflection padding and
/// steady-state initial conditions.
SignalBuffer filter_apply(const SignalBuffer& sig, const BiquadSpec& spec);

/// Affine map to [-1, 1], per channel or over all channels jointly.
/// Constant input maps to zeros.
SignalBuffer scale_minmax(const SignalBuffer& sig, bool per_channel);

/// Single causal pass of one section over `x` with the given initial state.
std::vector<double> biquad_pass(const Biquad& f, std::span<const double> x, double z1,
                                double z2);

}  // namespace audeeg::dsp
