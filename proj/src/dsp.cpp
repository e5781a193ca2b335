#include "audeeg/dsp.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "audeeg/error.h"

namespace audeeg::dsp {

SignalBuffer::SignalBuffer(std::size_t channels, std::size_t samples, double rate)
    : channels_(channels), samples_(samples), rate_(rate), data_(channels * samples, 0.0) {}

SignalBuffer::SignalBuffer(std::vector<std::vector<double>> channels, double rate)
    : channels_(channels.size()),
      samples_(channels.empty() ? 0 : channels.front().size()),
      rate_(rate) {
  data_.reserve(channels_ * samples_);
  for (const auto& ch : channels) {
    if (ch.size() != samples_) throw ValidationError("SignalBuffer: channel lengths differ");
    data_.insert(data_.end(), ch.begin(), ch.end());
  }
}

void SignalBuffer::validate() const {
  if (!(rate_ > 0.0) || !std::isfinite(rate_)) {
    throw ValidationError("SignalBuffer: sample rate must be positive");
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      throw ValidationError("SignalBuffer: non-finite sample in channel " +
                            std::to_string(i / std::max<std::size_t>(samples_, 1)) +
                            " at index " + std::to_string(i % std::max<std::size_t>(samples_, 1)));
    }
  }
}

Biquad design(const BiquadSpec& spec, double rate) {
  if (!(rate > 0.0)) throw ValidationError("design: sample rate must be positive");
  if (!(spec.frequency > 0.0) || spec.frequency >= rate / 2.0) {
    throw ValidationError("design: frequency " + std::to_string(spec.frequency) +
                          " Hz must lie in (0, Nyquist=" + std::to_string(rate / 2.0) + ")");
  }
  if (!(spec.q > 0.0)) throw ValidationError("design: q must be positive");
  if (spec.cascade < 1) throw ValidationError("design: cascade must be at least 1");

  const double w0 = 2.0 * std::numbers::pi * spec.frequency / rate;
  const double cw = std::cos(w0);
  const double alpha = std::sin(w0) / (2.0 * spec.q);
  const double a0 = 1.0 + alpha;
  Biquad f{};
  switch (spec.kind) {
    case FilterKind::highpass:
      f.b0 = (1.0 + cw) / 2.0 / a0;
      f.b1 = -(1.0 + cw) / a0;
      f.b2 = (1.0 + cw) / 2.0 / a0;
      break;
    case FilterKind::notch:
      f.b0 = 1.0 / a0;
      f.b1 = -2.0 * cw / a0;
      f.b2 = 1.0 / a0;
      break;
  }
  f.a1 = -2.0 * cw / a0;
  f.a2 = (1.0 - alpha) / a0;
  return f;
}

std::vector<double> biquad_pass(const Biquad& f, std::span<const double> x, double z1,
                                double z2) {
  // Transposed direct form II.
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double in = x[i];
    const double out = f.b0 * in + z1;
    z1 = f.b1 * in - f.a1 * out + z2;
    z2 = f.b2 * in - f.a2 * out;
    y[i] = out;
  }
  return y;
}

namespace {

// State (z1, z2) such that a constant input of 1 yields the steady-state
// output from the first sample on.
std::pair<double, double> steady_state(const Biquad& f) {
  const double gain = (f.b0 + f.b1 + f.b2) / (1.0 + f.a1 + f.a2);
  const double z2 = f.b2 - f.a2 * gain;
  const double z1 = gain - f.b0;
  return {z1, z2};
}

std::vector<double> zero_phase(const Biquad& f, std::span<const double> x) {
  const std::size_t n = x.size();
  const std::size_t pad = std::min<std::size_t>(n > 1 ? n - 1 : 0, 9);
  // Odd reflection about the end samples.
  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

  const auto [s1, s2] = steady_state(f);
  std::vector<double> fwd = biquad_pass(f, ext, s1 * ext.front(), s2 * ext.front());
  std::reverse(fwd.begin(), fwd.end());
  std::vector<double> bwd = biquad_pass(f, fwd, s1 * fwd.front(), s2 * fwd.front());
  std::reverse(bwd.begin(), bwd.end());
  return {bwd.begin() + static_cast<std::ptrdiff_t>(pad),
          bwd.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

}  // namespace

SignalBuffer filter_apply(const SignalBuffer& sig, const BiquadSpec& spec) {
  const Biquad f = design(spec, sig.rate());
  SignalBuffer out = sig;
  if (sig.samples() == 0) return out;
  for (std::size_t c = 0; c < sig.channels(); ++c) {
    std::vector<double> x(sig.channel(c).begin(), sig.channel(c).end());
    for (std::size_t s = 0; s < spec.cascade; ++s) x = zero_phase(f, x);
    std::copy(x.begin(), x.end(), out.channel(c).begin());
  }
  return out;
}

SignalBuffer scale_minmax(const SignalBuffer& sig, bool per_channel) {
  SignalBuffer out = sig;
  if (sig.samples() == 0 || sig.channels() == 0) return out;
  auto rescale = [](std::span<double> x, double lo, double hi) {
    if (!(hi > lo)) {
      std::fill(x.begin(), x.end(), 0.0);
      return;
    }
    const double range = hi - lo;
    for (double& v : x) v = std::clamp(2.0 * ((v - lo) / range) - 1.0, -1.0, 1.0);
  };
  if (per_channel) {
    for (std::size_t c = 0; c < out.channels(); ++c) {
      auto ch = out.channel(c);
      const auto [lo, hi] = std::minmax_element(ch.begin(), ch.end());
      rescale(ch, *lo, *hi);
    }
  } else {
    const auto vals = sig.values();
    const auto [lo, hi] = std::minmax_element(vals.begin(), vals.end());
    const double l = *lo, h = *hi;
    for (std::size_t c = 0; c < out.channels(); ++c) rescale(out.channel(c), l, h);
  }
  return out;
}

}  // namespace audeeg::dsp
