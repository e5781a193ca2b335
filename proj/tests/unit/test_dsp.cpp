#include <doctest.h>

#include <cmath>
#include <numbers>

#include "audeeg/dsp.h"
#include "audeeg/error.h"
#include "helpers.h"

using namespace audeeg;
using namespace audeeg::dsp;

namespace {

SignalBuffer tone(double hz, double rate, std::size_t n, double amp = 1.0) {
  SignalBuffer s(1, n, rate);
  for (std::size_t t = 0; t < n; ++t) s.at(0, t) = amp * std::sin(2 * std::numbers::pi * hz * t / rate);
  return s;
}

// RMS over the central 80% of a channel.
double central_rms(const SignalBuffer& s, std::size_t c = 0) {
  const auto ch = s.channel(c);
  const std::size_t lo = ch.size() / 10, hi = ch.size() - lo;
  return testing::rms(ch.subspan(lo, hi - lo));
}

double db(double ratio) { return 20.0 * std::log10(ratio); }

// Direct-form difference equation, independent of the library's pass.
std::vector<double> reference_iir(const Biquad& f, const std::vector<double>& x) {
  std::vector<double> y(x.size());
  for (std::size_t n = 0; n < x.size(); ++n) {
    const double x1 = n >= 1 ? x[n - 1] : 0.0, x2 = n >= 2 ? x[n - 2] : 0.0;
    const double y1 = n >= 1 ? y[n - 1] : 0.0, y2 = n >= 2 ? y[n - 2] : 0.0;
    y[n] = f.b0 * x[n] + f.b1 * x1 + f.b2 * x2 - f.a1 * y1 - f.a2 * y2;
  }
  return y;
}

}  // namespace

TEST_CASE("high-pass removes DC") {
  SignalBuffer dc(1, 250 * 60, 250.0);
  for (std::size_t t = 0; t < dc.samples(); ++t) dc.at(0, t) = 3.0;
  const auto out = filter_apply(dc, BiquadSpec::highpass(0.5));
  const auto ch = out.channel(0);
  double peak = 0.0;
  for (std::size_t t = ch.size() / 10; t < ch.size() - ch.size() / 10; ++t) peak = std::max(peak, std::abs(ch[t]));
  CHECK(peak / 3.0 < 1e-3);
}

TEST_CASE("notch at 50 Hz") {
  const auto spec = BiquadSpec::notch(50.0, 30.0, 2);
  SUBCASE("stopband") {
    const auto in = tone(50.0, 250.0, 250 * 20);
    CHECK(db(central_rms(filter_apply(in, spec)) / central_rms(in)) <= -40.0);
  }
  SUBCASE("passband at 10 Hz") {
    const auto in = tone(10.0, 250.0, 250 * 20);
    CHECK(std::abs(db(central_rms(filter_apply(in, spec)) / central_rms(in))) <= 1.0);
  }
}

TEST_CASE("RBJ sections have the expected DC and Nyquist gains") {
  const Biquad hp = design(BiquadSpec::highpass(0.5), 250.0);
  CHECK((hp.b0 + hp.b1 + hp.b2) == doctest::Approx(0.0).epsilon(1e-12));
  const Biquad n = design(BiquadSpec::notch(50.0), 250.0);
  CHECK((n.b0 + n.b1 + n.b2) / (1 + n.a1 + n.a2) == doctest::Approx(1.0));
  CHECK((n.b0 - n.b1 + n.b2) / (1 - n.a1 + n.a2) == doctest::Approx(1.0));
}

TEST_CASE("causal pass matches the difference equation") {
  const Biquad f = design(BiquadSpec::notch(50.0), 250.0);
  Rng rng(5);
  std::vector<double> x(400);
  for (double& v : x) v = rng.normal();
  const auto a = biquad_pass(f, x, 0.0, 0.0);
  const auto b = reference_iir(f, x);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
}

TEST_CASE("zero-phase filtering does not shift a passband tone") {
  const auto in = tone(5.0, 250.0, 2000);
  const auto out = filter_apply(in, BiquadSpec::highpass(0.5));
  // Cross-correlation peak at lag 0.
  double best = -1e9;
  int best_lag = 99;
  for (int lag = -5; lag <= 5; ++lag) {
    double s = 0.0;
    for (std::size_t t = 200; t < 1800; ++t) s += in.at(0, t) * out.at(0, t + lag);
    if (s > best) best = s, best_lag = lag;
  }
  CHECK(best_lag == 0);
}

TEST_CASE("filters act on every channel independently") {
  SignalBuffer two(2, 1000, 250.0);
  for (std::size_t t = 0; t < 1000; ++t) {
    two.at(0, t) = std::sin(0.3 * t);
    two.at(1, t) = 0.0;
  }
  const auto out = filter_apply(two, BiquadSpec::notch(50.0));
  for (double v : out.channel(1)) CHECK(v == 0.0);
}

TEST_CASE("filter design rejects frequencies outside (0, rate/2)") {
  CHECK_THROWS_AS(design(BiquadSpec::notch(200.0), 250.0), ValidationError);
  CHECK_THROWS_AS(design(BiquadSpec::highpass(0.0), 250.0), ValidationError);
}

TEST_CASE("min-max scaling") {
  const auto one = [](std::vector<double> v) { return SignalBuffer({std::move(v)}, 1.0); };
  const auto a = scale_minmax(one({0, 5, 10}), true);
  CHECK(a.at(0, 0) == -1.0);
  CHECK(a.at(0, 1) == 0.0);
  CHECK(a.at(0, 2) == 1.0);
  const auto b = scale_minmax(one({-3, 1}), true);
  CHECK(b.at(0, 0) == -1.0);
  CHECK(b.at(0, 1) == 1.0);
  const auto c = scale_minmax(one({7, 7, 7}), true);
  for (double v : c.channel(0)) CHECK(v == 0.0);

  const SignalBuffer two({{0, 1}, {0, 4}}, 1.0);
  const auto per = scale_minmax(two, true);
  CHECK(per.at(0, 1) == 1.0);
  const auto joint = scale_minmax(two, false);
  CHECK(joint.at(0, 1) == doctest::Approx(-0.5));
  CHECK(joint.at(1, 1) == 1.0);
}

TEST_CASE("signal buffers validate their samples") {
  SignalBuffer s(1, 3, 250.0);
  s.at(0, 1) = NAN;
  CHECK_THROWS_AS(s.validate(), ValidationError);
  CHECK_THROWS_AS(SignalBuffer(std::vector<std::vector<double>>{{1, 2}, {1}}, 1.0), ValidationError);
}
