#include <doctest.h>

#include <cmath>
#include <cstring>

#include "audeeg/dcca.h"
#include "audeeg/error.h"
#include "audeeg/nn.h"
#include "audeeg/pipeline.h"
#include "helpers.h"

using namespace audeeg;
using namespace audeeg::nn;

namespace {

Tensor3<double> random_tensor(std::size_t b, std::size_t l, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  Tensor3<double> t(b, l, c);
  for (double& v : t.data) v = rng.normal();
  return t;
}

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Scalar probe L = <forward(x), r> used for finite-difference checks.
template <typename Fwd>
double fd(Fwd&& f, double& slot, double h) {
  const double keep = slot;
  slot = keep + h;
  const double up = f();
  slot = keep - h;
  const double down = f();
  slot = keep;
  return (up - down) / (2 * h);
}

}  // namespace

TEST_CASE("layer notation") {
  CHECK(describe(LayerSpec::conv(3, 3, 128, Padding::valid)) == "conv-3-3-128");
  CHECK(describe(LayerSpec::maxpool(5)) == "mp-5");
  CHECK(parse_layer_kind("maxpool1d") == LayerKind::maxpool1d);
  CHECK(parse_padding("same") == Padding::same);
  CHECK_THROWS_AS(parse_layer_kind("lstm"), ParseError);
}

TEST_CASE("conv1d forward examples") {
  CHECK(output_shape(LayerSpec::conv(3, 3, 128, Padding::valid), {33075, 1}) == Shape{11025, 128});
  CHECK(output_shape(LayerSpec::conv(3, 2, 4, Padding::same), {7, 1}) == Shape{4, 4});

  Tensor3<double> x(1, 4, 1);
  x.data = {1, 2, 3, 4};
  const std::vector<double> w{1, 1, 1}, b{0};
  const auto y = conv1d_forward<double>(x, w, b, 3, 1, 1, Padding::valid);
  REQUIRE(y.length == 2);
  CHECK(y.data == std::vector<double>{6, 9});

  const auto id = conv1d_forward<double>(x, std::vector<double>{1}, b, 1, 1, 1, Padding::valid);
  CHECK(id.data == x.data);

  // Same padding: [0,1,2,3,4,0] windows.
  const auto s = conv1d_forward<double>(x, w, b, 3, 1, 1, Padding::same);
  CHECK(s.data == std::vector<double>{3, 6, 9, 7});

  CHECK_THROWS_AS(conv1d_forward<double>(x, std::vector<double>{1, 1}, b, 3, 1, 1, Padding::valid),
                  DimensionError);
  Tensor3<double> shorty(1, 2, 1);
  CHECK_THROWS_AS(conv1d_forward<double>(shorty, w, b, 3, 1, 1, Padding::valid), DimensionError);
}

TEST_CASE("conv1d matches a direct loop") {
  const auto x = random_tensor(2, 13, 3, 1);
  const std::size_t width = 4, stride = 2, out = 5;
  const auto w = random_vec(width * 3 * out, 2), b = random_vec(out, 3);
  const auto y = conv1d_forward<double>(x, w, b, width, stride, out, Padding::valid);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t t = 0; t < y.length; ++t)
      for (std::size_t o = 0; o < out; ++o) {
        double s = b[o];
        for (std::size_t k = 0; k < width; ++k)
          for (std::size_t c = 0; c < 3; ++c) s += x.at(n, t * stride + k, c) * w[(k * 3 + c) * out + o];
        CHECK(y.at(n, t, o) == doctest::Approx(s).epsilon(1e-12));
      }
}

TEST_CASE("conv1d gradients") {
  for (Padding pad : {Padding::valid, Padding::same}) {
    auto x = random_tensor(2, 11, 3, 4);
    auto w = random_vec(3 * 3 * 4, 5), b = random_vec(4, 6);
    const auto y0 = conv1d_forward<double>(x, w, b, 3, 2, 4, pad);
    const auto r = random_tensor(2, y0.length, 4, 7);
    auto loss = [&] { return dot(conv1d_forward<double>(x, w, b, 3, 2, 4, pad).data, r.data); };
    std::vector<double> gw(w.size(), 0.0), gb(b.size(), 0.0);
    const auto gx = conv1d_backward<double>(x, r, w, 3, 2, pad, gw, gb);
    for (std::size_t i = 0; i < w.size(); i += 5) CHECK(gw[i] == doctest::Approx(fd(loss, w[i], 1e-6)).epsilon(1e-7));
    for (std::size_t i = 0; i < b.size(); ++i) CHECK(gb[i] == doctest::Approx(fd(loss, b[i], 1e-6)).epsilon(1e-7));
    for (std::size_t i = 0; i < x.data.size(); i += 3)
      CHECK(gx.data[i] == doctest::Approx(fd(loss, x.data[i], 1e-6)).epsilon(1e-7));
  }
}

TEST_CASE("maxpool") {
  Tensor3<double> x(1, 6, 1);
  x.data = {1, 3, 2, 5, 4, 6};
  std::vector<std::uint32_t> arg;
  const auto y = maxpool1d_forward<double>(x, 3, &arg);
  CHECK(y.data == std::vector<double>{3, 6});

  Tensor3<double> c(1, 6, 1, 2.0);
  CHECK(maxpool1d_forward<double>(c, 3).data == std::vector<double>{2, 2});

  Tensor3<double> g(1, 2, 1);
  g.data = {10, 20};
  const auto gx = maxpool1d_backward<double>(g, arg, {6, 1}, 3);
  CHECK(gx.data == std::vector<double>{0, 10, 0, 0, 0, 20});

  Tensor3<double> odd(1, 7, 1);
  CHECK_THROWS_AS(maxpool1d_forward<double>(odd, 3), ValidationError);

  auto xr = random_tensor(2, 12, 3, 8);
  std::vector<std::uint32_t> a2;
  const auto yr = maxpool1d_forward<double>(xr, 4, &a2);
  const auto r = random_tensor(2, 3, 3, 9);
  const auto gxr = maxpool1d_backward<double>(r, a2, {12, 3}, 4);
  auto loss = [&] { return dot(maxpool1d_forward<double>(xr, 4).data, r.data); };
  for (std::size_t i = 0; i < xr.data.size(); ++i)
    CHECK(gxr.data[i] == doctest::Approx(fd(loss, xr.data[i], 1e-6)).epsilon(1e-4));
}

TEST_CASE("batchnorm train mode normalizes") {
  LayerParams<double> p;
  p.gain.assign(3, 1.0);
  p.shift.assign(3, 0.0);
  p.running_mean.assign(3, 0.0);
  p.running_var.assign(3, 1.0);
  auto x = random_tensor(4, 20, 3, 10);
  for (std::size_t i = 0; i < x.data.size(); i += 3) x.data[i] = 5.0 + 3.0 * x.data[i];
  const auto y = batchnorm_forward<double>(x, p, Mode::train, {});
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0.0, v = 0.0;
    for (std::size_t i = c; i < y.data.size(); i += 3) m += y.data[i];
    m /= 80.0;
    for (std::size_t i = c; i < y.data.size(); i += 3) v += (y.data[i] - m) * (y.data[i] - m);
    v /= 80.0;
    CHECK(std::abs(m) < 1e-6);
    CHECK(std::abs(v - 1.0) < 1e-4);
  }
  CHECK(p.stats_ready);

  LayerParams<double> q = p;
  q.gain.assign(3, 2.0);
  q.shift.assign(3, 3.0);
  const auto z = batchnorm_forward<double>(x, q, Mode::train, {}, nullptr, false);
  for (std::size_t i = 0; i < z.data.size(); ++i) CHECK(z.data[i] == doctest::Approx(3.0 + 2.0 * y.data[i]));
}

TEST_CASE("batchnorm running statistics") {
  LayerParams<double> p;
  p.gain.assign(1, 1.0);
  p.shift.assign(1, 0.0);
  p.running_mean.assign(1, 0.0);
  p.running_var.assign(1, 1.0);
  Tensor3<double> x(1, 4, 1);
  CHECK_THROWS_AS(batchnorm_forward<double>(x, p, Mode::infer, {}), ValidationError);
  x.data = {1, 2, 3, 4};
  batchnorm_forward<double>(x, p, Mode::train, {});
  CHECK(p.running_mean[0] == doctest::Approx(2.5));
  CHECK(p.running_var[0] == doctest::Approx(5.0 / 3.0));  // unbiased
  x.data = {11, 12, 13, 14};
  batchnorm_forward<double>(x, p, Mode::train, {.momentum = 0.9});
  CHECK(p.running_mean[0] == doctest::Approx(0.9 * 2.5 + 0.1 * 12.5));
  x.data = {2.5, 2.5, 2.5, 2.5};
  const auto y = batchnorm_forward<double>(x, p, Mode::infer, {});
  CHECK(y.data[0] == doctest::Approx((2.5 - p.running_mean[0]) / std::sqrt(p.running_var[0] + 1e-5)));

  Tensor3<double> single(1, 1, 1);
  CHECK_THROWS_AS(batchnorm_forward<double>(single, p, Mode::train, {}), ValidationError);
}

TEST_CASE("batchnorm gradients") {
  LayerParams<double> p;
  p.gain = random_vec(3, 11);
  p.shift = random_vec(3, 12);
  p.running_mean.assign(3, 0.0);
  p.running_var.assign(3, 1.0);
  auto x = random_tensor(3, 5, 3, 13);
  const auto r = random_tensor(3, 5, 3, 14);
  BatchNormStats<double> st;
  batchnorm_forward<double>(x, p, Mode::train, {}, &st, false);
  std::vector<double> gg(3, 0.0), gs(3, 0.0);
  const auto gx = batchnorm_backward<double>(x, st, p.gain, r, gg, gs);
  auto loss = [&] { return dot(batchnorm_forward<double>(x, p, Mode::train, {}, nullptr, false).data, r.data); };
  for (std::size_t i = 0; i < x.data.size(); ++i)
    CHECK(testing::rel_err(gx.data[i], fd(loss, x.data[i], 1e-5), 1e-6) < 1e-4);
  for (std::size_t c = 0; c < 3; ++c) {
    CHECK(testing::rel_err(gg[c], fd(loss, p.gain[c], 1e-5)) < 1e-4);
    CHECK(testing::rel_err(gs[c], fd(loss, p.shift[c], 1e-5)) < 1e-4);
  }
}

TEST_CASE("relu") {
  Tensor3<double> x(1, 4, 1);
  x.data = {-1, 0.5, -0.2, 3};
  const auto y = relu_forward<double>(x);
  CHECK(y.data == std::vector<double>{0, 0.5, 0, 3});
  Tensor3<double> g(1, 4, 1, 1.0);
  CHECK(relu_backward<double>(y, g).data == std::vector<double>{0, 1, 0, 1});
}

TEST_CASE("dense") {
  Tensor3<double> x(1, 1, 1, 2.0);
  CHECK(dense_forward<double>(x, std::vector<double>{3}, std::vector<double>{1}, 1).data[0] == 7.0);

  auto xi = random_tensor(2, 1, 3, 15);
  std::vector<double> eye{1, 0, 0, 0, 1, 0, 0, 0, 1};
  CHECK(dense_forward<double>(xi, eye, std::vector<double>(3, 0.0), 3).data == xi.data);

  auto xr = random_tensor(3, 2, 2, 16);  // flattened to 4 features
  auto w = random_vec(4 * 5, 17), b = random_vec(5, 18);
  const auto r = random_tensor(3, 1, 5, 19);
  std::vector<double> gw(w.size(), 0.0), gb(5, 0.0);
  const auto gx = dense_backward<double>(xr, r, w, gw, gb);
  auto loss = [&] { return dot(dense_forward<double>(xr, w, b, 5).data, r.data); };
  for (std::size_t i = 0; i < w.size(); ++i) CHECK(std::abs(gw[i] - fd(loss, w[i], 1e-5)) < 1e-6);
  for (std::size_t i = 0; i < 5; ++i) CHECK(std::abs(gb[i] - fd(loss, b[i], 1e-5)) < 1e-6);
  for (std::size_t i = 0; i < xr.data.size(); ++i) CHECK(std::abs(gx.data[i] - fd(loss, xr.data[i], 1e-5)) < 1e-6);
}

TEST_CASE("branch shape contracts") {
  const auto audio = infer_shapes(pipeline::audio_branch(), pipeline::audio_input_shape());
  std::vector<Shape> conv_outputs;
  const auto specs = pipeline::audio_branch();
  for (std::size_t i = 0; i < specs.size(); ++i)
    if (specs[i].kind == LayerKind::conv1d || specs[i].kind == LayerKind::maxpool1d)
      conv_outputs.push_back(audio[i + 1]);
  const std::vector<Shape> expect_audio{{11025, 128}, {11025, 128}, {3675, 128}, {3675, 256}, {1225, 256},
                                        {1225, 256}, {245, 256}, {245, 512}, {49, 512}, {49, 512},
                                        {7, 512}, {7, 1024}, {1, 1024}, {1, 128}};
  CHECK(conv_outputs == expect_audio);
  CHECK(audio.back() == Shape{1, 128});

  const auto eeg = infer_shapes(pipeline::eeg_branch(), pipeline::eeg_input_shape());
  std::vector<Shape> eeg_outputs;
  const auto especs = pipeline::eeg_branch();
  for (std::size_t i = 0; i < especs.size(); ++i)
    if (especs[i].kind == LayerKind::conv1d || especs[i].kind == LayerKind::maxpool1d)
      eeg_outputs.push_back(eeg[i + 1]);
  const std::vector<Shape> expect_eeg{{125, 128}, {125, 256}, {25, 256}, {25, 512},
                                      {5, 512},   {5, 1024},  {1, 1024}, {1, 128}};
  CHECK(eeg.front() == Shape{375, 16});
  CHECK(eeg_outputs == expect_eeg);
}

TEST_CASE("init is seeded and layer streams are independent") {
  const std::vector<LayerSpec> specs{LayerSpec::conv(3, 1, 4, Padding::same), LayerSpec::batchnorm(),
                                     LayerSpec::relu(), LayerSpec::dense(3)};
  const auto a = init_params<double>(specs, {8, 2}, 5);
  const auto b = init_params<double>(specs, {8, 2}, 5);
  const auto c = init_params<double>(specs, {8, 2}, 6);
  CHECK(a.layers[0].weights == b.layers[0].weights);
  CHECK(a.layers[0].weights != c.layers[0].weights);
  const double limit = std::sqrt(6.0 / 6.0);
  for (double w : a.layers[0].weights) CHECK(std::abs(w) <= limit);
  CHECK(a.layers[1].gain == std::vector<double>(4, 1.0));
  CHECK(a.parameter_count() == (3 * 2 * 4 + 4) + (4 + 4) + (32 * 3 + 3));
}

TEST_CASE("network backward") {
  const std::vector<LayerSpec> specs{LayerSpec::conv(3, 2, 4, Padding::valid), LayerSpec::relu(),
                                     LayerSpec::batchnorm(), LayerSpec::conv(3, 1, 6, Padding::same),
                                     LayerSpec::maxpool(2), LayerSpec::relu(), LayerSpec::dense(5)};
  Network<double> net(specs, {13, 2}, 21);
  const auto x = random_tensor(6, 13, 2, 22);

  SUBCASE("backward before forward") {
    CHECK_THROWS_AS(net.backward(Tensor3<double>(6, 1, 5)), StateError);
  }
  SUBCASE("zero upstream gives zero gradients") {
    net.forward(x, Mode::train, false);
    net.zero_grad();
    net.backward(Tensor3<double>(6, 1, 5));
    for (const auto& g : net.grads())
      for (double v : g.weights) CHECK(v == 0.0);
  }
  SUBCASE("reverse mode is linear in the upstream gradient") {
    net.forward(x, Mode::train, false);
    const auto r1 = random_tensor(6, 1, 5, 23), r2 = random_tensor(6, 1, 5, 24);
    auto sum = r1;
    for (std::size_t i = 0; i < sum.data.size(); ++i) sum.data[i] += r2.data[i];
    net.zero_grad();
    const auto g1 = net.backward(r1);
    const auto w1 = net.grads()[3].weights;
    net.zero_grad();
    const auto g2 = net.backward(r2);
    const auto w2 = net.grads()[3].weights;
    net.zero_grad();
    const auto gs = net.backward(sum);
    for (std::size_t i = 0; i < gs.data.size(); ++i)
      CHECK(gs.data[i] == doctest::Approx(g1.data[i] + g2.data[i]).epsilon(1e-12));
    for (std::size_t i = 0; i < w1.size(); ++i)
      CHECK(net.grads()[3].weights[i] == doctest::Approx(w1[i] + w2[i]).epsilon(1e-12));
  }
  SUBCASE("dcca loss through the network matches finite differences") {
    const auto y = random_tensor(6, 1, 5, 25);
    auto loss_of = [&](const Tensor3<double>& out) {
      linalg::Matrix a(6, 5, std::vector<double>(out.data)), b(6, 5, std::vector<double>(y.data));
      return dcca::dcca_loss(a, b, 1e-1);
    };
    const auto out = net.forward(x, Mode::train, false);
    const auto r = loss_of(out);
    Tensor3<double> g(6, 1, 5);
    g.data.assign(r.grad_x.values().begin(), r.grad_x.values().end());
    net.zero_grad();
    net.backward(g);
    auto loss = [&] { return loss_of(net.forward(x, Mode::train, false)).loss; };
    Rng pick(26);
    double worst = 0.0;
    for (std::size_t layer : {0u, 2u, 3u, 6u}) {
      auto& p = net.params().layers[layer];
      const auto& gp = net.grads()[layer];
      auto& tensor = layer == 2 ? p.gain : p.weights;
      const auto& gt = layer == 2 ? gp.gain : gp.weights;
      for (int k = 0; k < 15; ++k) {
        const std::size_t i = pick.below(tensor.size());
        worst = std::max(worst, testing::rel_err(gt[i], fd(loss, tensor[i], 1e-5), 1e-7));
      }
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("training forward is deterministic") {
  const std::vector<LayerSpec> specs{LayerSpec::conv(3, 1, 4, Padding::same), LayerSpec::batchnorm(),
                                     LayerSpec::relu(), LayerSpec::dense(2)};
  Network<float> a(specs, {9, 1}, 3), b(specs, {9, 1}, 3);
  Tensor3<float> x(4, 9, 1);
  for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] = std::sin(0.7f * i);
  CHECK(a.forward(x, Mode::train).data == b.forward(x, Mode::train).data);
  CHECK(a.params().layers[1].running_mean == b.params().layers[1].running_mean);
}

TEST_CASE("backward does not depend on buffer alignment") {
  auto pass = [&](std::size_t pad) {
    std::vector<char> shift(pad);
    Network<float> net(pipeline::eeg_branch(), pipeline::eeg_input_shape(), 9);
    Tensor3<float> x(3, 375, 16);
    for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] = std::sin(0.3f * i);
    const auto y = net.forward(x, Mode::train);
    Tensor3<float> g(y.batch, y.length, y.channels);
    for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] = std::cos(1.1f * i);
    net.zero_grad();
    auto out = net.backward(g).data;
    for (const auto& l : net.grads()) {
      out.insert(out.end(), l.weights.begin(), l.weights.end());
      out.insert(out.end(), l.bias.begin(), l.bias.end());
    }
    return out;
  };
  const auto ref = pass(1);
  for (std::size_t pad : {3, 17, 1000, 100001}) {
    const auto got = pass(pad);
    REQUIRE(got.size() == ref.size());
    CHECK(std::memcmp(got.data(), ref.data(), ref.size() * sizeof(float)) == 0);
  }
}

TEST_CASE("calibrate averages batch statistics") {
  const std::vector<LayerSpec> specs{LayerSpec::batchnorm()};
  Network<double> net(specs, {2, 1}, 1);
  Tensor3<double> b1(1, 2, 1), b2(1, 2, 1);
  b1.data = {0, 2};
  b2.data = {10, 12};
  const std::vector<Tensor3<double>> batches{b1, b2};
  net.calibrate(batches);
  CHECK(net.params().layers[0].running_mean[0] == doctest::Approx(6.0));
  CHECK(net.params().layers[0].running_var[0] == doctest::Approx(2.0));
  CHECK(net.statistics_ready());
}
