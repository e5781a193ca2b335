#include "audeeg/nn.h"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "audeeg/error.h"
#include "audeeg/rng.h"

namespace audeeg::nn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Map = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using StridedConstMap = Eigen::Map<const RowMat<T>, Eigen::Unaligned, Eigen::OuterStride<>>;

Eigen::Index idx(std::size_t v) { return static_cast<Eigen::Index>(v); }

// Plain loop instead of an Eigen reduction: Eigen peels vectorized
// reductions by buffer address, which would make sums depend on heap layout.
template <typename T>
void add_column_sums(const T* m, std::size_t rows, std::size_t cols, T* out) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c] += m[r * cols + c];
}

struct ConvGeometry {
  std::size_t out_length = 0;
  std::size_t pad_left = 0;
  std::size_t pad_right = 0;
};

ConvGeometry conv_geometry(std::size_t length, std::size_t width, std::size_t stride,
                           Padding padding) {
  ConvGeometry g;
  if (padding == Padding::valid) {
    if (length < width) {
      throw DimensionError("conv1d: input length " + std::to_string(length) +
                           " is shorter than filter width " + std::to_string(width));
    }
    g.out_length = (length - width) / stride + 1;
  } else {
    g.out_length = (length + stride - 1) / stride;
    const std::size_t needed = (g.out_length - 1) * stride + width;
    const std::size_t total = needed > length ? needed - length : 0;
    g.pad_left = total / 2;
    g.pad_right = total - g.pad_left;
  }
  return g;
}

std::string shape_str(Shape s) {
  return std::to_string(s.length) + "x" + std::to_string(s.channels);
}

}  // namespace

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv1d: return "conv1d";
    case LayerKind::maxpool1d: return "maxpool1d";
    case LayerKind::batchnorm: return "batchnorm";
    case LayerKind::relu: return "relu";
    case LayerKind::dense: return "dense";
  }
  return "relu";
}

LayerKind parse_layer_kind(const std::string& name) {
  if (name == "conv1d") return LayerKind::conv1d;
  if (name == "maxpool1d") return LayerKind::maxpool1d;
  if (name == "batchnorm") return LayerKind::batchnorm;
  if (name == "relu") return LayerKind::relu;
  if (name == "dense") return LayerKind::dense;
  throw ParseError("unknown layer kind '" + name + "'");
}

std::string to_string(Padding padding) { return padding == Padding::valid ? "valid" : "same"; }

Padding parse_padding(const std::string& name) {
  if (name == "valid") return Padding::valid;
  if (name == "same") return Padding::same;
  throw ParseError("unknown padding '" + name + "'");
}

LayerSpec LayerSpec::conv(std::size_t width, std::size_t stride, std::size_t channels,
                          Padding padding) {
  return {LayerKind::conv1d, width, stride, channels, padding};
}
LayerSpec LayerSpec::maxpool(std::size_t width) {
  return {LayerKind::maxpool1d, width, width, 0, Padding::valid};
}
LayerSpec LayerSpec::batchnorm() { return {LayerKind::batchnorm, 1, 1, 0, Padding::valid}; }
LayerSpec LayerSpec::relu() { return {LayerKind::relu, 1, 1, 0, Padding::valid}; }
LayerSpec LayerSpec::dense(std::size_t out_features) {
  return {LayerKind::dense, 1, 1, out_features, Padding::valid};
}

std::string describe(const LayerSpec& s) {
  switch (s.kind) {
    case LayerKind::conv1d:
      return "conv-" + std::to_string(s.width) + "-" + std::to_string(s.stride) + "-" +
             std::to_string(s.out_channels);
    case LayerKind::maxpool1d: return "mp-" + std::to_string(s.width);
    case LayerKind::batchnorm: return "bn";
    case LayerKind::relu: return "relu";
    case LayerKind::dense: return "fc-" + std::to_string(s.out_channels);
  }
  return "?";
}

Shape output_shape(const LayerSpec& s, Shape in) {
  if (s.width < 1 || s.stride < 1) throw ValidationError("layer width and stride must be >= 1");
  switch (s.kind) {
    case LayerKind::conv1d: {
      if (s.out_channels == 0) throw ValidationError("conv1d needs out_channels > 0");
      const ConvGeometry g = conv_geometry(in.length, s.width, s.stride, s.padding);
      return {g.out_length, s.out_channels};
    }
    case LayerKind::maxpool1d:
      if (in.length % s.width != 0) {
        throw ValidationError("maxpool1d: length " + std::to_string(in.length) +
                              " is not divisible by window " + std::to_string(s.width));
      }
      return {in.length / s.width, in.channels};
    case LayerKind::batchnorm:
    case LayerKind::relu: return in;
    case LayerKind::dense:
      if (s.out_channels == 0) throw ValidationError("dense needs out_features > 0");
      return {1, s.out_channels};
  }
  return in;
}

std::vector<Shape> infer_shapes(std::span<const LayerSpec> specs, Shape input) {
  std::vector<Shape> shapes{input};
  for (const auto& s : specs) shapes.push_back(output_shape(s, shapes.back()));
  return shapes;
}

template <typename T>
std::size_t ParamStore<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weights.size() + l.bias.size() + l.gain.size() + l.shift.size();
  return n;
}

template <typename T>
ParamStore<T> init_params(std::vector<LayerSpec> specs, Shape input, std::uint64_t seed) {
  const std::vector<Shape> shapes = infer_shapes(specs, input);
  ParamStore<T> store;
  store.input = input;
  store.seed = seed;
  store.layers.resize(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const LayerSpec& s = specs[i];
    const Shape in = shapes[i];
    auto& p = store.layers[i];
    Rng rng(mix_seed(seed, i));
    if (s.kind == LayerKind::conv1d || s.kind == LayerKind::dense) {
      const std::size_t fan_in =
          s.kind == LayerKind::conv1d ? s.width * in.channels : in.length * in.channels;
      const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
      p.weights.resize(fan_in * s.out_channels);
      for (auto& w : p.weights) w = static_cast<T>(rng.uniform(-limit, limit));
      p.bias.assign(s.out_channels, T(0));
    } else if (s.kind == LayerKind::batchnorm) {
      p.gain.assign(in.channels, T(1));
      p.shift.assign(in.channels, T(0));
      p.running_mean.assign(in.channels, T(0));
      p.running_var.assign(in.channels, T(1));
      p.stats_ready = false;
    }
  }
  store.specs = std::move(specs);
  return store;
}

// ---- conv ------------------------------------------------------------------

template <typename T>
Tensor3<T> conv1d_forward(const Tensor3<T>& x, std::span<const T> weights,
                          std::span<const T> bias, std::size_t width, std::size_t stride,
                          std::size_t out_channels, Padding padding) {
  const std::size_t cin = x.channels;
  const std::size_t k = width * cin;
  if (weights.size() != k * out_channels || bias.size() != out_channels) {
    throw DimensionError("conv1d_forward: weights " + std::to_string(weights.size()) +
                         " / bias " + std::to_string(bias.size()) + " do not match width " +
                         std::to_string(width) + ", in " + std::to_string(cin) + ", out " +
                         std::to_string(out_channels));
  }
  if (stride < 1 || width < 1) throw ValidationError("conv1d_forward: width/stride must be >= 1");
  const ConvGeometry g = conv_geometry(x.length, width, stride, padding);
  Tensor3<T> y(x.batch, g.out_length, out_channels);
  const std::size_t padded_len = x.length + g.pad_left + g.pad_right;
  std::vector<T> buffer;
  if (g.pad_left + g.pad_right > 0) buffer.assign(padded_len * cin, T(0));

  ConstMap<T> w(weights.data(), idx(k), idx(out_channels));
  Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias.data(), idx(out_channels));
  for (std::size_t n = 0; n < x.batch; ++n) {
    const T* src = x.example(n).data();
    if (!buffer.empty()) {
      std::copy(x.example(n).begin(), x.example(n).end(),
                buffer.begin() + static_cast<std::ptrdiff_t>(g.pad_left * cin));
      src = buffer.data();
    }
    StridedConstMap<T> cols(src, idx(g.out_length), idx(k), Eigen::OuterStride<>(idx(stride * cin)));
    Map<T> out(y.example(n).data(), idx(g.out_length), idx(out_channels));
    out.noalias() = cols * w;
    out.rowwise() += b;
  }
  return y;
}

template <typename T>
Tensor3<T> conv1d_backward(const Tensor3<T>& x, const Tensor3<T>& grad_out,
                           std::span<const T> weights, std::size_t width, std::size_t stride,
                           Padding padding, std::span<T> grad_weights, std::span<T> grad_bias,
                           bool need_input_grad) {
  const std::size_t cin = x.channels;
  const std::size_t cout = grad_out.channels;
  const std::size_t k = width * cin;
  const ConvGeometry g = conv_geometry(x.length, width, stride, padding);
  if (grad_out.batch != x.batch || grad_out.length != g.out_length ||
      weights.size() != k * cout || grad_weights.size() != k * cout ||
      grad_bias.size() != cout) {
    throw DimensionError("conv1d_backward: gradient shape does not match the layer");
  }
  const std::size_t padded_len = x.length + g.pad_left + g.pad_right;
  const bool padded = g.pad_left + g.pad_right > 0;
  std::vector<T> buffer;
  if (padded) buffer.assign(padded_len * cin, T(0));

  Tensor3<T> dx;
  std::vector<T> dcols, dpad;
  if (need_input_grad) {
    dx = Tensor3<T>(x.batch, x.length, x.channels);
    dcols.resize(g.out_length * k);
    dpad.resize(padded_len * cin);
  }

  ConstMap<T> w(weights.data(), idx(k), idx(cout));
  Map<T> gw(grad_weights.data(), idx(k), idx(cout));
  for (std::size_t n = 0; n < x.batch; ++n) {
    const T* src = x.example(n).data();
    if (padded) {
      std::copy(x.example(n).begin(), x.example(n).end(),
                buffer.begin() + static_cast<std::ptrdiff_t>(g.pad_left * cin));
      src = buffer.data();
    }
    StridedConstMap<T> cols(src, idx(g.out_length), idx(k), Eigen::OuterStride<>(idx(stride * cin)));
    ConstMap<T> go(grad_out.example(n).data(), idx(g.out_length), idx(cout));
    gw.noalias() += cols.transpose() * go;
    add_column_sums(grad_out.example(n).data(), g.out_length, cout, grad_bias.data());
    if (!need_input_grad) continue;

    Map<T> dc(dcols.data(), idx(g.out_length), idx(k));
    dc.noalias() = go * w.transpose();
    std::fill(dpad.begin(), dpad.end(), T(0));
    for (std::size_t t = 0; t < g.out_length; ++t) {
      T* dst = dpad.data() + t * stride * cin;
      const T* row = dcols.data() + t * k;
      for (std::size_t j = 0; j < k; ++j) dst[j] += row[j];
    }
    auto out = dx.example(n);
    std::copy(dpad.begin() + static_cast<std::ptrdiff_t>(g.pad_left * cin),
              dpad.begin() + static_cast<std::ptrdiff_t>((g.pad_left + x.length) * cin),
              out.begin());
  }
  return dx;
}

// ---- maxpool ---------------------------------------------------------------

template <typename T>
Tensor3<T> maxpool1d_forward(const Tensor3<T>& x, std::size_t width,
                             std::vector<std::uint32_t>* argmax) {
  if (width < 1) throw ValidationError("maxpool1d: width must be >= 1");
  if (x.length % width != 0) {
    throw ValidationError("maxpool1d: length " + std::to_string(x.length) +
                          " is not divisible by window " + std::to_string(width));
  }
  const std::size_t lout = x.length / width;
  const std::size_t c = x.channels;
  Tensor3<T> y(x.batch, lout, c);
  if (argmax) argmax->assign(y.data.size(), 0);
  for (std::size_t n = 0; n < x.batch; ++n) {
    for (std::size_t o = 0; o < lout; ++o) {
      T* out = &y.at(n, o, 0);
      std::uint32_t* arg = argmax ? argmax->data() + (n * lout + o) * c : nullptr;
      const std::size_t t0 = o * width;
      for (std::size_t ch = 0; ch < c; ++ch) {
        out[ch] = x.at(n, t0, ch);
        if (arg) arg[ch] = static_cast<std::uint32_t>(t0);
      }
      for (std::size_t t = t0 + 1; t < t0 + width; ++t) {
        const T* in = &x.data[(n * x.length + t) * c];
        for (std::size_t ch = 0; ch < c; ++ch) {
          if (in[ch] > out[ch]) {
            out[ch] = in[ch];
            if (arg) arg[ch] = static_cast<std::uint32_t>(t);
          }
        }
      }
    }
  }
  return y;
}

template <typename T>
Tensor3<T> maxpool1d_backward(const Tensor3<T>& grad_out, std::span<const std::uint32_t> argmax,
                              Shape input_shape, std::size_t width) {
  if (argmax.size() != grad_out.data.size() || input_shape.length != grad_out.length * width ||
      input_shape.channels != grad_out.channels) {
    throw DimensionError("maxpool1d_backward: gradient shape does not match the cached pool");
  }
  Tensor3<T> dx(grad_out.batch, input_shape.length, input_shape.channels);
  const std::size_t c = grad_out.channels;
  for (std::size_t n = 0; n < grad_out.batch; ++n)
    for (std::size_t o = 0; o < grad_out.length; ++o)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t i = (n * grad_out.length + o) * c + ch;
        dx.at(n, argmax[i], ch) += grad_out.data[i];
      }
  return dx;
}

// ---- batchnorm -------------------------------------------------------------

template <typename T>
Tensor3<T> batchnorm_forward(const Tensor3<T>& x, LayerParams<T>& p, Mode mode,
                             const BatchNormConfig& config, BatchNormStats<T>* stats,
                             bool update_running) {
  const std::size_t c = x.channels;
  if (p.gain.size() != c || p.shift.size() != c) {
    throw DimensionError("batchnorm: parameters for " + std::to_string(p.gain.size()) +
                         " channels, input has " + std::to_string(c));
  }
  const std::size_t rows = x.batch * x.length;
  std::vector<double> mean(c, 0.0), var(c, 0.0);
  if (mode == Mode::train) {
    if (rows < 2) {
      throw ValidationError("batchnorm: train mode needs at least 2 values per channel");
    }
    for (std::size_t r = 0; r < rows; ++r) {
      const T* v = &x.data[r * c];
      for (std::size_t ch = 0; ch < c; ++ch) mean[ch] += v[ch];
    }
    for (auto& m : mean) m /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* v = &x.data[r * c];
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double d = v[ch] - mean[ch];
        var[ch] += d * d;
      }
    }
    for (auto& s : var) s /= static_cast<double>(rows);
    if (update_running) {
      const double unbias = static_cast<double>(rows) / static_cast<double>(rows - 1);
      for (std::size_t ch = 0; ch < c; ++ch) {
        if (!p.stats_ready) {
          p.running_mean[ch] = static_cast<T>(mean[ch]);
          p.running_var[ch] = static_cast<T>(var[ch] * unbias);
        } else {
          p.running_mean[ch] = static_cast<T>(config.momentum * p.running_mean[ch] +
                                              (1.0 - config.momentum) * mean[ch]);
          p.running_var[ch] = static_cast<T>(config.momentum * p.running_var[ch] +
                                             (1.0 - config.momentum) * var[ch] * unbias);
        }
      }
      p.stats_ready = true;
    }
  } else {
    if (!p.stats_ready) {
      throw ValidationError("batchnorm: inference requested before running statistics exist");
    }
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = p.running_mean[ch];
      var[ch] = p.running_var[ch];
    }
  }

  std::vector<T> m(c), inv(c), scale(c), offset(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    m[ch] = static_cast<T>(mean[ch]);
    inv[ch] = static_cast<T>(1.0 / std::sqrt(var[ch] + config.epsilon));
    scale[ch] = p.gain[ch] * inv[ch];
    offset[ch] = p.shift[ch] - scale[ch] * m[ch];
  }
  Tensor3<T> y(x.batch, x.length, c);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* v = &x.data[r * c];
    T* o = &y.data[r * c];
    for (std::size_t ch = 0; ch < c; ++ch) o[ch] = v[ch] * scale[ch] + offset[ch];
  }
  if (stats) {
    stats->mean = std::move(m);
    stats->inv_std = std::move(inv);
  }
  return y;
}

template <typename T>
Tensor3<T> batchnorm_backward(const Tensor3<T>& x, const BatchNormStats<T>& stats,
                              std::span<const T> gain, const Tensor3<T>& grad_out,
                              std::span<T> grad_gain, std::span<T> grad_shift) {
  const std::size_t c = x.channels;
  const std::size_t rows = x.batch * x.length;
  if (grad_out.data.size() != x.data.size() || stats.mean.size() != c || gain.size() != c ||
      grad_gain.size() != c || grad_shift.size() != c) {
    throw DimensionError("batchnorm_backward: shape mismatch");
  }
  std::vector<double> sum_g(c, 0.0), sum_gx(c, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* v = &x.data[r * c];
    const T* g = &grad_out.data[r * c];
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double xhat = (v[ch] - stats.mean[ch]) * stats.inv_std[ch];
      sum_g[ch] += g[ch];
      sum_gx[ch] += g[ch] * xhat;
    }
  }
  const double inv_rows = 1.0 / static_cast<double>(rows);
  std::vector<T> k0(c), k1(c), k2(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    grad_gain[ch] += static_cast<T>(sum_gx[ch]);
    grad_shift[ch] += static_cast<T>(sum_g[ch]);
    const double s = gain[ch] * stats.inv_std[ch];
    k0[ch] = static_cast<T>(s);
    k1[ch] = static_cast<T>(s * sum_g[ch] * inv_rows);
    k2[ch] = static_cast<T>(s * sum_gx[ch] * inv_rows);
  }
  Tensor3<T> dx(x.batch, x.length, c);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* v = &x.data[r * c];
    const T* g = &grad_out.data[r * c];
    T* d = &dx.data[r * c];
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T xhat = (v[ch] - stats.mean[ch]) * stats.inv_std[ch];
      d[ch] = k0[ch] * g[ch] - k1[ch] - xhat * k2[ch];
    }
  }
  return dx;
}

// ---- relu / dense ----------------------------------------------------------

template <typename T>
Tensor3<T> relu_forward(const Tensor3<T>& x) {
  Tensor3<T> y = x;
  for (auto& v : y.data) v = v > T(0) ? v : T(0);
  return y;
}

template <typename T>
Tensor3<T> relu_backward(const Tensor3<T>& out, const Tensor3<T>& grad_out) {
  if (out.data.size() != grad_out.data.size()) {
    throw DimensionError("relu_backward: shape mismatch");
  }
  Tensor3<T> dx(out.batch, out.length, out.channels);
  for (std::size_t i = 0; i < out.data.size(); ++i)
    dx.data[i] = out.data[i] > T(0) ? grad_out.data[i] : T(0);
  return dx;
}

template <typename T>
Tensor3<T> dense_forward(const Tensor3<T>& x, std::span<const T> weights,
                         std::span<const T> bias, std::size_t out_features) {
  const std::size_t in = x.example_size();
  if (weights.size() != in * out_features || bias.size() != out_features) {
    throw DimensionError("dense_forward: weights " + std::to_string(weights.size()) +
                         " do not match " + std::to_string(in) + "->" +
                         std::to_string(out_features));
  }
  Tensor3<T> y(x.batch, 1, out_features);
  if (x.batch == 0) return y;
  ConstMap<T> xm(x.data.data(), idx(x.batch), idx(in));
  ConstMap<T> w(weights.data(), idx(in), idx(out_features));
  Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias.data(), idx(out_features));
  Map<T> ym(y.data.data(), idx(x.batch), idx(out_features));
  ym.noalias() = xm * w;
  ym.rowwise() += b;
  return y;
}

template <typename T>
Tensor3<T> dense_backward(const Tensor3<T>& x, const Tensor3<T>& grad_out,
                          std::span<const T> weights, std::span<T> grad_weights,
                          std::span<T> grad_bias, bool need_input_grad) {
  const std::size_t in = x.example_size();
  const std::size_t out = grad_out.example_size();
  if (grad_out.batch != x.batch || weights.size() != in * out ||
      grad_weights.size() != in * out || grad_bias.size() != out) {
    throw DimensionError("dense_backward: shape mismatch");
  }
  ConstMap<T> xm(x.data.data(), idx(x.batch), idx(in));
  ConstMap<T> go(grad_out.data.data(), idx(x.batch), idx(out));
  Map<T> gw(grad_weights.data(), idx(in), idx(out));
  gw.noalias() += xm.transpose() * go;
  add_column_sums(grad_out.data.data(), x.batch, out, grad_bias.data());
  Tensor3<T> dx;
  if (need_input_grad) {
    dx = Tensor3<T>(x.batch, x.length, x.channels);
    ConstMap<T> w(weights.data(), idx(in), idx(out));
    Map<T> dxm(dx.data.data(), idx(x.batch), idx(in));
    dxm.noalias() = go * w.transpose();
  }
  return dx;
}

// ---- network ---------------------------------------------------------------

namespace {

bool needs_input(LayerKind k) {
  return k == LayerKind::conv1d || k == LayerKind::dense || k == LayerKind::batchnorm;
}
bool needs_output(LayerKind k) { return k == LayerKind::relu; }

template <typename T>
LayerParams<T> zero_like(const LayerParams<T>& p) {
  LayerParams<T> g;
  g.weights.assign(p.weights.size(), T(0));
  g.bias.assign(p.bias.size(), T(0));
  g.gain.assign(p.gain.size(), T(0));
  g.shift.assign(p.shift.size(), T(0));
  return g;
}

}  // namespace

template <typename T>
Network<T>::Network(std::vector<LayerSpec> specs, Shape input, std::uint64_t seed,
                    BatchNormConfig bn)
    : Network(init_params<T>(std::move(specs), input, seed), bn) {}

template <typename T>
Network<T>::Network(ParamStore<T> params, BatchNormConfig bn)
    : params_(std::move(params)), bn_(bn) {
  shapes_ = infer_shapes(params_.specs, params_.input);
  if (params_.layers.size() != params_.specs.size()) {
    throw DimensionError("Network: parameter list does not match layer list");
  }
  for (std::size_t i = 0; i < params_.specs.size(); ++i) {
    const auto& s = params_.specs[i];
    const auto& p = params_.layers[i];
    const Shape in = shapes_[i];
    if (s.kind == LayerKind::conv1d || s.kind == LayerKind::dense) {
      const std::size_t fan_in =
          s.kind == LayerKind::conv1d ? s.width * in.channels : in.length * in.channels;
      if (p.weights.size() != fan_in * s.out_channels || p.bias.size() != s.out_channels) {
        throw DimensionError("Network: layer " + std::to_string(i) + " (" + describe(s) +
                             ") has inconsistent parameter shapes");
      }
    } else if (s.kind == LayerKind::batchnorm) {
      if (p.gain.size() != in.channels || p.shift.size() != in.channels ||
          p.running_mean.size() != in.channels || p.running_var.size() != in.channels) {
        throw DimensionError("Network: batchnorm layer " + std::to_string(i) +
                             " has inconsistent parameter shapes");
      }
    }
  }
  grads_.reserve(params_.layers.size());
  for (const auto& p : params_.layers) grads_.push_back(zero_like(p));
}

template <typename T>
void Network<T>::zero_grad() {
  for (auto& g : grads_) {
    std::fill(g.weights.begin(), g.weights.end(), T(0));
    std::fill(g.bias.begin(), g.bias.end(), T(0));
    std::fill(g.gain.begin(), g.gain.end(), T(0));
    std::fill(g.shift.begin(), g.shift.end(), T(0));
  }
}

template <typename T>
void Network<T>::release_cache() {
  cached_ = false;
  activations_.clear();
  argmax_.clear();
  bn_stats_.clear();
}

template <typename T>
bool Network<T>::statistics_ready() const {
  for (std::size_t i = 0; i < params_.specs.size(); ++i)
    if (params_.specs[i].kind == LayerKind::batchnorm && !params_.layers[i].stats_ready)
      return false;
  return true;
}

template <typename T>
Tensor3<T> Network<T>::forward(const Tensor3<T>& x, Mode mode, bool update_running) {
  return run(x, mode, update_running, mode == Mode::train, -1.0);
}

template <typename T>
Tensor3<T> Network<T>::run(const Tensor3<T>& x, Mode mode, bool update_running, bool cache,
                           double momentum_override) {
  if (x.shape() != shapes_.front()) {
    throw DimensionError("Network: input shape " + shape_str(x.shape()) + " but network expects " +
                         shape_str(shapes_.front()));
  }
  if (x.batch == 0) throw ValidationError("Network: empty batch");
  release_cache();
  const std::size_t n = params_.specs.size();
  BatchNormConfig bn = bn_;
  if (momentum_override >= 0.0) bn.momentum = momentum_override;
  if (cache) {
    activations_.resize(n + 1);
    argmax_.resize(n);
    bn_stats_.resize(n);
    activations_[0] = x;
  }
  Tensor3<T> current = x;
  for (std::size_t i = 0; i < n; ++i) {
    const LayerSpec& s = params_.specs[i];
    LayerParams<T>& p = params_.layers[i];
    Tensor3<T> next;
    switch (s.kind) {
      case LayerKind::conv1d:
        next = conv1d_forward<T>(current, p.weights, p.bias, s.width, s.stride, s.out_channels,
                                 s.padding);
        break;
      case LayerKind::maxpool1d:
        next = maxpool1d_forward<T>(current, s.width, cache ? &argmax_[i] : nullptr);
        break;
      case LayerKind::batchnorm:
        next = batchnorm_forward<T>(current, p, mode, bn, cache ? &bn_stats_[i] : nullptr,
                                    update_running);
        break;
      case LayerKind::relu: next = relu_forward<T>(current); break;
      case LayerKind::dense:
        next = dense_forward<T>(current, p.weights, p.bias, s.out_channels);
        break;
    }
    if (cache) {
      // Keep an activation only while some layer still needs it for backward.
      const bool keep_input = needs_input(s.kind) || (i > 0 && needs_output(params_.specs[i - 1].kind));
      if (!keep_input) activations_[i] = Tensor3<T>{};
      activations_[i + 1] = next;
    }
    current = std::move(next);
  }
  if (cache) {
    if (!needs_output(params_.specs.back().kind)) activations_[n] = Tensor3<T>{};
    cached_ = true;
  }
  return current;
}

template <typename T>
Tensor3<T> Network<T>::backward(const Tensor3<T>& grad_out) {
  if (!cached_) throw StateError("Network::backward called without a cached train-mode forward");
  const std::size_t n = params_.specs.size();
  if (grad_out.shape() != shapes_.back()) {
    throw DimensionError("Network::backward: gradient shape " + shape_str(grad_out.shape()) +
                         " but output is " + shape_str(shapes_.back()));
  }
  Tensor3<T> g = grad_out;
  for (std::size_t i = n; i-- > 0;) {
    const LayerSpec& s = params_.specs[i];
    const LayerParams<T>& p = params_.layers[i];
    LayerParams<T>& gp = grads_[i];
    switch (s.kind) {
      case LayerKind::conv1d:
        g = conv1d_backward<T>(activations_[i], g, p.weights, s.width, s.stride, s.padding,
                               gp.weights, gp.bias, true);
        break;
      case LayerKind::dense:
        g = dense_backward<T>(activations_[i], g, p.weights, gp.weights, gp.bias, true);
        break;
      case LayerKind::maxpool1d:
        g = maxpool1d_backward<T>(g, argmax_[i], shapes_[i], s.width);
        break;
      case LayerKind::batchnorm:
        g = batchnorm_backward<T>(activations_[i], bn_stats_[i], p.gain, g, gp.gain, gp.shift);
        break;
      case LayerKind::relu: g = relu_backward<T>(activations_[i + 1], g); break;
    }
    g.batch = grad_out.batch;
  }
  return g;
}

template <typename T>
void Network<T>::calibrate(std::span<const Tensor3<T>> batches) {
  if (batches.empty()) throw ValidationError("calibrate: no batches");
  for (std::size_t i = 0; i < params_.specs.size(); ++i)
    if (params_.specs[i].kind == LayerKind::batchnorm) params_.layers[i].stats_ready = false;
  // Running statistics become the cumulative mean of the per-batch values.
  for (std::size_t k = 0; k < batches.size(); ++k) {
    const double keep = static_cast<double>(k) / static_cast<double>(k + 1);
    run(batches[k], Mode::train, true, false, keep);
  }
  release_cache();
}

#define AUDEEG_INSTANTIATE(T)                                                                   \
  template struct ParamStore<T>;                                                                \
  template ParamStore<T> init_params<T>(std::vector<LayerSpec>, Shape, std::uint64_t);         \
  template Tensor3<T> conv1d_forward<T>(const Tensor3<T>&, std::span<const T>,                 \
                                        std::span<const T>, std::size_t, std::size_t,          \
                                        std::size_t, Padding);                                 \
  template Tensor3<T> conv1d_backward<T>(const Tensor3<T>&, const Tensor3<T>&,                 \
                                         std::span<const T>, std::size_t, std::size_t, Padding, \
                                         std::span<T>, std::span<T>, bool);                    \
  template Tensor3<T> maxpool1d_forward<T>(const Tensor3<T>&, std::size_t,                     \
                                           std::vector<std::uint32_t>*);                       \
  template Tensor3<T> maxpool1d_backward<T>(const Tensor3<T>&, std::span<const std::uint32_t>, \
                                            Shape, std::size_t);                               \
  template Tensor3<T> batchnorm_forward<T>(const Tensor3<T>&, LayerParams<T>&, Mode,           \
                                           const BatchNormConfig&, BatchNormStats<T>*, bool);  \
  template Tensor3<T> batchnorm_backward<T>(const Tensor3<T>&, const BatchNormStats<T>&,       \
                                            std::span<const T>, const Tensor3<T>&,             \
                                            std::span<T>, std::span<T>);                       \
  template Tensor3<T> relu_forward<T>(const Tensor3<T>&);                                      \
  template Tensor3<T> relu_backward<T>(const Tensor3<T>&, const Tensor3<T>&);                  \
  template Tensor3<T> dense_forward<T>(const Tensor3<T>&, std::span<const T>,                  \
                                       std::span<const T>, std::size_t);                       \
  template Tensor3<T> dense_backward<T>(const Tensor3<T>&, const Tensor3<T>&,                  \
                                        std::span<const T>, std::span<T>, std::span<T>, bool); \
  template class Network<T>;

AUDEEG_INSTANTIATE(float)
AUDEEG_INSTANTIATE(double)

#undef AUDEEG_INSTANTIATE

}  // namespace audeeg::nn
