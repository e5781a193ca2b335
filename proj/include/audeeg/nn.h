#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace audeeg::nn {

enum class LayerKind { conv1d, maxpool1d, batchnorm, relu, dense };
enum class Padding { valid, same };
enum class Mode { train, infer };

std::string to_string(LayerKind kind);
LayerKind parse_layer_kind(const std::string& name);
std::string to_string(Padding padding);
Padding parse_padding(const std::string& name);

/// One layer of a branch. A conv-x-y-z layer has width x, stride y and z
/// output channels; an mp-x layer has window and stride x.
struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::size_t width = 1;
  std::size_t stride = 1;
  std::size_t out_channels = 0;
  Padding padding = Padding::valid;

  static LayerSpec conv(std::size_t width, std::size_t stride, std::size_t channels,
                        Padding padding);
  static LayerSpec maxpool(std::size_t width);
  static LayerSpec batchnorm();
  static LayerSpec relu();
  static LayerSpec dense(std::size_t out_features);

  bool operator==(const LayerSpec&) const = default;
};

/// Short label such as "conv-3-3-128" or "mp-5".
std::string describe(const LayerSpec& spec);

struct Shape {
  std::size_t length = 0;
  std::size_t channels = 0;
  bool operator==(const Shape&) const = default;
};

Shape output_shape(const LayerSpec& spec, Shape in);
/// Shapes before and after every layer; result has specs.size() + 1 entries.
std::vector<Shape> infer_shapes(std::span<const LayerSpec> specs, Shape input);

/// Batch of multichannel sequences stored as [batch][length][channels].
template <typename T>
struct Tensor3 {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::size_t channels = 0;
  std::vector<T> data;

  Tensor3() = default;
  Tensor3(std::size_t b, std::size_t l, std::size_t c, T fill = T(0))
      : batch(b), length(l), channels(c), data(b * l * c, fill) {}

  Shape shape() const { return {length, channels}; }
  std::size_t example_size() const { return length * channels; }
  T& at(std::size_t b, std::size_t t, std::size_t c) {
    return data[(b * length + t) * channels + c];
  }
  T at(std::size_t b, std::size_t t, std::size_t c) const {
    return data[(b * length + t) * channels + c];
  }
  std::span<T> example(std::size_t b) { return {data.data() + b * example_size(), example_size()}; }
  std::span<const T> example(std::size_t b) const {
    return {data.data() + b * example_size(), example_size()};
  }
};

/// Learnable state of one layer. Conv weights are laid out as
/// (width·in_channels)×out_channels row-major with tap-major rows; dense
/// weights as in_features×out_features.
template <typename T>
struct LayerParams {
  std::vector<T> weights;
  std::vector<T> bias;
  std::vector<T> gain;
  std::vector<T> shift;
  std::vector<T> running_mean;
  std::vector<T> running_var;
  bool stats_ready = false;
};

template <typename T>
struct ParamStore {
  std::vector<LayerSpec> specs;
  Shape input;
  std::uint64_t seed = 0;
  std::vector<LayerParams<T>> layers;

  std::size_t parameter_count() const;

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    out.specs = specs;
    out.input = input;
    out.seed = seed;
    out.layers.resize(layers.size());
    auto conv = [](const std::vector<T>& v) { return std::vector<U>(v.begin(), v.end()); };
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& s = layers[i];
      auto& d = out.layers[i];
      d.weights = conv(s.weights);
      d.bias = conv(s.bias);
      d.gain = conv(s.gain);
      d.shift = conv(s.shift);
      d.running_mean = conv(s.running_mean);
      d.running_var = conv(s.running_var);
      d.stats_ready = s.stats_ready;
    }
    return out;
  }
};

/// Fresh parameters: He-uniform weights with fan-in scaling, zero biases,
/// unit gains. Each layer draws from its own stream derived from `seed`.
template <typename T>
ParamStore<T> init_params(std::vector<LayerSpec> specs, Shape input, std::uint64_t seed);

struct BatchNormConfig {
  double momentum = 0.9;  ///< running ← momentum·running + (1 − momentum)·batch
  double epsilon = 1e-5;
};

// ---- layer kernels ---------------------------------------------------------

template <typename T>
Tensor3<T> conv1d_forward(const Tensor3<T>& x, std::span<const T> weights,
                          std::span<const T> bias, std::size_t width, std::size_t stride,
                          std::size_t out_channels, Padding padding);

/// Accumulates into grad_weights/grad_bias and returns the input gradient
/// (empty when need_input_grad is false).
template <typename T>
Tensor3<T> conv1d_backward(const Tensor3<T>& x, const Tensor3<T>& grad_out,
                           std::span<const T> weights, std::size_t width, std::size_t stride,
                           Padding padding, std::span<T> grad_weights, std::span<T> grad_bias,
                           bool need_input_grad = true);

template <typename T>
Tensor3<T> maxpool1d_forward(const Tensor3<T>& x, std::size_t width,
                             std::vector<std::uint32_t>* argmax = nullptr);

template <typename T>
Tensor3<T> maxpool1d_backward(const Tensor3<T>& grad_out, std::span<const std::uint32_t> argmax,
                              Shape input_shape, std::size_t width);

template <typename T>
struct BatchNormStats {
  std::vector<T> mean;
  std::vector<T> inv_std;
};

/// Train mode normalizes with batch statistics over batch×length and, when
/// update_running is set, folds them into the running statistics. Infer
/// mode uses the running statistics.
template <typename T>
Tensor3<T> batchnorm_forward(const Tensor3<T>& x, LayerParams<T>& params, Mode mode,
                             const BatchNormConfig& config, BatchNormStats<T>* stats = nullptr,
                             bool update_running = true);

template <typename T>
Tensor3<T> batchnorm_backward(const Tensor3<T>& x, const BatchNormStats<T>& stats,
                              std::span<const T> gain, const Tensor3<T>& grad_out,
                              std::span<T> grad_gain, std::span<T> grad_shift);

template <typename T>
Tensor3<T> relu_forward(const Tensor3<T>& x);

template <typename T>
Tensor3<T> relu_backward(const Tensor3<T>& out, const Tensor3<T>& grad_out);

/// Flattens each example and applies x·W + b; output length is 1.
template <typename T>
Tensor3<T> dense_forward(const Tensor3<T>& x, std::span<const T> weights,
                         std::span<const T> bias, std::size_t out_features);

template <typename T>
Tensor3<T> dense_backward(const Tensor3<T>& x, const Tensor3<T>& grad_out,
                          std::span<const T> weights, std::span<T> grad_weights,
                          std::span<T> grad_bias, bool need_input_grad = true);

// ---- composed network ------------------------------------------------------

/// Sequential branch with cached activations for reverse mode. A train-mode
/// forward keeps what backward needs until the next forward or
/// release_cache(); backward accumulates into grads().
template <typename T>
class Network {
 public:
  Network(std::vector<LayerSpec> specs, Shape input, std::uint64_t seed,
          BatchNormConfig bn = {});
  explicit Network(ParamStore<T> params, BatchNormConfig bn = {});

  const ParamStore<T>& params() const { return params_; }
  ParamStore<T>& params() { return params_; }
  const std::vector<LayerParams<T>>& grads() const { return grads_; }
  std::vector<LayerParams<T>>& grads() { return grads_; }
  const std::vector<Shape>& shapes() const { return shapes_; }
  Shape input_shape() const { return shapes_.front(); }
  Shape output_shape() const { return shapes_.back(); }
  const BatchNormConfig& batchnorm_config() const { return bn_; }

  Tensor3<T> forward(const Tensor3<T>& x, Mode mode, bool update_running = true);
  /// Returns the gradient with respect to the network input.
  Tensor3<T> backward(const Tensor3<T>& grad_out);
  void zero_grad();
  void release_cache();

  /// Sets running statistics to the average of the batch statistics seen
  /// over `batches`, without touching learnable parameters.
  void calibrate(std::span<const Tensor3<T>> batches);
  bool statistics_ready() const;

 private:
  Tensor3<T> run(const Tensor3<T>& x, Mode mode, bool update_running, bool cache,
                 double momentum_override);

  ParamStore<T> params_;
  BatchNormConfig bn_;
  std::vector<Shape> shapes_;
  std::vector<LayerParams<T>> grads_;

  bool cached_ = false;
  std::vector<Tensor3<T>> activations_;
  std::vector<std::vector<std::uint32_t>> argmax_;
  std::vector<BatchNormStats<T>> bn_stats_;
};

/// Visits every learnable tensor of a layer together with its gradient.
template <typename T, typename Fn>
void for_each_tensor(LayerParams<T>& p, const LayerParams<T>& g, Fn&& fn) {
  fn(p.weights, g.weights);
  fn(p.bias, g.bias);
  fn(p.gain, g.gain);
  fn(p.shift, g.shift);
}

}  // namespace audeeg::nn
