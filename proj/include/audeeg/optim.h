#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "audeeg/nn.h"

namespace audeeg::optim {

enum class Kind { adam, sgd };

Kind parse_kind(const std::string& name);
std::string kind_name(Kind k);

struct OptimizerConfig {
  Kind kind = Kind::adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  bool operator==(const OptimizerConfig&) const = default;
};

/// Adam (bias-corrected moments) or plain SGD over every learnable tensor
/// of a network. Moment buffers are allocated lazily on the first step.
template <typename T>
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config = {}) : config_(config) {}

  void step(nn::Network<T>& net);
  std::size_t steps() const { return steps_; }
  const OptimizerConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }

 private:
  OptimizerConfig config_;
  std::size_t steps_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace audeeg::optim
