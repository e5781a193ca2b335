#include "audeeg/optim.h"

#include <cmath>

#include "audeeg/error.h"

namespace audeeg::optim {

Kind parse_kind(const std::string& name) {
  if (name == "adam") return Kind::adam;
  if (name == "sgd") return Kind::sgd;
  throw ParseError("unknown optimizer '" + name + "' (expected adam or sgd)");
}

std::string kind_name(Kind k) { return k == Kind::adam ? "adam" : "sgd"; }

template <typename T>
void Optimizer<T>::step(nn::Network<T>& net) {
  if (!(config_.learning_rate > 0.0)) throw ValidationError("learning rate must be positive");
  auto& layers = net.params().layers;
  const auto& grads = net.grads();
  ++steps_;

  if (config_.kind == Kind::sgd) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      nn::for_each_tensor(layers[i], grads[i], [&](std::vector<T>& p, const std::vector<T>& g) {
        for (std::size_t j = 0; j < p.size(); ++j)
          p[j] = static_cast<T>(p[j] - config_.learning_rate * g[j]);
      });
    }
    return;
  }

  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  const bool init = m_.empty();
  std::size_t slot = 0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    nn::for_each_tensor(layers[i], grads[i], [&](std::vector<T>& p, const std::vector<T>& g) {
      if (init) {
        m_.emplace_back(p.size(), 0.0);
        v_.emplace_back(p.size(), 0.0);
      }
      auto& m = m_[slot];
      auto& v = v_[slot];
      ++slot;
      if (m.size() != p.size()) throw StateError("optimizer state does not match the network");
      for (std::size_t j = 0; j < p.size(); ++j) {
        const double gj = g[j];
        m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * gj;
        v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * gj * gj;
        const double step = config_.learning_rate * (m[j] / c1) / (std::sqrt(v[j] / c2) + config_.epsilon);
        p[j] = static_cast<T>(p[j] - step);
      }
    });
  }
}

template class Optimizer<float>;
template class Optimizer<double>;

}  // namespace audeeg::optim
