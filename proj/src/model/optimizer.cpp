#include "finprint/model/optimizer.hpp"

#include <cmath>

#include "finprint/core/error.hpp"

namespace finprint::model {

std::string_view to_string(OptimizerKind k) {
  return k == OptimizerKind::Sgd ? "sgd" : "adam";
}

OptimizerKind parse_optimizer(std::string_view s) {
  if (s == "sgd") return OptimizerKind::Sgd;
  if (s == "adam") return OptimizerKind::Adam;
  throw ConfigError("unknown optimizer '" + std::string(s) + "'");
}

OptimizerState make_sgd(double learning_rate, double momentum) {
  OptimizerState s;
  s.kind = OptimizerKind::Sgd;
  s.learning_rate = learning_rate;
  s.momentum = momentum;
  return s;
}

OptimizerState make_adam(double learning_rate) {
  OptimizerState s;
  s.kind = OptimizerKind::Adam;
  s.learning_rate = learning_rate;
  return s;
}

void apply_update(Weights& w, const Gradients& grads, OptimizerState& opt) {
  if (grads.size() != w.params.size()) {
    throw ContractError("apply_update: gradient count does not match weights");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].dims != w.params[i].dims ||
        grads[i].data.size() != w.params[i].data.size()) {
      throw ContractError("apply_update: gradient " + std::to_string(i) +
                          " has the wrong shape");
    }
    for (double g : grads[i].data) {
      if (!std::isfinite(g)) {
        throw NumericError("apply_update: non-finite gradient in tensor " +
                           std::to_string(i));
      }
    }
  }
  const auto zeros_like = [&](std::vector<Tensor>& slot) {
    if (slot.size() == w.params.size()) return;
    slot = zero_gradients(w);
  };
  zeros_like(opt.m);
  if (opt.kind == OptimizerKind::Adam) zeros_like(opt.v);

  ++opt.t;
  const double lr = opt.learning_rate;
  if (opt.kind == OptimizerKind::Sgd) {
    for (std::size_t i = 0; i < grads.size(); ++i) {
      auto& p = w.params[i].data;
      auto& m = opt.m[i].data;
      const auto& g = grads[i].data;
      for (std::size_t k = 0; k < p.size(); ++k) {
        m[k] = opt.momentum * m[k] + g[k];
        p[k] -= lr * m[k];
      }
    }
    return;
  }
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.t));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.t));
  for (std::size_t i = 0; i < grads.size(); ++i) {
    auto& p = w.params[i].data;
    auto& m = opt.m[i].data;
    auto& v = opt.v[i].data;
    const auto& g = grads[i].data;
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = opt.beta1 * m[k] + (1.0 - opt.beta1) * g[k];
      v[k] = opt.beta2 * v[k] + (1.0 - opt.beta2) * g[k] * g[k];
      p[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + opt.epsilon);
    }
  }
}

}  // namespace finprint::model
