#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "finprint/model/encoder.hpp"

namespace finprint::model {

enum class OptimizerKind { Sgd, Adam };

std::string_view to_string(OptimizerKind k);
OptimizerKind parse_optimizer(std::string_view s);

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::Adam;
  double learning_rate = 1e-3;
  double momentum = 0.0;  // SGD only
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t t = 0;
  /// SGD velocity or Adam first moment; empty until the first step.
  std::vector<Tensor> m;
  /// Adam second moment.
  std::vector<Tensor> v;

  bool operator==(const OptimizerState&) const = default;
};

OptimizerState make_sgd(double learning_rate, double momentum = 0.0);
OptimizerState make_adam(double learning_rate = 1e-3);

/// One optimizer step in place. Throws NumericError before touching anything
/// if a gradient is non-finite, ContractError on shape mismatch.
///
///   SGD:  m = momentum * m + g;  w -= lr * m
///   Adam: m = b1 m + (1-b1) g;  v = b2 v + (1-b2) g^2;
///         w -= lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
void apply_update(Weights& w, const Gradients& grads, OptimizerState& opt);

}  // namespace finprint::model
