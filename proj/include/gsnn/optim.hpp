#pragma once

#include <vector>

#include "gsnn/params.hpp"

namespace gsnn {

enum class OptimizerKind { sgd_momentum, adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::sgd_momentum;
  double learning_rate = 0.05;
  double momentum = 0.5;
  double l2_penalty = 1e-6;
  double lr_decay_factor = 0.1;
  int lr_decay_every = 10;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

// lr0 * decay^floor(epoch / decay_every)
double learning_rate_at(const OptimizerConfig& config, int epoch);

/// Applies one update to `ids` (every parameter when empty).
/// SGD-momentum: v = m v + g + l2 w; w -= lr v.
/// ADAM: g' = g + l2 w, bias-corrected moments, w -= lr mhat / (sqrt(vhat) + eps).
void optimizer_step(ParameterSet& params, const OptimizerConfig& config, int epoch,
                    const std::vector<ParamId>& ids = {});

}  // namespace gsnn
