#include "gsnn/optim.hpp"

#include <cmath>

namespace gsnn {

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0,1)");
  if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0)) throw ConfigError("lr_decay_factor must be in (0,1]");
  if (lr_decay_every < 1) throw ConfigError("lr_decay_every must be >= 1");
  if (l2_penalty < 0.0) throw ConfigError("l2_penalty must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("adam betas must be in [0,1)");
  if (!(epsilon > 0.0)) throw ConfigError("adam epsilon must be > 0");
}

double learning_rate_at(const OptimizerConfig& config, int epoch) {
  const int drops = epoch / config.lr_decay_every;
  return config.learning_rate * std::pow(config.lr_decay_factor, drops);
}

namespace {

void sgd_update(Parameter& p, const OptimizerConfig& c, double lr) {
  if (!p.m.same_shape(p.value)) p.m = Tensor2(p.value.rows(), p.value.cols());
  auto w = p.value.flat();
  auto g = p.grad.flat();
  auto v = p.m.flat();
  for (std::size_t i = 0; i < w.size(); ++i) {
    v[i] = c.momentum * v[i] + g[i] + c.l2_penalty * w[i];
    w[i] -= lr * v[i];
  }
  ++p.steps;
}

void adam_update(Parameter& p, const OptimizerConfig& c, double lr) {
  if (!p.m.same_shape(p.value)) p.m = Tensor2(p.value.rows(), p.value.cols());
  if (!p.v.same_shape(p.value)) p.v = Tensor2(p.value.rows(), p.value.cols());
  ++p.steps;
  const double t = static_cast<double>(p.steps);
  const double c1 = 1.0 - std::pow(c.beta1, t);
  const double c2 = 1.0 - std::pow(c.beta2, t);
  auto w = p.value.flat();
  auto g = p.grad.flat();
  auto m = p.m.flat();
  auto v = p.v.flat();
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double gi = g[i] + c.l2_penalty * w[i];
    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
    const double mhat = m[i] / c1;
    const double vhat = v[i] / c2;
    w[i] -= lr * mhat / (std::sqrt(vhat) + c.epsilon);
  }
}

}  // namespace

void optimizer_step(ParameterSet& params, const OptimizerConfig& config, int epoch, const std::vector<ParamId>& ids) {
  config.validate();
  const double lr = learning_rate_at(config, epoch);
  const auto targets = ids.empty() ? params.ids() : ids;
  for (ParamId id : targets) {
    auto& p = params.at(id);
    if (!p.grad.same_shape(p.value)) throw StateError("missing gradient for parameter '" + p.name + "'");
  }
  for (ParamId id : targets) {
    auto& p = params.at(id);
    if (config.kind == OptimizerKind::sgd_momentum) {
      sgd_update(p, config, lr);
    } else {
      adam_update(p, config, lr);
    }
  }
}

}  // namespace gsnn
