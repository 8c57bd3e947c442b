#pragma once

#include <cstdint>
#include <vector>

#include "mambakick/tensor.hpp"

namespace mambakick {

double global_norm(const ParamList& grads);

struct ClipResult {
  double norm_before = 0.0;
  double norm_after = 0.0;
};

// Rescales all gradients by max_norm / g when the global L2 norm g exceeds
// max_norm. Non-finite gradients raise DivergenceError tagged with `step`.
ClipResult clip_gradients(ParamList& grads, double max_norm, std::int64_t step = 0);

struct AdamWHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 5e-2;
};

struct OptimizerState {
  std::int64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  bool operator==(const OptimizerState&) const = default;
};

// Shapes the moment buffers after `params`.
OptimizerState make_optimizer_state(const ParamList& params);

// theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta)
void adamw_step(ParamList& params, const ParamList& grads, OptimizerState& state, double lr,
                const AdamWHyper& hyper);

// Linear ramp to lr_max over `warmup` steps, then half-cosine down to 0 at
// `total`.
double cosine_warmup_lr(std::int64_t step, std::int64_t warmup, std::int64_t total, double lr_max);

}  // namespace mambakick
