#include "mambakick/optim.hpp"

#include <cmath>
#include <numbers>

namespace mambakick {

double global_norm(const ParamList& grads) {
  double sq = 0.0;
  for (const auto& g : grads)
    for (double v : g.values) sq += v * v;
  return std::sqrt(sq);
}

ClipResult clip_gradients(ParamList& grads, double max_norm, std::int64_t step) {
  if (!(max_norm > 0.0)) throw ConfigError("clip norm must be positive");
  for (const auto& g : grads) {
    for (double v : g.values) {
      if (!std::isfinite(v)) throw DivergenceError("non-finite gradient in " + g.name, step);
    }
  }
  ClipResult r;
  r.norm_before = global_norm(grads);
  if (!std::isfinite(r.norm_before)) throw DivergenceError("gradient norm overflow", step);
  r.norm_after = r.norm_before;
  if (r.norm_before > max_norm) {
    const double scale = max_norm / r.norm_before;
    for (auto& g : grads)
      for (double& v : g.values) v *= scale;
    r.norm_after = global_norm(grads);
  }
  return r;
}

OptimizerState make_optimizer_state(const ParamList& params) {
  OptimizerState s;
  for (const auto& p : params) {
    s.m.emplace_back(p.values.size(), 0.0);
    s.v.emplace_back(p.values.size(), 0.0);
  }
  return s;
}

void adamw_step(ParamList& params, const ParamList& grads, OptimizerState& state, double lr,
                const AdamWHyper& hyper) {
  if (params.size() != grads.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw ShapeError("optimizer state does not match the parameter list");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(hyper.beta1, t);
  const double c2 = 1.0 - std::pow(hyper.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto theta = params[i].values;
    const auto g = grads[i].values;
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (theta.size() != g.size() || m.size() != g.size()) {
      throw ShapeError("gradient shape mismatch for " + params[i].name);
    }
    for (std::size_t j = 0; j < theta.size(); ++j) {
      m[j] = hyper.beta1 * m[j] + (1.0 - hyper.beta1) * g[j];
      v[j] = hyper.beta2 * v[j] + (1.0 - hyper.beta2) * g[j] * g[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      theta[j] -= lr * (m_hat / (std::sqrt(v_hat) + hyper.eps) + hyper.weight_decay * theta[j]);
    }
  }
}

double cosine_warmup_lr(std::int64_t step, std::int64_t warmup, std::int64_t total, double lr_max) {
  if (total <= 0 || warmup < 0 || warmup >= total) {
    throw InvalidInputError("schedule needs 0 <= warmup < total");
  }
  if (step < 0 || step > total) throw InvalidInputError("step outside [0, total]");
  if (step < warmup) return lr_max * static_cast<double>(step) / static_cast<double>(warmup);
  const double progress =
      static_cast<double>(step - warmup) / static_cast<double>(total - warmup);
  return lr_max * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace mambakick
