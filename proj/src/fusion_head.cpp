#include "mambakick/fusion_head.hpp"

#include <cmath>

#include "mambakick/rng.hpp"

namespace mambakick {

std::vector<double> meta_branch(std::span<const double> gamma, const MetaBranch& branch) {
  if (gamma.size() != 2) throw ShapeError("metadata vector must have exactly two entries");
  std::vector<double> out(branch.width());
  branch.proj.forward_row(gamma, out);
  for (double& v : out) v = std::max(v, 0.0);
  return out;
}

std::vector<double> meta_branch(const MetadataVector& gamma, const MetaBranch& branch) {
  if (gamma.pitch_side > 1 || gamma.dominant_foot > 1) {
    throw InvalidInputError("metadata fields must be binary");
  }
  const auto in = gamma.as_input();
  return meta_branch(std::span<const double>(in), branch);
}

Matrix meta_branch_forward(const MetaBranch& branch, const Matrix& gamma, MetaCache* cache) {
  if (gamma.cols() != 2) throw ShapeError("metadata batch must have two columns");
  Matrix pre = branch.proj.forward(gamma);
  Matrix out = pre;
  for (double& v : out.values()) v = std::max(v, 0.0);
  if (cache != nullptr) {
    cache->input = gamma;
    cache->pre = std::move(pre);
  }
  return out;
}

void meta_branch_backward(const MetaBranch& branch, const MetaCache& cache, const Matrix& dy,
                          MetaBranch& grad) {
  Matrix dpre = dy;
  for (std::size_t i = 0; i < dpre.size(); ++i) {
    if (cache.pre.values()[i] <= 0.0) dpre.values()[i] = 0.0;
  }
  branch.proj.backward(cache.input, dpre, grad.proj);
}

FusionHead::FusionHead(const FusionOptions& options)
    : hidden(options.input_dim, options.hidden, true),
      bn_gamma(options.hidden, 1.0),
      bn_beta(options.hidden, 0.0),
      classifier(options.hidden, options.classes, true),
      running_mean(options.hidden, 0.0),
      running_var(options.hidden, 1.0),
      dropout(options.dropout),
      bn_eps(options.bn_eps),
      bn_momentum(options.bn_momentum) {
  if (options.classes < 2) throw ShapeError("classifier needs at least two classes");
  if (!(options.dropout >= 0.0 && options.dropout < 1.0)) {
    throw ConfigError("dropout rate must lie in [0, 1)");
  }
}

void FusionHead::init(Rng& rng) {
  hidden.init_uniform(rng);
  classifier.init_uniform(rng);
  std::fill(bn_gamma.begin(), bn_gamma.end(), 1.0);
  std::fill(bn_beta.begin(), bn_beta.end(), 0.0);
  std::fill(running_mean.begin(), running_mean.end(), 0.0);
  std::fill(running_var.begin(), running_var.end(), 1.0);
}

void FusionHead::collect(const std::string& prefix, ParamList& out) {
  hidden.collect(prefix + ".hidden", out);
  out.push_back({prefix + ".bn.gamma", bn_gamma});
  out.push_back({prefix + ".bn.beta", bn_beta});
  classifier.collect(prefix + ".classifier", out);
}

void FusionHead::collect_buffers(const std::string& prefix, ParamList& out) {
  out.push_back({prefix + ".bn.running_mean", running_mean});
  out.push_back({prefix + ".bn.running_var", running_var});
}

Matrix fuse_and_classify(const FusionHead& head, const Matrix& concat, Mode mode, Rng* rng,
                         FusionCache* cache) {
  if (concat.cols() != head.input_dim()) {
    throw ShapeError("fusion head expects " + std::to_string(head.input_dim()) +
                     " concatenated features, got " + std::to_string(concat.cols()));
  }
  const std::size_t B = concat.rows();
  const std::size_t F = head.hidden.out_features();
  if (B == 0) throw InvalidInputError("fusion head requires a non-empty batch");
  if (mode == Mode::train && B < 2) {
    throw InvalidInputError(
        "train-mode batch normalization needs a batch of at least 2 (unbiased variance undefined)");
  }
  Matrix pre = head.hidden.forward(concat);
  Matrix xhat(B, F);
  std::vector<double> inv_std(F), mean(F), var_unbiased(F);
  for (std::size_t j = 0; j < F; ++j) {
    double mu, var;
    if (mode == Mode::train) {
      mu = 0.0;
      for (std::size_t i = 0; i < B; ++i) mu += pre(i, j);
      mu /= static_cast<double>(B);
      double ss = 0.0;
      for (std::size_t i = 0; i < B; ++i) ss += (pre(i, j) - mu) * (pre(i, j) - mu);
      var = ss / static_cast<double>(B);
      var_unbiased[j] = ss / static_cast<double>(B - 1);
    } else {
      mu = head.running_mean[j];
      var = head.running_var[j];
    }
    mean[j] = mu;
    inv_std[j] = 1.0 / std::sqrt(var + head.bn_eps);
    for (std::size_t i = 0; i < B; ++i) xhat(i, j) = (pre(i, j) - mu) * inv_std[j];
  }
  Matrix activated(B, F);
  for (std::size_t i = 0; i < B; ++i)
    for (std::size_t j = 0; j < F; ++j)
      activated(i, j) = std::max(head.bn_gamma[j] * xhat(i, j) + head.bn_beta[j], 0.0);

  Matrix mask;
  Matrix dropped = activated;
  if (mode == Mode::train && head.dropout > 0.0) {
    if (rng == nullptr) throw InvalidInputError("train-mode dropout requires a random source");
    mask = Matrix(B, F);
    const double keep_scale = 1.0 / (1.0 - head.dropout);
    for (std::size_t i = 0; i < mask.size(); ++i) {
      mask.values()[i] = rng->bernoulli(head.dropout) ? 0.0 : keep_scale;
      dropped.values()[i] *= mask.values()[i];
    }
  }
  Matrix logits = head.classifier.forward(dropped);
  if (cache != nullptr) {
    cache->input = concat;
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
    cache->batch_mean = std::move(mean);
    cache->batch_var_unbiased = std::move(var_unbiased);
    cache->activated = std::move(activated);
    cache->mask = std::move(mask);
    cache->dropped = std::move(dropped);
  }
  return logits;
}

Matrix fuse_and_classify(const FusionHead& head, std::span<const double> t_run,
                         std::span<const double> t_kick, std::span<const double> t_meta, Mode mode,
                         Rng* rng) {
  Matrix concat(1, t_run.size() + t_kick.size() + t_meta.size());
  auto row = concat.row(0);
  std::copy(t_run.begin(), t_run.end(), row.begin());
  std::copy(t_kick.begin(), t_kick.end(), row.begin() + static_cast<std::ptrdiff_t>(t_run.size()));
  std::copy(t_meta.begin(), t_meta.end(),
            row.begin() + static_cast<std::ptrdiff_t>(t_run.size() + t_kick.size()));
  return fuse_and_classify(head, concat, mode, rng);
}

void update_running_stats(FusionHead& head, const FusionCache& cache) {
  const double m = head.bn_momentum;
  for (std::size_t j = 0; j < head.running_mean.size(); ++j) {
    head.running_mean[j] = (1.0 - m) * head.running_mean[j] + m * cache.batch_mean[j];
    head.running_var[j] = (1.0 - m) * head.running_var[j] + m * cache.batch_var_unbiased[j];
  }
}

Matrix fusion_backward(const FusionHead& head, const FusionCache& cache, const Matrix& dlogits,
                       FusionHead& grad) {
  const std::size_t B = cache.xhat.rows();
  const std::size_t F = cache.xhat.cols();
  Matrix d = head.classifier.backward(cache.dropped, dlogits, grad.classifier);
  if (!cache.mask.empty()) {
    for (std::size_t i = 0; i < d.size(); ++i) d.values()[i] *= cache.mask.values()[i];
  }
  // ReLU then the affine part of batch norm.
  Matrix dxhat(B, F);
  for (std::size_t i = 0; i < B; ++i) {
    for (std::size_t j = 0; j < F; ++j) {
      const double g = cache.activated(i, j) > 0.0 ? d(i, j) : 0.0;
      grad.bn_gamma[j] += g * cache.xhat(i, j);
      grad.bn_beta[j] += g;
      dxhat(i, j) = g * head.bn_gamma[j];
    }
  }
  Matrix dpre(B, F);
  const bool batch_stats = !cache.batch_var_unbiased.empty() && B >= 2 &&
                           cache.batch_var_unbiased.size() == F;
  for (std::size_t j = 0; j < F; ++j) {
    if (batch_stats) {
      double sum_d = 0.0, sum_dx = 0.0;
      for (std::size_t i = 0; i < B; ++i) {
        sum_d += dxhat(i, j);
        sum_dx += dxhat(i, j) * cache.xhat(i, j);
      }
      const double scale = cache.inv_std[j] / static_cast<double>(B);
      for (std::size_t i = 0; i < B; ++i) {
        dpre(i, j) = scale * (static_cast<double>(B) * dxhat(i, j) - sum_d -
                              cache.xhat(i, j) * sum_dx);
      }
    } else {
      for (std::size_t i = 0; i < B; ++i) dpre(i, j) = dxhat(i, j) * cache.inv_std[j];
    }
  }
  return head.hidden.backward(cache.input, dpre, grad.hidden);
}

std::vector<double> log_softmax(std::span<const double> logits) {
  double mx = -INFINITY;
  for (double v : logits) mx = std::max(mx, v);
  double z = 0.0;
  for (double v : logits) z += std::exp(v - mx);
  const double lse = mx + std::log(z);
  std::vector<double> out(logits.size());
  for (std::size_t k = 0; k < logits.size(); ++k) out[k] = logits[k] - lse;
  return out;
}

std::vector<double> softmax(std::span<const double> logits) {
  double mx = -INFINITY;
  for (double v : logits) mx = std::max(mx, v);
  std::vector<double> out(logits.size());
  double z = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    out[k] = std::exp(logits[k] - mx);
    z += out[k];
  }
  for (double& p : out) p /= z;
  return out;
}

namespace {

void check_loss_inputs(const Matrix& logits, std::span<const int> labels, const LossConfig& cfg) {
  const std::size_t n = logits.cols();
  if (logits.rows() != labels.size()) throw ShapeError("one label per logit row required");
  if (logits.rows() == 0) throw InvalidInputError("loss of an empty batch");
  if (!cfg.class_weights.empty() && cfg.class_weights.size() != n) {
    throw ShapeError("class weight count does not match class count");
  }
  if (!(cfg.label_smoothing >= 0.0 && cfg.label_smoothing < 1.0)) {
    throw ConfigError("label smoothing must lie in [0, 1)");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= n) {
      throw InvalidInputError("label " + std::to_string(y) + " out of range for " +
                              std::to_string(n) + " classes");
    }
  }
  check_finite(logits, "logits");
}

double sample_weight(const LossConfig& cfg, int y) {
  return cfg.class_weights.empty() ? 1.0 : cfg.class_weights[static_cast<std::size_t>(y)];
}

double normalizer(std::span<const int> labels, const LossConfig& cfg) {
  if (cfg.normalization == LossNormalization::batch_mean) return static_cast<double>(labels.size());
  double z = 0.0;
  for (int y : labels) z += sample_weight(cfg, y);
  return z;
}

}  // namespace

double weighted_smoothed_ce(const Matrix& logits, std::span<const int> labels,
                            const LossConfig& cfg) {
  check_loss_inputs(logits, labels, cfg);
  const std::size_t n = logits.cols();
  const double s = cfg.label_smoothing;
  double acc = 0.0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto logp = log_softmax(logits.row(i));
    double inner = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double q = (1.0 - s) * (static_cast<int>(k) == labels[i] ? 1.0 : 0.0) +
                       s / static_cast<double>(n);
      inner += q * logp[k];
    }
    acc += sample_weight(cfg, labels[i]) * inner;
  }
  return -acc / normalizer(labels, cfg);
}

Matrix loss_backward(const Matrix& logits, std::span<const int> labels, const LossConfig& cfg) {
  check_loss_inputs(logits, labels, cfg);
  const std::size_t n = logits.cols();
  const double s = cfg.label_smoothing;
  const double z = normalizer(labels, cfg);
  Matrix d(logits.rows(), n);
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto p = softmax(logits.row(i));
    const double w = sample_weight(cfg, labels[i]) / z;
    for (std::size_t k = 0; k < n; ++k) {
      const double q = (1.0 - s) * (static_cast<int>(k) == labels[i] ? 1.0 : 0.0) +
                       s / static_cast<double>(n);
      d(i, k) = w * (p[k] - q);
    }
  }
  return d;
}

}  // namespace mambakick
