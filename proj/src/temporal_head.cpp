#include "mambakick/temporal_head.hpp"

#include <cmath>

#include "mambakick/rng.hpp"

namespace mambakick {

Matrix EmbeddingSequence::to_matrix() const {
  Matrix m(steps, dim);
  for (std::size_t i = 0; i < data.size(); ++i) m.values()[i] = static_cast<double>(data[i]);
  return m;
}

void LayerNorm::collect(const std::string& prefix, ParamList& out) {
  out.push_back({prefix + ".gamma", gamma});
  out.push_back({prefix + ".beta", beta});
}

Matrix layer_norm_forward(const LayerNorm& norm, const Matrix& x, LayerNormCache* cache) {
  const std::size_t T = x.rows(), W = x.cols();
  if (W != norm.gamma.size()) throw ShapeError("layer norm width mismatch");
  Matrix y(T, W);
  Matrix xhat(T, W);
  std::vector<double> inv_std(T);
  for (std::size_t t = 0; t < T; ++t) {
    auto row = x.row(t);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(W);
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= static_cast<double>(W);
    const double is = 1.0 / std::sqrt(var + norm.eps);
    inv_std[t] = is;
    for (std::size_t i = 0; i < W; ++i) {
      xhat(t, i) = (row[i] - mean) * is;
      y(t, i) = norm.gamma[i] * xhat(t, i) + norm.beta[i];
    }
  }
  if (cache != nullptr) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

Matrix layer_norm_backward(const LayerNorm& norm, const LayerNormCache& cache, const Matrix& dy,
                           LayerNorm& grad) {
  const std::size_t T = dy.rows(), W = dy.cols();
  Matrix dx(T, W);
  std::vector<double> dxhat(W);
  for (std::size_t t = 0; t < T; ++t) {
    double mean_d = 0.0, mean_dx = 0.0;
    for (std::size_t i = 0; i < W; ++i) {
      const double g = dy(t, i);
      grad.gamma[i] += g * cache.xhat(t, i);
      grad.beta[i] += g;
      dxhat[i] = g * norm.gamma[i];
      mean_d += dxhat[i];
      mean_dx += dxhat[i] * cache.xhat(t, i);
    }
    mean_d /= static_cast<double>(W);
    mean_dx /= static_cast<double>(W);
    for (std::size_t i = 0; i < W; ++i) {
      dx(t, i) = cache.inv_std[t] * (dxhat[i] - mean_d - cache.xhat(t, i) * mean_dx);
    }
  }
  return dx;
}

PoolResult attn_pool(const Matrix& h, std::span<const double> w) {
  const std::size_t T = h.rows(), W = h.cols();
  if (T == 0) throw InvalidInputError("attention pooling requires a non-empty sequence");
  if (w.size() != W) throw ShapeError("attention pooling weight width mismatch");
  PoolResult r{std::vector<double>(W, 0.0), std::vector<double>(T)};
  double max_score = -INFINITY;
  for (std::size_t t = 0; t < T; ++t) {
    double e = 0.0;
    for (std::size_t i = 0; i < W; ++i) e += w[i] * h(t, i);
    r.alphas[t] = e;
    max_score = std::max(max_score, e);
  }
  double z = 0.0;
  for (double& a : r.alphas) {
    a = std::exp(a - max_score);
    z += a;
  }
  for (double& a : r.alphas) a /= z;
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t i = 0; i < W; ++i) r.pooled[i] += r.alphas[t] * h(t, i);
  }
  return r;
}

Matrix attn_pool_backward(const Matrix& h, std::span<const double> w, const PoolResult& forward,
                          std::span<const double> d_pooled, std::span<double> dw) {
  const std::size_t T = h.rows(), W = h.cols();
  std::vector<double> d_alpha(T, 0.0);
  double weighted = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    double s = 0.0;
    for (std::size_t i = 0; i < W; ++i) s += d_pooled[i] * h(t, i);
    d_alpha[t] = s;
    weighted += forward.alphas[t] * s;
  }
  Matrix dh(T, W);
  for (std::size_t t = 0; t < T; ++t) {
    const double de = forward.alphas[t] * (d_alpha[t] - weighted);
    for (std::size_t i = 0; i < W; ++i) {
      dw[i] += de * h(t, i);
      dh(t, i) = forward.alphas[t] * d_pooled[i] + de * w[i];
    }
  }
  return dh;
}

BranchEncoder::BranchEncoder(const EncoderOptions& options)
    : input_proj(options.input_dim, options.width, true),
      pool_weight(options.width, 0.0),
      scan(options.scan) {
  if (options.num_layers == 0) throw ShapeError("branch encoder requires at least one layer");
  SsmLayerOptions layer_options{options.width, options.state_size, options.expand,
                                options.conv_width, options.use_conv};
  for (std::size_t l = 0; l < options.num_layers; ++l) {
    norms.emplace_back(options.width);
    layers.emplace_back(layer_options);
  }
}

void BranchEncoder::init(Rng& rng) {
  input_proj.init_uniform(rng);
  for (auto& layer : layers) layer.init(rng);
  std::fill(pool_weight.begin(), pool_weight.end(), 0.0);
}

void BranchEncoder::collect(const std::string& prefix, ParamList& out) {
  input_proj.collect(prefix + ".input_proj", out);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string p = prefix + ".layers." + std::to_string(l);
    norms[l].collect(p + ".norm", out);
    layers[l].collect(p, out);
  }
  out.push_back({prefix + ".pool.w", pool_weight});
}

std::vector<double> encode_branch(const BranchEncoder& encoder, const Matrix& seq,
                                  BranchCache* cache) {
  if (seq.cols() != encoder.input_dim()) {
    throw ShapeError("branch encoder expects embedding dim " +
                     std::to_string(encoder.input_dim()) + ", got " + std::to_string(seq.cols()));
  }
  if (seq.rows() == 0) throw InvalidInputError("branch encoder requires a non-empty sequence");
  Matrix x = encoder.input_proj.forward(seq);
  if (cache != nullptr) {
    cache->input = seq;
    cache->residual.clear();
    cache->norm.assign(encoder.layers.size(), {});
    cache->layer.assign(encoder.layers.size(), {});
  }
  for (std::size_t l = 0; l < encoder.layers.size(); ++l) {
    LayerNormCache* nc = cache != nullptr ? &cache->norm[l] : nullptr;
    if (cache != nullptr) cache->residual.push_back(x);
    const Matrix normed = layer_norm_forward(encoder.norms[l], x, nc);
    SsmLayerCache scratch;
    SsmLayerCache& lc = cache != nullptr ? cache->layer[l] : scratch;
    const Matrix out = ssm_layer_forward(encoder.layers[l], normed, lc, encoder.scan);
    for (std::size_t i = 0; i < x.size(); ++i) x.values()[i] += out.values()[i];
  }
  PoolResult pooled = attn_pool(x, encoder.pool_weight);
  std::vector<double> result = pooled.pooled;
  if (cache != nullptr) {
    cache->output = std::move(x);
    cache->pool = std::move(pooled);
  }
  return result;
}

std::vector<double> encode_branch(const BranchEncoder& encoder, const EmbeddingSequence& seq,
                                  BranchCache* cache) {
  return encode_branch(encoder, seq.to_matrix(), cache);
}

Matrix encode_branch_backward(const BranchEncoder& encoder, const BranchCache& cache,
                              std::span<const double> d_branch, BranchEncoder& grad) {
  if (d_branch.size() != encoder.width()) throw ShapeError("branch gradient width mismatch");
  Matrix dx = attn_pool_backward(cache.output, encoder.pool_weight, cache.pool, d_branch,
                                 grad.pool_weight);
  for (std::size_t l = encoder.layers.size(); l-- > 0;) {
    const Matrix d_normed =
        ssm_layer_backward(encoder.layers[l], cache.layer[l], dx, grad.layers[l]);
    const Matrix d_res = layer_norm_backward(encoder.norms[l], cache.norm[l], d_normed,
                                             grad.norms[l]);
    for (std::size_t i = 0; i < dx.size(); ++i) dx.values()[i] += d_res.values()[i];
  }
  return encoder.input_proj.backward(cache.input, dx, grad.input_proj);
}

}  // namespace mambakick
