#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mambakick/ssm.hpp"
#include "mambakick/tensor.hpp"

namespace mambakick {

enum class Phase : std::uint8_t { run = 0, kick = 1 };

// Clip-level embeddings of one penalty phase, T x D, stored as they appear on
// disk (32-bit floats).
struct EmbeddingSequence {
  Phase phase = Phase::run;
  std::size_t steps = 0;
  std::size_t dim = 0;
  std::vector<float> data;

  EmbeddingSequence() = default;
  EmbeddingSequence(Phase phase_, std::size_t steps_, std::size_t dim_)
      : phase(phase_), steps(steps_), dim(dim_), data(steps_ * dim_, 0.0f) {}

  float& at(std::size_t t, std::size_t d) { return data[t * dim + d]; }
  float at(std::size_t t, std::size_t d) const { return data[t * dim + d]; }
  Matrix to_matrix() const;
  bool operator==(const EmbeddingSequence&) const = default;
};

struct LayerNorm {
  std::vector<double> gamma;
  std::vector<double> beta;
  double eps = 1e-5;

  LayerNorm() = default;
  explicit LayerNorm(std::size_t width) : gamma(width, 1.0), beta(width, 0.0) {}
  void collect(const std::string& prefix, ParamList& out);
};

struct LayerNormCache {
  Matrix xhat;
  std::vector<double> inv_std;
};

Matrix layer_norm_forward(const LayerNorm& norm, const Matrix& x, LayerNormCache* cache);
Matrix layer_norm_backward(const LayerNorm& norm, const LayerNormCache& cache, const Matrix& dy,
                           LayerNorm& grad);

struct PoolResult {
  std::vector<double> pooled;
  std::vector<double> alphas;
};

// e_t = <w, h_t>, alpha = softmax(e), pooled = sum_t alpha_t h_t.
PoolResult attn_pool(const Matrix& h, std::span<const double> w);
// Returns dL/dh and accumulates dL/dw into dw.
Matrix attn_pool_backward(const Matrix& h, std::span<const double> w, const PoolResult& forward,
                          std::span<const double> d_pooled, std::span<double> dw);

struct EncoderOptions {
  std::size_t input_dim = 16;
  std::size_t width = 16;
  std::size_t state_size = 16;
  std::size_t num_layers = 2;
  std::size_t expand = 2;
  std::size_t conv_width = 4;
  bool use_conv = true;
  ScanMethod scan = ScanMethod::recurrent;
};

// input_proj -> [x + SsmLayer(LayerNorm(x))] * L -> attention pooling.
struct BranchEncoder {
  Linear input_proj;
  std::vector<LayerNorm> norms;
  std::vector<SsmLayer> layers;
  std::vector<double> pool_weight;
  ScanMethod scan = ScanMethod::recurrent;

  BranchEncoder() = default;
  explicit BranchEncoder(const EncoderOptions& options);
  void init(Rng& rng);
  std::size_t input_dim() const { return input_proj.in_features(); }
  std::size_t width() const { return input_proj.out_features(); }
  void collect(const std::string& prefix, ParamList& out);
};

struct BranchCache {
  Matrix input;
  std::vector<Matrix> residual;          // stream entering each layer
  std::vector<LayerNormCache> norm;
  std::vector<SsmLayerCache> layer;
  Matrix output;                         // final T x width stream
  PoolResult pool;
};

std::vector<double> encode_branch(const BranchEncoder& encoder, const Matrix& seq,
                                  BranchCache* cache = nullptr);
std::vector<double> encode_branch(const BranchEncoder& encoder, const EmbeddingSequence& seq,
                                  BranchCache* cache = nullptr);

// Returns dL/dseq and accumulates encoder gradients.
Matrix encode_branch_backward(const BranchEncoder& encoder, const BranchCache& cache,
                              std::span<const double> d_branch, BranchEncoder& grad);

}  // namespace mambakick
