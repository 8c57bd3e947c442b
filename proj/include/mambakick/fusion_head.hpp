#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mambakick/tensor.hpp"

namespace mambakick {

class Rng;

// Binary pre-kick context: pitch side (0 = right, 1 = left) and dominant foot
// (0 = right-footed, 1 = left-footed).
struct MetadataVector {
  std::uint8_t pitch_side = 0;
  std::uint8_t dominant_foot = 0;

  std::array<double, 2> as_input() const {
    return {static_cast<double>(pitch_side), static_cast<double>(dominant_foot)};
  }
  bool operator==(const MetadataVector&) const = default;
};

// ReLU(Linear(2 -> M)).
struct MetaBranch {
  Linear proj;

  MetaBranch() = default;
  explicit MetaBranch(std::size_t embed_dim) : proj(2, embed_dim, true) {}
  void init(Rng& rng) { proj.init_uniform(rng); }
  std::size_t width() const { return proj.out_features(); }
  void collect(const std::string& prefix, ParamList& out) { proj.collect(prefix + ".proj", out); }
};

std::vector<double> meta_branch(std::span<const double> gamma, const MetaBranch& branch);
std::vector<double> meta_branch(const MetadataVector& gamma, const MetaBranch& branch);

// Batched form: rows of `gamma` are (possibly noise-injected) metadata inputs.
struct MetaCache {
  Matrix input;
  Matrix pre;
};
Matrix meta_branch_forward(const MetaBranch& branch, const Matrix& gamma, MetaCache* cache);
void meta_branch_backward(const MetaBranch& branch, const MetaCache& cache, const Matrix& dy,
                          MetaBranch& grad);

enum class Mode { train, eval };

struct FusionOptions {
  std::size_t input_dim = 48;
  std::size_t hidden = 128;
  std::size_t classes = 3;
  double dropout = 0.3;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;
};

// Linear -> BatchNorm -> ReLU -> Dropout -> Linear(classes).
struct FusionHead {
  Linear hidden;
  std::vector<double> bn_gamma;
  std::vector<double> bn_beta;
  Linear classifier;
  // Non-learnable buffers.
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double dropout = 0.3;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;

  FusionHead() = default;
  explicit FusionHead(const FusionOptions& options);
  void init(Rng& rng);
  std::size_t input_dim() const { return hidden.in_features(); }
  std::size_t classes() const { return classifier.out_features(); }
  void collect(const std::string& prefix, ParamList& out);
  void collect_buffers(const std::string& prefix, ParamList& out);
};

struct FusionCache {
  Matrix input;
  Matrix xhat;
  std::vector<double> inv_std;
  std::vector<double> batch_mean;
  std::vector<double> batch_var_unbiased;
  Matrix activated;   // ReLU output
  Matrix mask;        // dropout scale per element (0 or 1/(1-p)); empty in eval mode
  Matrix dropped;
};

// Pure: train mode normalizes with batch statistics but does not touch the
// running buffers (see update_running_stats). `rng` drives dropout in train
// mode and may be null in eval mode.
Matrix fuse_and_classify(const FusionHead& head, const Matrix& concat, Mode mode, Rng* rng,
                         FusionCache* cache = nullptr);
Matrix fuse_and_classify(const FusionHead& head, std::span<const double> t_run,
                         std::span<const double> t_kick, std::span<const double> t_meta, Mode mode,
                         Rng* rng);
void update_running_stats(FusionHead& head, const FusionCache& cache);
Matrix fusion_backward(const FusionHead& head, const FusionCache& cache, const Matrix& dlogits,
                       FusionHead& grad);

enum class LossNormalization { weight_sum, batch_mean };

struct LossConfig {
  std::vector<double> class_weights;  // empty = unit weights
  double label_smoothing = 0.01;
  LossNormalization normalization = LossNormalization::weight_sum;
};

std::vector<double> log_softmax(std::span<const double> logits);
std::vector<double> softmax(std::span<const double> logits);

// Class-weighted, label-smoothed cross-entropy over a batch of logits.
double weighted_smoothed_ce(const Matrix& logits, std::span<const int> labels,
                            const LossConfig& cfg);
Matrix loss_backward(const Matrix& logits, std::span<const int> labels, const LossConfig& cfg);

}  // namespace mambakick
