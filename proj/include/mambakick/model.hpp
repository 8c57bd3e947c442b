#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mambakick/augment.hpp"
#include "mambakick/dataset.hpp"
#include "mambakick/fusion_head.hpp"
#include "mambakick/temporal_head.hpp"

namespace mambakick {

class Rng;

struct BranchSet {
  bool run = true;
  bool kick = true;
  bool meta = true;

  std::string label() const;  // e.g. "run+kick"
  bool operator==(const BranchSet&) const = default;
};

// zero: excluded branch vectors are zeroed at the concat, head unchanged.
// narrow: the fusion head only sees the active branches.
enum class AblationMode { zero, narrow };

struct ModelOptions {
  EncoderOptions encoder;
  std::size_t meta_dim = 16;
  std::size_t fusion_hidden = 128;
  std::size_t classes = 3;
  double dropout = 0.3;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;
  BranchSet branches;
  AblationMode ablation = AblationMode::zero;

  std::size_t fusion_input_dim() const;
  bool operator==(const ModelOptions&) const = default;
};

struct ModelBundle {
  ModelOptions options;
  BranchEncoder run;
  BranchEncoder kick;
  MetaBranch meta;
  FusionHead fusion;

  ModelBundle() = default;
  explicit ModelBundle(const ModelOptions& options);
  void init(Rng& rng);
  void collect(const std::string& prefix, ParamList& out);
  void collect_buffers(const std::string& prefix, ParamList& out);
  std::size_t parameter_count();
};

struct ModelBatch {
  std::vector<Matrix> run;
  std::vector<Matrix> kick;
  Matrix meta;  // B x 2
  std::vector<int> labels;

  std::size_t size() const { return run.size(); }
};

ModelBatch make_batch(std::span<const AugmentedSample> samples);
ModelBatch make_batch(std::span<const PenaltySample> samples);

struct ModelCache {
  std::vector<BranchCache> run;
  std::vector<BranchCache> kick;
  MetaCache meta;
  FusionCache fusion;
};

Matrix model_forward(const ModelBundle& model, const ModelBatch& batch, Mode mode, Rng* rng,
                     ModelCache* cache = nullptr);
// Accumulates every parameter gradient into `grad` (a zeros_like copy).
void model_backward(const ModelBundle& model, const ModelCache& cache, const Matrix& dlogits,
                    ModelBundle& grad);

// Row-wise argmax, ties to the lowest class index.
std::vector<int> argmax_rows(const Matrix& logits);
std::vector<int> predict(const ModelBundle& model, std::span<const PenaltySample> samples);

}  // namespace mambakick
