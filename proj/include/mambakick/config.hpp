#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include "mambakick/augment.hpp"
#include "mambakick/fusion_head.hpp"
#include "mambakick/kv.hpp"
#include "mambakick/model.hpp"
#include "mambakick/optim.hpp"

namespace mambakick {

enum class ClassWeighting { inverse_frequency, none };

struct TrainConfig {
  // Optimization recipe.
  std::size_t batch_size = 5;
  std::size_t max_epochs = 60;
  std::size_t patience = 10;
  double lr = 1e-3;
  double weight_decay = 5e-2;
  double clip_norm = 1.0;
  double label_smoothing = 0.01;
  double warmup_frac = 0.05;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  std::size_t folds = 10;
  ClassWeighting class_weighting = ClassWeighting::inverse_frequency;
  LossNormalization loss_normalization = LossNormalization::weight_sum;

  // Architecture. d_model = 0 picks min(128, max(16, D / 4)).
  std::size_t d_model = 0;
  std::size_t state_size = 16;
  std::size_t num_layers = 2;
  std::size_t expand = 2;
  std::size_t conv_width = 4;
  bool use_conv = true;
  ScanMethod scan_method = ScanMethod::recurrent;
  std::size_t meta_dim = 16;
  std::size_t fusion_hidden = 128;
  double dropout = 0.3;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;
  AblationMode ablation_mode = AblationMode::zero;

  bool augment_enabled = true;
  AugmentConfig augment;

  void validate() const;
  AdamWHyper adamw() const { return {adam_beta1, adam_beta2, adam_eps, weight_decay}; }
  std::size_t resolved_width(std::size_t input_dim) const;
  ModelOptions model_options(std::size_t input_dim, std::size_t classes,
                             BranchSet branches = {}) const;

  KeyValues to_kv() const;
  std::string to_text() const { return to_kv().to_text(); }
  static TrainConfig from_kv(const KeyValues& kv);
  static TrainConfig parse(const std::string& text);
  static TrainConfig load(const std::filesystem::path& path);

  bool operator==(const TrainConfig&) const = default;
};

inline constexpr const char* kConfigEnvVar = "MAMBAKICK_CONFIG";

// Explicit path, else $MAMBAKICK_CONFIG, else built-in defaults.
TrainConfig resolve_config(const std::string& explicit_path);

}  // namespace mambakick
