#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "mambakick/dataset.hpp"

namespace mambakick {

class Rng;

struct AugmentConfig {
  double apply_prob = 0.90;
  double temporal_mask_max_frac = 0.25;
  int temporal_shift_max = 2;
  double frame_dropout = 0.08;
  double gaussian_noise_std = 0.012;
  double magnitude_jitter_std = 0.04;
  double feature_dropout = 0.05;
  double metadata_noise_std = 0.01;

  void validate() const;
  bool operator==(const AugmentConfig&) const = default;
};

struct AugmentedSample {
  PenaltySample sample;
  std::array<double, 2> meta_input{};  // continuous metadata fed to the meta branch
};

// What happened to one phase (index 0 = run, 1 = kick).
struct PhaseTrace {
  std::size_t mask_start = 0;
  std::size_t mask_length = 0;
  int shift = 0;
  std::vector<bool> frame_dropped;
  std::vector<bool> feature_dropped;
};

struct AugmentTrace {
  bool fired = false;
  std::array<PhaseTrace, 2> phase;
};

// Gate, then mask -> shift -> frame dropout -> noise -> jitter -> feature
// dropout -> metadata noise. Label, gk direction and shapes pass through.
AugmentedSample augment(const PenaltySample& sample, const AugmentConfig& config, Rng& rng,
                        AugmentTrace* trace = nullptr);

// No-op conversion used for evaluation.
AugmentedSample passthrough(const PenaltySample& sample);

}  // namespace mambakick
