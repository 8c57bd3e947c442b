#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mambakick/fusion_head.hpp"
#include "mambakick/temporal_head.hpp"

namespace mambakick {

// Shot direction in the three-class label space. After binarize() labels are
// remapped to {left = 0, right = 1}.
enum class Direction : std::uint8_t { left = 0, center = 1, right = 2 };

inline constexpr std::uint8_t kGkAbsent = 255;

std::string class_name(std::size_t label, std::size_t classes);

struct PenaltySample {
  std::string id;
  EmbeddingSequence run;
  EmbeddingSequence kick;
  MetadataVector meta;
  std::uint8_t label = 0;
  // Goalkeeper dive. In a binarized set a center dive is kept as 2, i.e.
  // outside the two-class label space, and scores as a miss.
  std::optional<std::uint8_t> gk_direction;

  bool operator==(const PenaltySample&) const = default;
};

struct DatasetManifest {
  std::uint32_t version = 1;
  std::size_t dim = 0;
  std::size_t run_len = 5;
  std::size_t kick_len = 3;
  std::size_t classes = 3;
  std::string backbone = "unknown";
  std::size_t sample_count = 0;
  std::vector<std::size_t> class_counts;

  bool operator==(const DatasetManifest&) const = default;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<PenaltySample> samples;

  // Recomputes sample_count and class_counts from the samples.
  void refresh_counts();
  std::vector<int> labels() const;
};

// Fixed-size text header of the container file.
inline constexpr std::size_t kDatasetHeaderSize = 256;
inline constexpr const char* kDatasetMagic = "MAMBAKICK-DATASET";

std::string encode_dataset(const Dataset& dataset);
Dataset decode_dataset(std::span<const char> bytes);
void save_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& path);

// Human-readable sidecar: counts and the label distribution per metadata
// category (pitch side x direction, kicker foot x direction).
std::string manifest_sidecar(const Dataset& dataset);

struct FoldSplit {
  std::size_t k = 0;
  std::vector<std::size_t> fold_of;  // indexed like the sample list

  std::vector<std::size_t> members(std::size_t fold) const;
  std::vector<std::size_t> complement(std::size_t fold) const;
  bool operator==(const FoldSplit&) const = default;
};

// Shuffles each class by `seed`, then deals class-sorted samples round-robin
// across folds (the deal position carries over between classes).
FoldSplit stratified_kfold(std::span<const PenaltySample> samples, std::size_t classes,
                           std::size_t k, std::uint64_t seed);

// Drops center samples and remaps {left, right} -> {0, 1}. Identity on a
// two-class dataset.
Dataset binarize(const Dataset& dataset);
std::vector<PenaltySample> binarize_samples(std::span<const PenaltySample> samples);

// w_k proportional to 1 / count_k, rescaled to mean 1.
std::vector<double> compute_class_weights(std::span<const int> labels, std::size_t classes);

struct SyntheticConfig {
  std::size_t num_samples = 622;
  std::size_t dim = 16;
  std::size_t run_len = 5;
  std::size_t kick_len = 3;
  double signal_strength = 1.0;
  double noise_std = 0.1;
  std::uint64_t seed = 0;
  double gk_match_rate = 0.46;
  // Exponent applied to the per-foot direction rates before renormalizing;
  // 1 reproduces the reference rates, larger values make metadata more
  // predictive.
  double metadata_sharpness = 1.0;
  // Label-independent per-sample offset on dims >= 4 (kicker appearance).
  double appearance_std = 0.5;
  std::string backbone = "synthetic";
};

// Reference direction rates (percent, left/center/right) per metadata group.
struct DirectionRates {
  std::array<double, 3> right_side{46.65, 17.78, 35.57};
  std::array<double, 3> left_side{48.29, 14.53, 37.18};
  std::array<double, 3> right_foot{51.23, 16.26, 32.51};
  std::array<double, 3> left_foot{33.09, 17.65, 49.26};
  double p_left_side = 234.0 / 622.0;
  double p_left_foot = 136.0 / 622.0;
  std::array<double, 3> class_prior{294.0 / 622.0, 103.0 / 622.0, 225.0 / 622.0};
};

Dataset generate_synthetic(const SyntheticConfig& config);

}  // namespace mambakick
