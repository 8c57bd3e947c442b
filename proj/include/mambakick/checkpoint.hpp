#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mambakick/config.hpp"
#include "mambakick/model.hpp"
#include "mambakick/optim.hpp"
#include "mambakick/train.hpp"

namespace mambakick {

struct Checkpoint {
  ModelBundle model;
  OptimizerState optimizer;
  TrainConfig config;
  std::vector<EpochRecord> history;
  std::vector<double> class_weights;
  std::size_t best_epoch = 0;
  std::size_t stopped_epoch = 0;
};

Checkpoint make_checkpoint(const FoldTrainResult& result, const TrainConfig& config);

// Magic line, JSON metadata block, then named little-endian f64 tensors:
// parameters, buffers and both Adam moments.
std::string encode_checkpoint(Checkpoint& checkpoint);
Checkpoint decode_checkpoint(std::span<const char> bytes);
void save_checkpoint(const std::filesystem::path& path, Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

inline constexpr const char* kCheckpointMagic = "MAMBAKICK-CHECKPOINT v1\n";

}  // namespace mambakick
