#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mambakick/config.hpp"
#include "mambakick/dataset.hpp"
#include "mambakick/metrics.hpp"
#include "mambakick/model.hpp"
#include "mambakick/optim.hpp"

namespace mambakick {

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  double lr = 0.0;        // rate of the last step in the epoch
  bool operator==(const EpochRecord&) const = default;
};

struct StepRecord {
  std::int64_t step = 0;  // 1-based optimizer step
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double grad_norm = 0.0;     // before clipping
  double clipped_norm = 0.0;  // after clipping
  bool operator==(const StepRecord&) const = default;
};

struct Schedule {
  std::int64_t steps_per_epoch = 0;
  std::int64_t total_steps = 0;
  std::int64_t warmup_steps = 0;
};

// total = max_epochs * floor(n_train / batch); warmup = round(frac * total),
// capped below total.
Schedule make_schedule(const TrainConfig& config, std::size_t train_size);

struct FoldTrainResult {
  ModelBundle model;          // best snapshot
  OptimizerState optimizer;   // state at the best snapshot
  std::vector<EpochRecord> history;
  std::vector<StepRecord> steps;
  std::vector<double> class_weights;
  Schedule schedule;
  std::size_t best_epoch = 0;
  std::size_t stopped_epoch = 0;
  bool early_stopped = false;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

FoldTrainResult train_model(std::span<const PenaltySample> train, std::span<const PenaltySample> val,
                            const TrainConfig& config, std::size_t classes, std::uint64_t seed,
                            BranchSet branches = {}, const EpochCallback& on_epoch = {});

LossConfig make_loss_config(const TrainConfig& config, std::span<const PenaltySample> train,
                            std::size_t classes);

// Eval-mode logits for every sample, in order.
Matrix eval_logits(const ModelBundle& model, std::span<const PenaltySample> samples);

struct FoldOutcome {
  std::size_t fold = 0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> val_indices;
  FoldTrainResult train;
  EvalResult eval;
};

struct CrossValResult {
  std::size_t classes = 0;
  FoldSplit split;
  std::vector<FoldOutcome> folds;
  MetricSummary summary;          // fold means
  ConfusionMatrix pooled;         // all held-out predictions
  MetricReport pooled_report;
  SubgroupReport subgroups;       // pooled
  std::vector<int> predictions;   // out-of-fold, indexed like the dataset
  std::optional<EvalResult> gk;   // absent unless every sample is annotated
};

struct CrossValOptions {
  BranchSet branches;
  std::size_t jobs = 1;
  std::function<void(std::size_t fold, const EpochRecord&)> on_epoch;
  std::function<void(const FoldOutcome&)> on_fold;
};

std::uint64_t fold_seed(std::uint64_t base, std::size_t fold);

// The dataset must already be in the desired label space.
CrossValResult cross_validate(const Dataset& dataset, const TrainConfig& config,
                              const CrossValOptions& options = {});

struct AblationRow {
  BranchSet branches;
  MetricSummary summary;
  MetricReport pooled;
};

// Running; Running + Kicking; Running + Kicking + Metadata.
std::vector<BranchSet> default_ablation_rows();
BranchSet parse_branch_set(const std::string& text);  // "run,kick" or "run+kick"
void validate_ablation_rows(std::span<const BranchSet> rows);

std::vector<AblationRow> run_ablation(const Dataset& dataset, const TrainConfig& config,
                                      std::span<const BranchSet> rows, std::size_t jobs = 1,
                                      const std::function<void(const AblationRow&)>& on_row = {});

}  // namespace mambakick
