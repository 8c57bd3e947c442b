#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mambakick/config.hpp"
#include "mambakick/dataset.hpp"
#include "mambakick/kv.hpp"
#include "mambakick/metrics.hpp"
#include "mambakick/train.hpp"

namespace mambakick {

// Run directory layout:
//   config.txt            resolved TrainConfig
//   dataset.txt           manifest sidecar of the evaluated label space
//   summary.kv            fold means, pooled matrix, subgroups, GK baseline
//   predictions.tsv       out-of-fold predictions
//   ablation.kv           optional, written by the ablate command
//   folds/fold_XX/        checkpoint.bin, history.tsv, steps.tsv, metrics.kv
namespace run_files {
inline constexpr const char* kConfig = "config.txt";
inline constexpr const char* kDataset = "dataset.txt";
inline constexpr const char* kSummary = "summary.kv";
inline constexpr const char* kPredictions = "predictions.tsv";
inline constexpr const char* kAblation = "ablation.kv";
inline constexpr const char* kReport = "report.txt";
}  // namespace run_files

std::string history_tsv(std::span<const EpochRecord> history);
std::string steps_tsv(std::span<const StepRecord> steps);

void put_report(KeyValues& kv, const std::string& prefix, const MetricReport& r);
void put_confusion(KeyValues& kv, const std::string& prefix, const ConfusionMatrix& cm);
KeyValues crossval_summary(const Dataset& dataset, const CrossValResult& cv);
KeyValues ablation_summary(std::span<const AblationRow> rows, std::size_t classes,
                           const std::string& backbone);

void write_crossval_run(const std::filesystem::path& dir, const Dataset& dataset,
                        const TrainConfig& config, const CrossValResult& cv);
void write_ablation(const std::filesystem::path& dir, const TrainConfig& config,
                    std::span<const AblationRow> rows, std::size_t classes,
                    const std::string& backbone);

// Text tables mirroring the results, ablation and subgroup layouts. Works on
// a directory holding summary.kv and/or ablation.kv.
std::string render_text_report(const std::filesystem::path& dir);
std::string render_results_table(const KeyValues& summary);
std::string render_ablation_table(const KeyValues& ablation);
std::string render_subgroup_table(const KeyValues& summary);
std::string render_confusion_text(const KeyValues& summary, const std::string& prefix,
                                  const std::string& title);

// file name -> SVG document.
std::map<std::string, std::string> render_svg_report(const std::filesystem::path& dir);
std::string confusion_svg(const ConfusionMatrix& cm, const std::string& title);
std::string subgroup_svg(const KeyValues& summary);

ConfusionMatrix read_confusion(const KeyValues& kv, const std::string& prefix);

}  // namespace mambakick
