#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mambakick/dataset.hpp"

namespace mambakick {

struct ModelBundle;

// Rows = true class, columns = predicted class. Predictions outside the label
// space (e.g. a center dive scored against two-class labels) land in `other`
// and count as errors.
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::size_t classes)
      : classes_(classes), counts_(classes * classes, 0), other_(classes, 0) {}

  void add(int truth, int predicted, std::size_t count = 1);
  void merge(const ConfusionMatrix& other);

  std::size_t classes() const { return classes_; }
  std::size_t at(std::size_t truth, std::size_t predicted) const {
    return counts_[truth * classes_ + predicted];
  }
  std::size_t other(std::size_t truth) const { return other_[truth]; }
  std::size_t row_total(std::size_t truth) const;
  std::size_t col_total(std::size_t predicted) const;
  std::size_t total() const;
  std::size_t trace() const;
  // Fraction of each true-class row; an empty row stays all zero.
  std::vector<double> row_normalized() const;

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::size_t classes_ = 0;
  std::vector<std::size_t> counts_;
  std::vector<std::size_t> other_;
};

ConfusionMatrix confusion_from(std::span<const int> labels, std::span<const int> predictions,
                               std::size_t classes);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct MetricReport {
  std::size_t samples = 0;
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  std::vector<ClassMetrics> per_class;
};

MetricReport metrics_from_confusion(const ConfusionMatrix& cm);

struct SubgroupStat {
  std::string metadata;  // "pitch_side" / "kicker_foot"
  std::string group;     // "right_side", "left_side", "right_foot", "left_foot"
  std::size_t n = 0;
  std::size_t correct = 0;
  bool present() const { return n > 0; }
  std::optional<double> accuracy() const;
  std::optional<double> error_rate() const;
};

using SubgroupReport = std::array<SubgroupStat, 4>;

SubgroupReport subgroup_report(std::span<const PenaltySample> samples,
                               std::span<const int> predictions);
SubgroupReport subgroup_report(const ModelBundle& model, std::span<const PenaltySample> samples);

struct EvalResult {
  ConfusionMatrix confusion;
  MetricReport report;
  SubgroupReport subgroups;
  std::vector<int> predictions;
};

EvalResult evaluate_predictions(std::span<const PenaltySample> samples,
                                std::span<const int> predictions, std::size_t classes);
EvalResult evaluate(const ModelBundle& model, std::span<const PenaltySample> samples);

bool has_gk_annotations(std::span<const PenaltySample> samples);
// Scores gk_direction as the prediction. Missing annotations raise DataError
// listing the ids.
EvalResult gk_baseline(std::span<const PenaltySample> samples, std::size_t classes);

struct MetricSummary {
  std::size_t folds = 0;
  double accuracy = 0.0, accuracy_std = 0.0;
  double macro_precision = 0.0, macro_precision_std = 0.0;
  double macro_recall = 0.0, macro_recall_std = 0.0;
  double macro_f1 = 0.0, macro_f1_std = 0.0;
};

// Per-fold mean and sample standard deviation.
MetricSummary summarize_folds(std::span<const MetricReport> folds);

}  // namespace mambakick
