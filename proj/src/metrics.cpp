#include "mambakick/metrics.hpp"

#include <cmath>
#include <numeric>

#include "mambakick/model.hpp"

namespace mambakick {

void ConfusionMatrix::add(int truth, int predicted, std::size_t count) {
  if (truth < 0 || static_cast<std::size_t>(truth) >= classes_) {
    throw InvalidInputError("true label " + std::to_string(truth) + " outside the label space");
  }
  if (predicted < 0 || static_cast<std::size_t>(predicted) >= classes_) {
    other_[static_cast<std::size_t>(truth)] += count;
    return;
  }
  counts_[static_cast<std::size_t>(truth) * classes_ + static_cast<std::size_t>(predicted)] += count;
}

void ConfusionMatrix::merge(const ConfusionMatrix& o) {
  if (classes_ == 0) {
    *this = o;
    return;
  }
  if (o.classes_ != classes_) throw ShapeError("cannot merge confusion matrices of different size");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += o.counts_[i];
  for (std::size_t i = 0; i < other_.size(); ++i) other_[i] += o.other_[i];
}

std::size_t ConfusionMatrix::row_total(std::size_t truth) const {
  std::size_t n = other_[truth];
  for (std::size_t p = 0; p < classes_; ++p) n += at(truth, p);
  return n;
}

std::size_t ConfusionMatrix::col_total(std::size_t predicted) const {
  std::size_t n = 0;
  for (std::size_t t = 0; t < classes_; ++t) n += at(t, predicted);
  return n;
}

std::size_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::size_t{0}) +
         std::accumulate(other_.begin(), other_.end(), std::size_t{0});
}

std::size_t ConfusionMatrix::trace() const {
  std::size_t n = 0;
  for (std::size_t k = 0; k < classes_; ++k) n += at(k, k);
  return n;
}

std::vector<double> ConfusionMatrix::row_normalized() const {
  std::vector<double> out(classes_ * classes_, 0.0);
  for (std::size_t t = 0; t < classes_; ++t) {
    const std::size_t row = row_total(t);
    if (row == 0) continue;
    for (std::size_t p = 0; p < classes_; ++p) {
      out[t * classes_ + p] = static_cast<double>(at(t, p)) / static_cast<double>(row);
    }
  }
  return out;
}

ConfusionMatrix confusion_from(std::span<const int> labels, std::span<const int> predictions,
                               std::size_t classes) {
  if (labels.size() != predictions.size()) throw ShapeError("labels and predictions differ in length");
  ConfusionMatrix cm(classes);
  for (std::size_t i = 0; i < labels.size(); ++i) cm.add(labels[i], predictions[i]);
  return cm;
}

MetricReport metrics_from_confusion(const ConfusionMatrix& cm) {
  MetricReport r;
  r.samples = cm.total();
  if (r.samples == 0) throw InvalidInputError("cannot score an empty sample set");
  const std::size_t n = cm.classes();
  r.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(r.samples);
  r.per_class.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    auto& c = r.per_class[k];
    const double tp = static_cast<double>(cm.at(k, k));
    const std::size_t predicted = cm.col_total(k);
    c.support = cm.row_total(k);
    c.precision = predicted ? tp / static_cast<double>(predicted) : 0.0;
    c.recall = c.support ? tp / static_cast<double>(c.support) : 0.0;
    c.f1 = (c.precision + c.recall) > 0.0 ? 2.0 * c.precision * c.recall / (c.precision + c.recall)
                                          : 0.0;
    r.macro_precision += c.precision;
    r.macro_recall += c.recall;
    r.macro_f1 += c.f1;
  }
  r.macro_precision /= static_cast<double>(n);
  r.macro_recall /= static_cast<double>(n);
  r.macro_f1 /= static_cast<double>(n);
  return r;
}

std::optional<double> SubgroupStat::accuracy() const {
  if (n == 0) return std::nullopt;
  return static_cast<double>(correct) / static_cast<double>(n);
}

std::optional<double> SubgroupStat::error_rate() const {
  if (n == 0) return std::nullopt;
  return 1.0 - static_cast<double>(correct) / static_cast<double>(n);
}

SubgroupReport subgroup_report(std::span<const PenaltySample> samples,
                               std::span<const int> predictions) {
  if (samples.size() != predictions.size()) throw ShapeError("samples and predictions differ in length");
  SubgroupReport rep{{{"pitch_side", "right_side"},
                      {"pitch_side", "left_side"},
                      {"kicker_foot", "right_foot"},
                      {"kicker_foot", "left_foot"}}};
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    const bool hit = predictions[i] == static_cast<int>(s.label);
    auto& side = rep[s.meta.pitch_side == 0 ? 0 : 1];
    auto& foot = rep[s.meta.dominant_foot == 0 ? 2 : 3];
    ++side.n;
    ++foot.n;
    side.correct += hit;
    foot.correct += hit;
  }
  return rep;
}

SubgroupReport subgroup_report(const ModelBundle& model, std::span<const PenaltySample> samples) {
  const auto pred = predict(model, samples);
  return subgroup_report(samples, pred);
}

EvalResult evaluate_predictions(std::span<const PenaltySample> samples,
                                std::span<const int> predictions, std::size_t classes) {
  if (samples.empty()) throw InvalidInputError("cannot evaluate an empty sample set");
  EvalResult r;
  std::vector<int> labels;
  labels.reserve(samples.size());
  for (const auto& s : samples) labels.push_back(s.label);
  r.confusion = confusion_from(labels, predictions, classes);
  r.report = metrics_from_confusion(r.confusion);
  r.subgroups = subgroup_report(samples, predictions);
  r.predictions.assign(predictions.begin(), predictions.end());
  return r;
}

EvalResult evaluate(const ModelBundle& model, std::span<const PenaltySample> samples) {
  if (samples.empty()) throw InvalidInputError("cannot evaluate an empty sample set");
  const auto pred = predict(model, samples);
  return evaluate_predictions(samples, pred, model.options.classes);
}

bool has_gk_annotations(std::span<const PenaltySample> samples) {
  for (const auto& s : samples)
    if (!s.gk_direction) return false;
  return !samples.empty();
}

EvalResult gk_baseline(std::span<const PenaltySample> samples, std::size_t classes) {
  std::vector<int> pred;
  std::string missing;
  std::size_t n_missing = 0;
  for (const auto& s : samples) {
    if (!s.gk_direction) {
      if (n_missing < 10) missing += (missing.empty() ? "" : ", ") + s.id;
      ++n_missing;
      continue;
    }
    pred.push_back(*s.gk_direction);
  }
  if (n_missing > 0) {
    throw DataError(std::to_string(n_missing) + " sample(s) lack a goalkeeper direction: " + missing +
                    (n_missing > 10 ? ", ..." : ""));
  }
  return evaluate_predictions(samples, pred, classes);
}

MetricSummary summarize_folds(std::span<const MetricReport> folds) {
  MetricSummary s;
  s.folds = folds.size();
  if (folds.empty()) return s;
  auto stat = [&](double MetricReport::*field, double& mean, double& sd) {
    double sum = 0.0;
    for (const auto& f : folds) sum += f.*field;
    mean = sum / static_cast<double>(folds.size());
    if (folds.size() < 2) {
      sd = 0.0;
      return;
    }
    double sq = 0.0;
    for (const auto& f : folds) sq += (f.*field - mean) * (f.*field - mean);
    sd = std::sqrt(sq / static_cast<double>(folds.size() - 1));
  };
  stat(&MetricReport::accuracy, s.accuracy, s.accuracy_std);
  stat(&MetricReport::macro_precision, s.macro_precision, s.macro_precision_std);
  stat(&MetricReport::macro_recall, s.macro_recall, s.macro_recall_std);
  stat(&MetricReport::macro_f1, s.macro_f1, s.macro_f1_std);
  return s;
}

}  // namespace mambakick
