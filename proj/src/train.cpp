#include "mambakick/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "mambakick/rng.hpp"

namespace mambakick {

Schedule make_schedule(const TrainConfig& config, std::size_t train_size) {
  Schedule s;
  s.steps_per_epoch = static_cast<std::int64_t>(train_size / config.batch_size);
  if (s.steps_per_epoch == 0) {
    throw ConfigError("training set of " + std::to_string(train_size) +
                      " samples is smaller than one batch of " + std::to_string(config.batch_size));
  }
  s.total_steps = static_cast<std::int64_t>(config.max_epochs) * s.steps_per_epoch;
  s.warmup_steps = std::llround(config.warmup_frac * static_cast<double>(s.total_steps));
  s.warmup_steps = std::min(s.warmup_steps, s.total_steps - 1);
  return s;
}

LossConfig make_loss_config(const TrainConfig& config, std::span<const PenaltySample> train,
                            std::size_t classes) {
  LossConfig lc;
  lc.label_smoothing = config.label_smoothing;
  lc.normalization = config.loss_normalization;
  if (config.class_weighting == ClassWeighting::inverse_frequency) {
    std::vector<int> labels;
    labels.reserve(train.size());
    for (const auto& s : train) labels.push_back(s.label);
    lc.class_weights = compute_class_weights(labels, classes);
  }
  return lc;
}

Matrix eval_logits(const ModelBundle& model, std::span<const PenaltySample> samples) {
  constexpr std::size_t kChunk = 64;
  Matrix out(samples.size(), model.options.classes);
  for (std::size_t at = 0; at < samples.size(); at += kChunk) {
    const auto part = samples.subspan(at, std::min(kChunk, samples.size() - at));
    const Matrix logits = model_forward(model, make_batch(part), Mode::eval, nullptr);
    for (std::size_t i = 0; i < part.size(); ++i) {
      std::copy(logits.row(i).begin(), logits.row(i).end(), out.row(at + i).begin());
    }
  }
  return out;
}

namespace {

void zero(ParamList& list) {
  for (auto& p : list) std::fill(p.values.begin(), p.values.end(), 0.0);
}

}  // namespace

FoldTrainResult train_model(std::span<const PenaltySample> train, std::span<const PenaltySample> val,
                            const TrainConfig& config, std::size_t classes, std::uint64_t seed,
                            BranchSet branches, const EpochCallback& on_epoch) {
  config.validate();
  if (train.empty() || val.empty()) throw InvalidInputError("training and validation sets must be non-empty");
  const std::size_t dim = train.front().run.dim;
  for (const auto& s : train) {
    if (s.run.dim != dim || s.kick.dim != dim) throw DimensionMismatchError("embedding width varies", s.id);
  }

  FoldTrainResult result;
  result.schedule = make_schedule(config, train.size());
  const Schedule& sched = result.schedule;
  const LossConfig loss_cfg = make_loss_config(config, train, classes);
  result.class_weights = loss_cfg.class_weights;

  Rng init_rng(derive_seed(seed, 0));
  Rng order_rng(derive_seed(seed, 1));
  Rng aug_rng(derive_seed(seed, 2));
  Rng dropout_rng(derive_seed(seed, 3));

  ModelBundle model(config.model_options(dim, classes, branches));
  model.init(init_rng);
  ModelBundle grad = zeros_like(model);
  ParamList params, grads;
  model.collect("", params);
  grad.collect("", grads);
  OptimizerState opt = make_optimizer_state(params);
  const AdamWHyper hyper = config.adamw();

  std::vector<int> val_labels;
  for (const auto& s : val) val_labels.push_back(s.label);

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto B = config.batch_size;

  double best_acc = -1.0;
  std::size_t since_best = 0;
  ModelBundle best_model = model;
  OptimizerState best_opt = opt;
  std::int64_t step = 0;
  ModelCache cache;
  std::vector<AugmentedSample> batch_samples;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    order_rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    double lr = 0.0;
    for (std::int64_t b = 0; b < sched.steps_per_epoch; ++b) {
      ++step;
      batch_samples.clear();
      for (std::size_t j = 0; j < B; ++j) {
        const auto& s = train[order[static_cast<std::size_t>(b) * B + j]];
        batch_samples.push_back(config.augment_enabled ? augment(s, config.augment, aug_rng)
                                                       : passthrough(s));
      }
      const ModelBatch batch = make_batch(batch_samples);
      const Matrix logits = model_forward(model, batch, Mode::train, &dropout_rng, &cache);
      const double loss = weighted_smoothed_ce(logits, batch.labels, loss_cfg);
      if (!std::isfinite(loss)) throw DivergenceError("non-finite training loss", step);
      zero(grads);
      model_backward(model, cache, loss_backward(logits, batch.labels, loss_cfg), grad);
      const ClipResult clip = clip_gradients(grads, config.clip_norm, step);
      lr = cosine_warmup_lr(step, sched.warmup_steps, sched.total_steps, config.lr);
      adamw_step(params, grads, opt, lr, hyper);
      update_running_stats(model.fusion, cache.fusion);
      for (const auto& p : params) {
        for (double v : p.values) {
          if (!std::isfinite(v)) throw DivergenceError("non-finite parameter in " + p.name, step);
        }
      }
      result.steps.push_back({step, epoch, lr, loss, clip.norm_before, clip.norm_after});
      loss_sum += loss;
    }

    const Matrix val_out = eval_logits(model, val);
    const auto pred = argmax_rows(val_out);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == val_labels[i];
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(sched.steps_per_epoch);
    rec.val_loss = weighted_smoothed_ce(val_out, val_labels, loss_cfg);
    rec.val_accuracy = static_cast<double>(correct) / static_cast<double>(val.size());
    rec.lr = lr;
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (rec.val_accuracy > best_acc) {
      best_acc = rec.val_accuracy;
      since_best = 0;
      best_model = model;
      best_opt = opt;
      result.best_epoch = epoch;
    } else {
      ++since_best;
    }
    result.stopped_epoch = epoch;
    if (since_best >= config.patience) {
      result.early_stopped = true;
      break;
    }
  }
  result.model = std::move(best_model);
  result.optimizer = std::move(best_opt);
  return result;
}

std::uint64_t fold_seed(std::uint64_t base, std::size_t fold) {
  return derive_seed(base + static_cast<std::uint64_t>(fold), 0x5eed);
}

CrossValResult cross_validate(const Dataset& dataset, const TrainConfig& config,
                              const CrossValOptions& options) {
  config.validate();
  const std::size_t classes = dataset.manifest.classes;
  CrossValResult cv;
  cv.classes = classes;
  cv.split = stratified_kfold(dataset.samples, classes, config.folds, config.seed);
  const std::size_t k = config.folds;
  cv.folds.resize(k);

  auto run_fold = [&](std::size_t f) {
    FoldOutcome& out = cv.folds[f];
    out.fold = f;
    out.seed = fold_seed(config.seed, f);
    out.val_indices = cv.split.members(f);
    std::vector<PenaltySample> train, val;
    for (std::size_t i : cv.split.complement(f)) train.push_back(dataset.samples[i]);
    for (std::size_t i : out.val_indices) val.push_back(dataset.samples[i]);
    EpochCallback cb;
    if (options.on_epoch) cb = [&, f](const EpochRecord& r) { options.on_epoch(f, r); };
    out.train = train_model(train, val, config, classes, out.seed, options.branches, cb);
    out.eval = evaluate(out.train.model, val);
  };

  const std::size_t jobs = std::max<std::size_t>(1, std::min(options.jobs, k));
  if (jobs == 1) {
    for (std::size_t f = 0; f < k; ++f) {
      run_fold(f);
      if (options.on_fold) options.on_fold(cv.folds[f]);
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::mutex mu;
    std::exception_ptr failure;
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < jobs; ++w) {
      workers.emplace_back([&] {
        for (;;) {
          const std::size_t f = next.fetch_add(1);
          if (f >= k) return;
          {
            std::lock_guard lock(mu);
            if (failure) return;
          }
          try {
            run_fold(f);
          } catch (...) {
            std::lock_guard lock(mu);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
    for (auto& t : workers) t.join();
    if (failure) std::rethrow_exception(failure);
    if (options.on_fold)
      for (const auto& f : cv.folds) options.on_fold(f);
  }

  std::vector<MetricReport> reports;
  cv.pooled = ConfusionMatrix(classes);
  cv.predictions.assign(dataset.samples.size(), -1);
  for (const auto& f : cv.folds) {
    reports.push_back(f.eval.report);
    cv.pooled.merge(f.eval.confusion);
    for (std::size_t j = 0; j < f.val_indices.size(); ++j) {
      cv.predictions[f.val_indices[j]] = f.eval.predictions[j];
    }
  }
  cv.summary = summarize_folds(reports);
  cv.pooled_report = metrics_from_confusion(cv.pooled);
  cv.subgroups = subgroup_report(dataset.samples, cv.predictions);
  if (has_gk_annotations(dataset.samples)) cv.gk = gk_baseline(dataset.samples, classes);
  return cv;
}

std::vector<BranchSet> default_ablation_rows() {
  return {{true, false, false}, {true, true, false}, {true, true, true}};
}

BranchSet parse_branch_set(const std::string& text) {
  BranchSet b{false, false, false};
  std::string spec = text;
  std::replace(spec.begin(), spec.end(), '+', ',');
  std::stringstream ss(spec);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok.erase(0, tok.find_first_not_of(" \t"));
    tok.erase(tok.find_last_not_of(" \t") + 1);
    if (tok == "run") {
      b.run = true;
    } else if (tok == "kick") {
      b.kick = true;
    } else if (tok == "meta") {
      b.meta = true;
    } else if (!tok.empty()) {
      throw ConfigError("unknown branch '" + tok + "' (expected run, kick or meta)");
    }
  }
  return b;
}

void validate_ablation_rows(std::span<const BranchSet> rows) {
  if (rows.empty()) throw ConfigError("ablation needs at least one branch set");
  for (const auto& r : rows) {
    if (!r.run && !r.kick && !r.meta) throw ConfigError("empty branch set");
    if (!r.run) throw ConfigError("branch set '" + r.label() + "' omits the mandatory run branch");
  }
}

std::vector<AblationRow> run_ablation(const Dataset& dataset, const TrainConfig& config,
                                      std::span<const BranchSet> rows, std::size_t jobs,
                                      const std::function<void(const AblationRow&)>& on_row) {
  validate_ablation_rows(rows);
  std::vector<AblationRow> out;
  for (const auto& branches : rows) {
    CrossValOptions opts;
    opts.branches = branches;
    opts.jobs = jobs;
    const CrossValResult cv = cross_validate(dataset, config, opts);
    out.push_back({branches, cv.summary, cv.pooled_report});
    if (on_row) on_row(out.back());
  }
  return out;
}

}  // namespace mambakick
