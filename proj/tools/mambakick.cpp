// mambakick: command-line driver for dataset generation, training,
// cross-validation, ablation and reporting.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "mambakick/checkpoint.hpp"
#include "mambakick/config.hpp"
#include "mambakick/dataset.hpp"
#include "mambakick/metrics.hpp"
#include "mambakick/report.hpp"
#include "mambakick/train.hpp"

namespace fs = std::filesystem;
using namespace mambakick;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfigExit = 2, kDataExit = 3, kDivergenceExit = 4 };

int exit_code_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::config: return kConfigExit;
    case ErrorKind::data: return kDataExit;
    case ErrorKind::divergence: return kDivergenceExit;
    default: return kFailure;
  }
}

bool quiet = false;

void log(const std::string& msg) {
  if (!quiet) std::cerr << msg << '\n';
}

Dataset load_for(const std::string& path, int classes) {
  Dataset ds = load_dataset(path);
  if (classes != 2 && classes != 3) throw ConfigError("--classes must be 2 or 3");
  if (classes == 2 && ds.manifest.classes == 3) {
    const auto before = ds.samples.size();
    ds = binarize(ds);
    log("binarized: " + std::to_string(before) + " -> " + std::to_string(ds.samples.size()) +
        " samples (center removed)");
  } else if (classes == 3 && ds.manifest.classes == 2) {
    throw DataError("dataset is two-class; cannot evaluate in the three-class space");
  }
  return ds;
}

char fmt_buf[64];
const char* pct(double v) {
  std::snprintf(fmt_buf, sizeof fmt_buf, "%.1f", 100.0 * v);
  return fmt_buf;
}

// --- generate -------------------------------------------------------------

struct GenerateArgs {
  std::string out;
  std::string sidecar;
  SyntheticConfig cfg;
};

int cmd_generate(const GenerateArgs& a) {
  const Dataset ds = generate_synthetic(a.cfg);
  save_dataset(a.out, ds);
  const std::string summary = manifest_sidecar(ds);
  if (!a.sidecar.empty()) write_text_file(a.sidecar, summary);
  std::cout << "wrote " << a.out << "\n" << summary;
  return kOk;
}

// --- train / evaluate -------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string config;
  std::string out_dir;
  int classes = 3;
  std::size_t val_fold = 0;
};

int cmd_train(const TrainArgs& a) {
  const TrainConfig cfg = resolve_config(a.config);
  const Dataset ds = load_for(a.data, a.classes);
  const FoldSplit split = stratified_kfold(ds.samples, ds.manifest.classes, cfg.folds, cfg.seed);
  if (a.val_fold >= cfg.folds) throw ConfigError("--val-fold must be < folds");
  std::vector<PenaltySample> train, val;
  for (auto i : split.complement(a.val_fold)) train.push_back(ds.samples[i]);
  for (auto i : split.members(a.val_fold)) val.push_back(ds.samples[i]);
  log("training on " + std::to_string(train.size()) + " samples, validating on " +
      std::to_string(val.size()));
  const auto result = train_model(train, val, cfg, ds.manifest.classes, fold_seed(cfg.seed, a.val_fold),
                                  {}, [](const EpochRecord& r) {
                                    char buf[160];
                                    std::snprintf(buf, sizeof buf,
                                                  "epoch %3zu  train_loss %.4f  val_loss %.4f  val_acc %.4f  lr %.3g",
                                                  r.epoch, r.train_loss, r.val_loss, r.val_accuracy, r.lr);
                                    log(buf);
                                  });
  const fs::path dir = a.out_dir;
  fs::create_directories(dir);
  Checkpoint ck = make_checkpoint(result, cfg);
  save_checkpoint(dir / "checkpoint.bin", ck);
  write_text_file(dir / run_files::kConfig, cfg.to_text());
  write_text_file(dir / "history.tsv", history_tsv(result.history));
  write_text_file(dir / "steps.tsv", steps_tsv(result.steps));
  const EvalResult ev = evaluate(result.model, val);
  std::cout << "best epoch " << result.best_epoch << " of " << result.stopped_epoch
            << (result.early_stopped ? " (early stop)" : "") << "\n";
  std::cout << "validation accuracy " << pct(ev.report.accuracy) << "%  macro F1 "
            << pct(ev.report.macro_f1) << "%\n";
  std::cout << "checkpoint " << (dir / "checkpoint.bin").string() << "\n";
  return kOk;
}

struct EvaluateArgs {
  std::string checkpoint;
  std::string data;
  std::string out;
};

int cmd_evaluate(const EvaluateArgs& a) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const Dataset ds = load_for(a.data, static_cast<int>(ck.model.options.classes));
  if (ds.samples.empty()) throw DataError("dataset is empty");
  if (ds.manifest.dim != ck.model.options.encoder.input_dim) {
    throw DataError("dataset embedding width " + std::to_string(ds.manifest.dim) +
                    " does not match the checkpoint (" +
                    std::to_string(ck.model.options.encoder.input_dim) + ")");
  }
  const EvalResult ev = evaluate(ck.model, ds.samples);
  KeyValues kv;
  kv.set("run.classes", ck.model.options.classes);
  kv.set("run.samples", ds.samples.size());
  put_report(kv, "eval", ev.report);
  put_confusion(kv, "eval.confusion", ev.confusion);
  for (const auto& g : ev.subgroups) {
    kv.set("subgroup." + g.group + ".n", g.n);
    kv.set("subgroup." + g.group + ".correct", g.correct);
  }
  if (!a.out.empty()) kv.save(a.out);
  std::cout << "samples   " << ev.report.samples << "\n";
  std::cout << "accuracy  " << pct(ev.report.accuracy) << "%\n";
  std::cout << "precision " << pct(ev.report.macro_precision) << "%\n";
  std::cout << "recall    " << pct(ev.report.macro_recall) << "%\n";
  std::cout << "f1        " << pct(ev.report.macro_f1) << "%\n\n";
  std::cout << render_subgroup_table(kv) << "\n";
  std::cout << render_confusion_text(kv, "eval.confusion", "Confusion matrix");
  return kOk;
}

// --- crossval / ablate -------------------------------------------------------

struct CrossvalArgs {
  std::string data;
  std::string config;
  std::string out_dir;
  int classes = 3;
  std::size_t jobs = 1;
};

int cmd_crossval(const CrossvalArgs& a) {
  const TrainConfig cfg = resolve_config(a.config);
  const Dataset ds = load_for(a.data, a.classes);
  if (!has_gk_annotations(ds.samples)) {
    log("warning: goalkeeper direction missing on some samples; GK row omitted");
  }
  CrossValOptions opts;
  opts.jobs = a.jobs;
  opts.on_fold = [](const FoldOutcome& f) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "fold %2zu  acc %.4f  f1 %.4f  best epoch %zu / %zu", f.fold,
                  f.eval.report.accuracy, f.eval.report.macro_f1, f.train.best_epoch,
                  f.train.stopped_epoch);
    log(buf);
  };
  const CrossValResult cv = cross_validate(ds, cfg, opts);
  write_crossval_run(a.out_dir, ds, cfg, cv);
  const std::string text = render_text_report(a.out_dir);
  write_text_file(fs::path(a.out_dir) / run_files::kReport, text);
  std::cout << text;
  return kOk;
}

struct AblateArgs {
  std::string data;
  std::string config;
  std::string out_dir;
  std::vector<std::string> branches;
  int classes = 3;
  std::size_t jobs = 1;
  bool retrain_head = false;
};

int cmd_ablate(const AblateArgs& a) {
  TrainConfig cfg = resolve_config(a.config);
  if (a.retrain_head) cfg.ablation_mode = AblationMode::narrow;
  std::vector<BranchSet> rows;
  for (const auto& b : a.branches) rows.push_back(parse_branch_set(b));
  if (rows.empty()) rows = default_ablation_rows();
  validate_ablation_rows(rows);
  const Dataset ds = load_for(a.data, a.classes);
  const auto result = run_ablation(ds, cfg, rows, a.jobs, [](const AblationRow& r) {
    log("branches " + r.branches.label() + "  acc " + std::to_string(r.summary.accuracy));
  });
  write_ablation(a.out_dir, cfg, result, ds.manifest.classes, ds.manifest.backbone);
  const std::string text = render_ablation_table(ablation_summary(result, ds.manifest.classes, ds.manifest.backbone));
  std::cout << text;
  return kOk;
}

// --- report / inspect -------------------------------------------------------

struct ReportArgs {
  std::string run_dir;
  std::string format = "text";
};

int cmd_report(const ReportArgs& a) {
  if (!fs::is_directory(a.run_dir)) throw DataError("run directory '" + a.run_dir + "' not found");
  if (a.format == "text") {
    const std::string text = render_text_report(a.run_dir);
    write_text_file(fs::path(a.run_dir) / run_files::kReport, text);
    std::cout << text;
  } else {
    for (const auto& [name, svg] : render_svg_report(a.run_dir)) {
      write_text_file(fs::path(a.run_dir) / name, svg);
      std::cout << (fs::path(a.run_dir) / name).string() << "\n";
    }
  }
  return kOk;
}

struct InspectArgs {
  std::string data;
  std::string checkpoint;
};

int cmd_inspect(const InspectArgs& a) {
  if (a.data.empty() == a.checkpoint.empty()) throw ConfigError("give exactly one of --data or --checkpoint");
  if (!a.data.empty()) {
    const Dataset ds = load_dataset(a.data);
    std::cout << manifest_sidecar(ds);
    return kOk;
  }
  Checkpoint ck = load_checkpoint(a.checkpoint);
  const auto& o = ck.model.options;
  std::cout << "classes        " << o.classes << "\n"
            << "input_dim      " << o.encoder.input_dim << "\n"
            << "width          " << o.encoder.width << "\n"
            << "state_size     " << o.encoder.state_size << "\n"
            << "layers         " << o.encoder.num_layers << "\n"
            << "branches       " << o.branches.label() << "\n"
            << "parameters     " << ck.model.parameter_count() << "\n"
            << "optimizer_step " << ck.optimizer.step << "\n"
            << "best_epoch     " << ck.best_epoch << " of " << ck.stopped_epoch << "\n";
  std::cout << "\n" << history_tsv(ck.history);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Penalty-direction prediction from clip embeddings with selective state-space encoders"};
  app.require_subcommand(1, 1);
  app.add_flag("-q,--quiet", quiet, "Suppress progress output on stderr");

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Write a synthetic planted-signal dataset");
  g->add_option("--out", gen.out, "Output dataset file")->required();
  g->add_option("--samples", gen.cfg.num_samples, "Number of samples")->capture_default_str();
  g->add_option("--dim", gen.cfg.dim, "Embedding width D (>= 6)")->capture_default_str();
  g->add_option("--signal", gen.cfg.signal_strength, "Planted signal strength")->capture_default_str();
  g->add_option("--noise", gen.cfg.noise_std, "Isotropic noise std")->capture_default_str();
  g->add_option("--seed", gen.cfg.seed, "Random seed")->capture_default_str();
  g->add_option("--run-len", gen.cfg.run_len, "Run clips per sample")->capture_default_str();
  g->add_option("--kick-len", gen.cfg.kick_len, "Kick clips per sample")->capture_default_str();
  g->add_option("--gk-match", gen.cfg.gk_match_rate, "Goalkeeper agreement rate")->capture_default_str();
  g->add_option("--meta-sharpness", gen.cfg.metadata_sharpness, "Metadata informativeness exponent")
      ->capture_default_str();
  g->add_option("--appearance", gen.cfg.appearance_std, "Per-sample appearance offset std")
      ->capture_default_str();
  g->add_option("--backbone", gen.cfg.backbone, "Backbone name recorded in the header")->capture_default_str();
  g->add_option("--sidecar", gen.sidecar, "Also write the human-readable manifest here");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train one model, holding out one stratified fold for validation");
  t->add_option("--data", tr.data, "Dataset file")->required()->check(CLI::ExistingFile);
  t->add_option("--config", tr.config, "Config file (default: $MAMBAKICK_CONFIG or built-in)");
  t->add_option("--classes", tr.classes, "Label space (2 or 3)")->check(CLI::IsMember({2, 3}))->capture_default_str();
  t->add_option("--val-fold", tr.val_fold, "Fold used for validation")->capture_default_str();
  t->add_option("--out-dir", tr.out_dir, "Output directory")->required();

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "Score a checkpoint on a dataset");
  e->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  e->add_option("--data", ev.data, "Dataset file")->required()->check(CLI::ExistingFile);
  e->add_option("--out", ev.out, "Write metrics as key = value");

  CrossvalArgs cv;
  auto* c = app.add_subcommand("crossval", "Stratified k-fold train/evaluate with aggregate reports");
  c->add_option("--data", cv.data, "Dataset file")->required()->check(CLI::ExistingFile);
  c->add_option("--config", cv.config, "Config file (default: $MAMBAKICK_CONFIG or built-in)");
  c->add_option("--classes", cv.classes, "Label space (2 or 3)")->check(CLI::IsMember({2, 3}))->capture_default_str();
  c->add_option("--out-dir", cv.out_dir, "Run directory")->required();
  c->add_option("--jobs", cv.jobs, "Folds trained concurrently")->capture_default_str();

  AblateArgs ab;
  auto* a = app.add_subcommand("ablate", "Branch-removal ablation");
  a->add_option("--data", ab.data, "Dataset file")->required()->check(CLI::ExistingFile);
  a->add_option("--config", ab.config, "Config file (default: $MAMBAKICK_CONFIG or built-in)");
  a->add_option("--classes", ab.classes, "Label space (2 or 3)")->check(CLI::IsMember({2, 3}))->capture_default_str();
  a->add_option("--branches", ab.branches,
                "Branch set per row, e.g. --branches run --branches run,kick (default: the three standard rows)");
  a->add_option("--out-dir", ab.out_dir, "Run directory")->required();
  a->add_option("--jobs", ab.jobs, "Folds trained concurrently")->capture_default_str();
  a->add_flag("--retrain-head", ab.retrain_head, "Drop excluded branches from the fusion input instead of zeroing");

  ReportArgs rp;
  auto* r = app.add_subcommand("report", "Render tables and figures from a run directory");
  r->add_option("--run-dir", rp.run_dir, "Run directory")->required();
  r->add_option("--format", rp.format, "text or svg")->check(CLI::IsMember({"text", "svg"}))->capture_default_str();

  InspectArgs in;
  auto* i = app.add_subcommand("inspect", "Summarize a dataset or checkpoint");
  i->add_option("--data", in.data, "Dataset file");
  i->add_option("--checkpoint", in.checkpoint, "Checkpoint file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& err) {
    return app.exit(err);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return kConfigExit;
  }

  try {
    if (*g) return cmd_generate(gen);
    if (*t) return cmd_train(tr);
    if (*e) return cmd_evaluate(ev);
    if (*c) return cmd_crossval(cv);
    if (*a) return cmd_ablate(ab);
    if (*r) return cmd_report(rp);
    if (*i) return cmd_inspect(in);
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << '\n';
    return exit_code_for(err);
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kFailure;
  }
  return kFailure;
}
