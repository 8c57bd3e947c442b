#include "mambakick/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <sstream>

#include "mambakick/checkpoint.hpp"

namespace mambakick {

namespace fs = std::filesystem;

namespace {

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * v);
  return buf;
}

std::string pad_right(const std::string& s, std::size_t w) {
  return s.size() >= w ? s : s + std::string(w - s.size(), ' ');
}

std::string pad_left(const std::string& s, std::size_t w) {
  return s.size() >= w ? s : std::string(w - s.size(), ' ') + s;
}

std::string fold_dir_name(std::size_t f) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "fold_%02zu", f);
  return buf;
}

std::string titled(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

const char* group_title(const std::string& group) {
  if (group == "right_side") return "Right side";
  if (group == "left_side") return "Left side";
  if (group == "right_foot") return "Right-footed";
  if (group == "left_foot") return "Left-footed";
  return "?";
}

const char* kGroups[] = {"right_side", "left_side", "right_foot", "left_foot"};

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string history_tsv(std::span<const EpochRecord> history) {
  std::ostringstream os;
  os << "epoch\ttrain_loss\tval_loss\tval_accuracy\tlr\n";
  for (const auto& r : history) {
    os << r.epoch << '\t' << format_double(r.train_loss) << '\t' << format_double(r.val_loss) << '\t'
       << format_double(r.val_accuracy) << '\t' << format_double(r.lr) << '\n';
  }
  return os.str();
}

std::string steps_tsv(std::span<const StepRecord> steps) {
  std::ostringstream os;
  os << "step\tepoch\tlr\tloss\tgrad_norm\tclipped_norm\n";
  for (const auto& r : steps) {
    os << r.step << '\t' << r.epoch << '\t' << format_double(r.lr) << '\t' << format_double(r.loss)
       << '\t' << format_double(r.grad_norm) << '\t' << format_double(r.clipped_norm) << '\n';
  }
  return os.str();
}

void put_report(KeyValues& kv, const std::string& prefix, const MetricReport& r) {
  kv.set(prefix + ".samples", r.samples);
  kv.set(prefix + ".accuracy", r.accuracy);
  kv.set(prefix + ".precision", r.macro_precision);
  kv.set(prefix + ".recall", r.macro_recall);
  kv.set(prefix + ".f1", r.macro_f1);
  for (std::size_t k = 0; k < r.per_class.size(); ++k) {
    const std::string p = prefix + ".class" + std::to_string(k);
    kv.set(p + ".precision", r.per_class[k].precision);
    kv.set(p + ".recall", r.per_class[k].recall);
    kv.set(p + ".f1", r.per_class[k].f1);
    kv.set(p + ".support", r.per_class[k].support);
  }
}

void put_confusion(KeyValues& kv, const std::string& prefix, const ConfusionMatrix& cm) {
  kv.set(prefix + ".classes", cm.classes());
  for (std::size_t t = 0; t < cm.classes(); ++t) {
    std::string row;
    for (std::size_t p = 0; p < cm.classes(); ++p) {
      row += (p ? " " : "") + std::to_string(cm.at(t, p));
    }
    kv.set(prefix + ".row" + std::to_string(t), row);
    kv.set(prefix + ".other" + std::to_string(t), cm.other(t));
  }
}

ConfusionMatrix read_confusion(const KeyValues& kv, const std::string& prefix) {
  const auto n = static_cast<std::size_t>(kv.get_int(prefix + ".classes"));
  ConfusionMatrix cm(n);
  for (std::size_t t = 0; t < n; ++t) {
    std::istringstream row(kv.require(prefix + ".row" + std::to_string(t)));
    for (std::size_t p = 0; p < n; ++p) {
      long long c = -1;
      if (!(row >> c) || c < 0) throw DataError("malformed confusion row " + prefix);
      cm.add(static_cast<int>(t), static_cast<int>(p), static_cast<std::size_t>(c));
    }
    cm.add(static_cast<int>(t), -1,
           static_cast<std::size_t>(kv.get_int(prefix + ".other" + std::to_string(t))));
  }
  return cm;
}

KeyValues crossval_summary(const Dataset& dataset, const CrossValResult& cv) {
  KeyValues kv;
  kv.set("run.kind", "crossval");
  kv.set("run.classes", cv.classes);
  kv.set("run.samples", dataset.samples.size());
  kv.set("run.folds", cv.folds.size());
  kv.set("run.backbone", dataset.manifest.backbone);
  const auto& s = cv.summary;
  kv.set("model.accuracy", s.accuracy);
  kv.set("model.accuracy_std", s.accuracy_std);
  kv.set("model.precision", s.macro_precision);
  kv.set("model.precision_std", s.macro_precision_std);
  kv.set("model.recall", s.macro_recall);
  kv.set("model.recall_std", s.macro_recall_std);
  kv.set("model.f1", s.macro_f1);
  kv.set("model.f1_std", s.macro_f1_std);
  put_report(kv, "pooled", cv.pooled_report);
  put_confusion(kv, "pooled.confusion", cv.pooled);
  for (const auto& g : cv.subgroups) {
    kv.set("subgroup." + g.group + ".n", g.n);
    kv.set("subgroup." + g.group + ".correct", g.correct);
  }
  kv.set("gk.present", cv.gk.has_value());
  if (cv.gk) {
    put_report(kv, "gk", cv.gk->report);
    put_confusion(kv, "gk.confusion", cv.gk->confusion);
  }
  for (const auto& f : cv.folds) {
    const std::string p = "fold" + std::to_string(f.fold);
    kv.set(p + ".samples", f.eval.report.samples);
    kv.set(p + ".accuracy", f.eval.report.accuracy);
    kv.set(p + ".f1", f.eval.report.macro_f1);
    kv.set(p + ".best_epoch", f.train.best_epoch);
    kv.set(p + ".stopped_epoch", f.train.stopped_epoch);
  }
  return kv;
}

KeyValues ablation_summary(std::span<const AblationRow> rows, std::size_t classes,
                           const std::string& backbone) {
  KeyValues kv;
  kv.set("run.kind", "ablation");
  kv.set("run.classes", classes);
  kv.set("run.backbone", backbone);
  kv.set("ablation.rows", rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::string p = "ablation.row" + std::to_string(i);
    const auto& r = rows[i];
    kv.set(p + ".branches", r.branches.label());
    kv.set(p + ".accuracy", r.summary.accuracy);
    kv.set(p + ".precision", r.summary.macro_precision);
    kv.set(p + ".recall", r.summary.macro_recall);
    kv.set(p + ".f1", r.summary.macro_f1);
    kv.set(p + ".accuracy_std", r.summary.accuracy_std);
  }
  return kv;
}

void write_crossval_run(const fs::path& dir, const Dataset& dataset, const TrainConfig& config,
                        const CrossValResult& cv) {
  fs::create_directories(dir);
  write_text_file(dir / run_files::kConfig, config.to_text());
  write_text_file(dir / run_files::kDataset, manifest_sidecar(dataset));
  for (const auto& f : cv.folds) {
    const fs::path fd = dir / "folds" / fold_dir_name(f.fold);
    fs::create_directories(fd);
    Checkpoint ck = make_checkpoint(f.train, config);
    save_checkpoint(fd / "checkpoint.bin", ck);
    write_text_file(fd / "history.tsv", history_tsv(f.train.history));
    write_text_file(fd / "steps.tsv", steps_tsv(f.train.steps));
    KeyValues m;
    m.set("fold", f.fold);
    m.set("seed", std::to_string(f.seed));
    m.set("best_epoch", f.train.best_epoch);
    m.set("stopped_epoch", f.train.stopped_epoch);
    m.set("early_stopped", f.train.early_stopped);
    put_report(m, "eval", f.eval.report);
    put_confusion(m, "eval.confusion", f.eval.confusion);
    m.save(fd / "metrics.kv");
  }
  std::ostringstream pred;
  pred << "id\tfold\tlabel\tprediction\tgk\n";
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    const auto& s = dataset.samples[i];
    pred << s.id << '\t' << cv.split.fold_of[i] << '\t' << int(s.label) << '\t' << cv.predictions[i]
         << '\t' << (s.gk_direction ? std::to_string(*s.gk_direction) : "-") << '\n';
  }
  write_text_file(dir / run_files::kPredictions, pred.str());
  crossval_summary(dataset, cv).save(dir / run_files::kSummary);
}

void write_ablation(const fs::path& dir, const TrainConfig& config, std::span<const AblationRow> rows,
                    std::size_t classes, const std::string& backbone) {
  fs::create_directories(dir);
  if (!fs::exists(dir / run_files::kConfig)) write_text_file(dir / run_files::kConfig, config.to_text());
  ablation_summary(rows, classes, backbone).save(dir / run_files::kAblation);
}

std::string render_results_table(const KeyValues& s) {
  const auto classes = s.get_int("run.classes");
  std::ostringstream os;
  os << (classes == 2 ? "Two-class" : "Three-class") << " results, " << s.require("run.folds")
     << "-fold cross-validation (fold mean), " << s.require("run.samples") << " samples\n";
  const std::size_t w = 34;
  os << pad_right("Method", w) << pad_left("Acc.", 8) << pad_left("P", 8) << pad_left("R", 8)
     << pad_left("F1", 8) << '\n';
  os << std::string(w + 32, '-') << '\n';
  if (s.get("gk.present").value_or("false") == "true") {
    os << pad_right("GK", w) << pad_left(pct(s.get_double("gk.accuracy")), 8)
       << pad_left(pct(s.get_double("gk.precision")), 8) << pad_left(pct(s.get_double("gk.recall")), 8)
       << pad_left(pct(s.get_double("gk.f1")), 8) << '\n';
  }
  os << pad_right("MambaKick (" + s.require("run.backbone") + ")", w)
     << pad_left(pct(s.get_double("model.accuracy")), 8) << pad_left(pct(s.get_double("model.precision")), 8)
     << pad_left(pct(s.get_double("model.recall")), 8) << pad_left(pct(s.get_double("model.f1")), 8)
     << '\n';
  os << pad_right("  pooled over folds", w) << pad_left(pct(s.get_double("pooled.accuracy")), 8)
     << pad_left(pct(s.get_double("pooled.precision")), 8)
     << pad_left(pct(s.get_double("pooled.recall")), 8) << pad_left(pct(s.get_double("pooled.f1")), 8)
     << '\n';
  return os.str();
}

std::string render_ablation_table(const KeyValues& a) {
  std::ostringstream os;
  const auto classes = a.get_int("run.classes");
  os << "Branch ablation (" << (classes == 2 ? "two" : "three") << "-class, fold mean)\n";
  os << pad_right("Running", 10) << pad_right("Kicking", 10) << pad_right("Metadata", 10)
     << pad_left("Acc.", 8) << pad_left("P", 8) << pad_left("R", 8) << pad_left("F1", 8) << '\n';
  os << std::string(62, '-') << '\n';
  const auto rows = a.get_int("ablation.rows");
  for (std::int64_t i = 0; i < rows; ++i) {
    const std::string p = "ablation.row" + std::to_string(i);
    const BranchSet b = parse_branch_set(a.require(p + ".branches"));
    os << pad_right(b.run ? "x" : "", 10) << pad_right(b.kick ? "x" : "", 10)
       << pad_right(b.meta ? "x" : "", 10) << pad_left(pct(a.get_double(p + ".accuracy")), 8)
       << pad_left(pct(a.get_double(p + ".precision")), 8) << pad_left(pct(a.get_double(p + ".recall")), 8)
       << pad_left(pct(a.get_double(p + ".f1")), 8) << '\n';
  }
  return os.str();
}

std::string render_subgroup_table(const KeyValues& s) {
  std::ostringstream os;
  os << "Accuracy by metadata subgroup (pooled out-of-fold predictions)\n";
  os << pad_right("Metadata", 14) << pad_right("Group", 16) << pad_left("n", 6) << pad_left("Acc. (%)", 10)
     << pad_left("Error (%)", 11) << '\n';
  os << std::string(57, '-') << '\n';
  for (const char* g : kGroups) {
    const std::string p = std::string("subgroup.") + g;
    const auto n = s.get_int(p + ".n");
    const auto c = s.get_int(p + ".correct");
    const std::string meta = std::string(g).find("side") != std::string::npos ? "Pitch side" : "Kicker foot";
    os << pad_right(meta, 14) << pad_right(group_title(g), 16) << pad_left(std::to_string(n), 6);
    if (n == 0) {
      os << pad_left("absent", 10) << pad_left("absent", 11) << '\n';
    } else {
      const double acc = static_cast<double>(c) / static_cast<double>(n);
      os << pad_left(pct(acc), 10) << pad_left(pct(1.0 - acc), 11) << '\n';
    }
  }
  return os.str();
}

std::string render_confusion_text(const KeyValues& s, const std::string& prefix,
                                  const std::string& title) {
  const ConfusionMatrix cm = read_confusion(s, prefix);
  const auto norm = cm.row_normalized();
  const std::size_t n = cm.classes();
  bool any_other = false;
  for (std::size_t t = 0; t < n; ++t) any_other = any_other || cm.other(t) > 0;
  std::ostringstream os;
  os << title << " (rows = true, columns = predicted; count / row %)\n";
  os << pad_right("", 10);
  for (std::size_t p = 0; p < n; ++p) os << pad_left(titled(class_name(p, n)), 16);
  if (any_other) os << pad_left("other", 16);
  os << '\n';
  for (std::size_t t = 0; t < n; ++t) {
    os << pad_right(titled(class_name(t, n)), 10);
    for (std::size_t p = 0; p < n; ++p) {
      os << pad_left(std::to_string(cm.at(t, p)) + " / " + pct(norm[t * n + p]), 16);
    }
    if (any_other) os << pad_left(std::to_string(cm.other(t)), 16);
    os << '\n';
  }
  return os.str();
}

std::string render_text_report(const fs::path& dir) {
  const bool has_summary = fs::exists(dir / run_files::kSummary);
  const bool has_ablation = fs::exists(dir / run_files::kAblation);
  if (!has_summary && !has_ablation) {
    throw DataError("'" + dir.string() + "' is not a completed run directory (no " +
                    run_files::kSummary + " or " + run_files::kAblation + ")");
  }
  std::ostringstream os;
  if (has_summary) {
    const KeyValues s = KeyValues::load(dir / run_files::kSummary);
    os << render_results_table(s) << '\n';
    os << render_subgroup_table(s) << '\n';
    os << render_confusion_text(s, "pooled.confusion", "Model confusion matrix") << '\n';
    if (s.get("gk.present").value_or("false") == "true") {
      os << render_confusion_text(s, "gk.confusion", "Goalkeeper confusion matrix") << '\n';
    }
  }
  if (has_ablation) os << render_ablation_table(KeyValues::load(dir / run_files::kAblation)) << '\n';
  return os.str();
}

std::string confusion_svg(const ConfusionMatrix& cm, const std::string& title) {
  const std::size_t n = cm.classes();
  const auto norm = cm.row_normalized();
  const int cell = 110, left = 110, top = 70;
  const int width = left + static_cast<int>(n) * cell + 30;
  const int height = top + static_cast<int>(n) * cell + 60;
  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" viewBox=\"0 0 " << width << ' ' << height << "\" font-family=\"sans-serif\">\n";
  os << "  <title>" << xml_escape(title) << "</title>\n";
  os << "  <rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
  os << "  <text x=\"" << width / 2 << "\" y=\"28\" text-anchor=\"middle\" font-size=\"16\">"
     << xml_escape(title) << "</text>\n";
  os << "  <text x=\"" << left + static_cast<int>(n) * cell / 2 << "\" y=\"" << height - 14
     << "\" text-anchor=\"middle\" font-size=\"13\">Predicted</text>\n";
  os << "  <text x=\"18\" y=\"" << top + static_cast<int>(n) * cell / 2
     << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 18 "
     << top + static_cast<int>(n) * cell / 2 << ")\">True</text>\n";
  for (std::size_t p = 0; p < n; ++p) {
    os << "  <text x=\"" << left + static_cast<int>(p) * cell + cell / 2 << "\" y=\"" << top - 8
       << "\" text-anchor=\"middle\" font-size=\"13\">" << titled(class_name(p, n)) << "</text>\n";
  }
  for (std::size_t t = 0; t < n; ++t) {
    const int y = top + static_cast<int>(t) * cell;
    os << "  <text x=\"" << left - 8 << "\" y=\"" << y + cell / 2 + 4
       << "\" text-anchor=\"end\" font-size=\"13\">" << titled(class_name(t, n)) << "</text>\n";
    for (std::size_t p = 0; p < n; ++p) {
      const int x = left + static_cast<int>(p) * cell;
      const double v = norm[t * n + p];
      const int shade = static_cast<int>(std::lround(255.0 - 200.0 * v));
      char fill[16];
      std::snprintf(fill, sizeof fill, "#%02x%02x%02x", shade, shade, 255);
      const char* ink = v > 0.55 ? "white" : "black";
      os << "  <rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell << "\" height=\"" << cell
         << "\" fill=\"" << fill << "\" stroke=\"#444444\"/>\n";
      os << "  <text x=\"" << x + cell / 2 << "\" y=\"" << y + cell / 2 - 4
         << "\" text-anchor=\"middle\" font-size=\"16\" fill=\"" << ink << "\">" << cm.at(t, p)
         << "</text>\n";
      os << "  <text x=\"" << x + cell / 2 << "\" y=\"" << y + cell / 2 + 16
         << "\" text-anchor=\"middle\" font-size=\"12\" fill=\"" << ink << "\">" << pct(v)
         << "%</text>\n";
    }
  }
  os << "</svg>\n";
  return os.str();
}

std::string subgroup_svg(const KeyValues& s) {
  const int bar = 300, row = 40, left = 130, top = 50;
  const int width = left + bar + 120;
  const int height = top + 4 * row + 40;
  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" viewBox=\"0 0 " << width << ' ' << height << "\" font-family=\"sans-serif\">\n";
  os << "  <title>Accuracy and error by subgroup</title>\n";
  os << "  <rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
  os << "  <text x=\"" << width / 2
     << "\" y=\"26\" text-anchor=\"middle\" font-size=\"16\">Accuracy and error by subgroup</text>\n";
  int i = 0;
  for (const char* g : kGroups) {
    const std::string p = std::string("subgroup.") + g;
    const auto n = s.get_int(p + ".n");
    const auto c = s.get_int(p + ".correct");
    const int y = top + i * row;
    os << "  <text x=\"" << left - 8 << "\" y=\"" << y + 20 << "\" text-anchor=\"end\" font-size=\"13\">"
       << group_title(g) << "</text>\n";
    if (n == 0) {
      os << "  <text x=\"" << left << "\" y=\"" << y + 20 << "\" font-size=\"12\">absent</text>\n";
    } else {
      const double acc = static_cast<double>(c) / static_cast<double>(n);
      const int w_acc = static_cast<int>(std::lround(acc * bar));
      os << "  <rect x=\"" << left << "\" y=\"" << y + 6 << "\" width=\"" << w_acc
         << "\" height=\"22\" fill=\"#4c72b0\"/>\n";
      os << "  <rect x=\"" << left + w_acc << "\" y=\"" << y + 6 << "\" width=\"" << bar - w_acc
         << "\" height=\"22\" fill=\"#dd8452\"/>\n";
      os << "  <text x=\"" << left + bar + 8 << "\" y=\"" << y + 22 << "\" font-size=\"12\">" << pct(acc)
         << "% (n=" << n << ")</text>\n";
    }
    ++i;
  }
  os << "  <rect x=\"" << left << "\" y=\"" << height - 28 << "\" width=\"12\" height=\"12\" fill=\"#4c72b0\"/>\n";
  os << "  <text x=\"" << left + 18 << "\" y=\"" << height - 18 << "\" font-size=\"12\">accuracy</text>\n";
  os << "  <rect x=\"" << left + 100 << "\" y=\"" << height - 28
     << "\" width=\"12\" height=\"12\" fill=\"#dd8452\"/>\n";
  os << "  <text x=\"" << left + 118 << "\" y=\"" << height - 18 << "\" font-size=\"12\">error</text>\n";
  os << "</svg>\n";
  return os.str();
}

std::map<std::string, std::string> render_svg_report(const fs::path& dir) {
  if (!fs::exists(dir / run_files::kSummary)) {
    throw DataError("'" + dir.string() + "' is not a completed crossval directory (no " +
                    run_files::kSummary + ")");
  }
  const KeyValues s = KeyValues::load(dir / run_files::kSummary);
  std::map<std::string, std::string> out;
  out["confusion_model.svg"] = confusion_svg(read_confusion(s, "pooled.confusion"), "MambaKick");
  if (s.get("gk.present").value_or("false") == "true") {
    out["confusion_gk.svg"] = confusion_svg(read_confusion(s, "gk.confusion"), "Goalkeeper");
  }
  out["subgroups.svg"] = subgroup_svg(s);
  return out;
}

}  // namespace mambakick
