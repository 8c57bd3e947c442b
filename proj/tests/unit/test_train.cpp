#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "mambakick/checkpoint.hpp"
#include "mambakick/rng.hpp"
#include "mambakick/train.hpp"

using namespace mambakick;

namespace {

Dataset tiny_dataset(std::size_t n = 60, std::uint64_t seed = 4) {
  SyntheticConfig c;
  c.num_samples = n;
  c.dim = 6;
  c.run_len = 3;
  c.kick_len = 2;
  c.seed = seed;
  return generate_synthetic(c);
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.d_model = 8;
  c.state_size = 4;
  c.num_layers = 1;
  c.meta_dim = 4;
  c.fusion_hidden = 8;
  c.max_epochs = 4;
  c.patience = 10;
  c.folds = 3;
  return c;
}

std::vector<PenaltySample> slice(const Dataset& ds, std::size_t from, std::size_t to) {
  return {ds.samples.begin() + static_cast<std::ptrdiff_t>(from),
          ds.samples.begin() + static_cast<std::ptrdiff_t>(to)};
}

}  // namespace

TEST_SUITE("training") {
  TEST_CASE("schedule sizes") {
    TrainConfig c;
    const Schedule s = make_schedule(c, 560);
    CHECK(s.steps_per_epoch == 112);
    CHECK(s.total_steps == 60 * 112);
    CHECK(s.warmup_steps == 336);
    c.max_epochs = 1;
    c.warmup_frac = 0.9;
    const Schedule small = make_schedule(c, 5);
    CHECK(small.total_steps == 1);
    CHECK(small.warmup_steps == 0);
  }

  TEST_CASE("frozen model stops after patience") {
    const Dataset ds = tiny_dataset();
    TrainConfig c = tiny_config();
    c.lr = 0.0;
    c.bn_momentum = 0.0;
    c.max_epochs = 30;
    c.patience = 3;
    const auto r = train_model(slice(ds, 0, 45), slice(ds, 45, 60), c, 3, 1);
    CHECK(r.early_stopped);
    CHECK(r.stopped_epoch == 4);
    CHECK(r.best_epoch == 1);
    CHECK(r.history.size() == 4);
  }

  TEST_CASE("same seed gives identical logs") {
    const Dataset ds = tiny_dataset();
    const TrainConfig c = tiny_config();
    const auto a = train_model(slice(ds, 0, 45), slice(ds, 45, 60), c, 3, 9);
    const auto b = train_model(slice(ds, 0, 45), slice(ds, 45, 60), c, 3, 9);
    CHECK(a.history == b.history);
    CHECK(a.steps == b.steps);
    CHECK(a.optimizer == b.optimizer);
    const auto other = train_model(slice(ds, 0, 45), slice(ds, 45, 60), c, 3, 10);
    CHECK_FALSE(other.steps == a.steps);
  }

  TEST_CASE("recipe conformance") {
    const Dataset ds = tiny_dataset();
    TrainConfig c = tiny_config();
    c.lr = 0.05;  // large enough that clipping engages
    c.max_epochs = 3;
    const auto r = train_model(slice(ds, 0, 47), slice(ds, 47, 60), c, 3, 2);
    CHECK(r.schedule.steps_per_epoch == 9);
    REQUIRE(r.steps.size() == static_cast<std::size_t>(r.schedule.total_steps));
    bool clipped = false;
    for (const auto& s : r.steps) {
      CHECK(s.lr == cosine_warmup_lr(s.step, r.schedule.warmup_steps, r.schedule.total_steps, c.lr));
      CHECK(s.clipped_norm <= 1.0 + 1e-9);
      clipped = clipped || s.grad_norm > 1.0;
    }
    CHECK(clipped);
    for (const auto& e : r.history) {
      CHECK(std::isfinite(e.train_loss));
      CHECK(e.val_accuracy >= 0.0);
    }
  }

  TEST_CASE("loss config") {
    const Dataset ds = tiny_dataset(30);
    TrainConfig c;
    const auto cfg = make_loss_config(c, ds.samples, 3);
    CHECK(cfg.class_weights == compute_class_weights(ds.labels(), 3));
    c.class_weighting = ClassWeighting::none;
    CHECK(make_loss_config(c, ds.samples, 3).class_weights.empty());
  }

  TEST_CASE("fold seeds are distinct") {
    std::set<std::uint64_t> seeds;
    for (std::size_t f = 0; f < 10; ++f) seeds.insert(fold_seed(0, f));
    CHECK(seeds.size() == 10);
    CHECK(fold_seed(3, 1) == fold_seed(3, 1));
  }

  TEST_CASE("cross validation covers every sample once") {
    const Dataset ds = tiny_dataset(45);
    TrainConfig c = tiny_config();
    c.max_epochs = 1;
    const auto cv = cross_validate(ds, c);
    CHECK(cv.folds.size() == 3);
    CHECK(cv.pooled.total() == 45);
    CHECK(cv.predictions.size() == 45);
    std::set<std::size_t> seen;
    for (const auto& f : cv.folds) seen.insert(f.val_indices.begin(), f.val_indices.end());
    CHECK(seen.size() == 45);
    CHECK(cv.gk.has_value());

    CrossValOptions parallel;
    parallel.jobs = 2;
    const auto cv2 = cross_validate(ds, c, parallel);
    CHECK(cv2.predictions == cv.predictions);
    CHECK(cv2.summary.accuracy == cv.summary.accuracy);
  }

  TEST_CASE("branch sets") {
    CHECK(parse_branch_set("run,kick") == BranchSet{true, true, false});
    CHECK(parse_branch_set("run, meta").label() == "run+meta");
    CHECK(parse_branch_set("run+kick+meta") == BranchSet{});
    CHECK_THROWS_AS(parse_branch_set("run,legs"), ConfigError);
    const std::vector<BranchSet> kick_only{parse_branch_set("kick")};
    CHECK_THROWS_AS(validate_ablation_rows(kick_only), ConfigError);
    const std::vector<BranchSet> none{parse_branch_set("")};
    CHECK_THROWS_AS(validate_ablation_rows(none), ConfigError);
    const auto rows = default_ablation_rows();
    REQUIRE(rows.size() == 3);
    CHECK(rows[0] == BranchSet{true, false, false});
    CHECK(rows[1] == BranchSet{true, true, false});
    CHECK(rows[2] == BranchSet{true, true, true});
  }

  TEST_CASE("zeroed branches leave the model output independent of them") {
    const Dataset ds = tiny_dataset(10);
    TrainConfig c = tiny_config();
    ModelBundle m(c.model_options(6, 3, BranchSet{true, false, false}));
    Rng rng(1);
    m.init(rng);
    auto samples = slice(ds, 0, 4);
    const Matrix a = model_forward(m, make_batch(std::span<const PenaltySample>(samples)), Mode::eval, nullptr);
    for (auto& s : samples) {
      for (auto& v : s.kick.data) v += 3.0f;
      s.meta.dominant_foot ^= 1;
    }
    const Matrix b = model_forward(m, make_batch(std::span<const PenaltySample>(samples)), Mode::eval, nullptr);
    CHECK(a.values() == b.values());

    c.ablation_mode = AblationMode::narrow;
    const auto narrow = c.model_options(6, 3, BranchSet{true, false, false});
    CHECK(narrow.fusion_input_dim() == 8);
  }
}

TEST_SUITE("checkpoint") {
  TEST_CASE("round trip is lossless") {
    const Dataset ds = tiny_dataset();
    const TrainConfig c = tiny_config();
    const auto r = train_model(slice(ds, 0, 45), slice(ds, 45, 60), c, 3, 5);
    Checkpoint ck = make_checkpoint(r, c);
    const std::string bytes = encode_checkpoint(ck);
    Checkpoint back = decode_checkpoint(bytes);
    CHECK(encode_checkpoint(back) == bytes);
    CHECK(back.config == c);
    CHECK(back.history == r.history);
    CHECK(back.optimizer == r.optimizer);
    CHECK(back.best_epoch == r.best_epoch);
    const auto val = slice(ds, 45, 60);
    CHECK(eval_logits(back.model, val).values() == eval_logits(r.model, val).values());

    const auto path = std::filesystem::temp_directory_path() / "mambakick_unit_ck.bin";
    save_checkpoint(path, ck);
    Checkpoint loaded = load_checkpoint(path);
    CHECK(encode_checkpoint(loaded) == bytes);
  }

  TEST_CASE("damaged checkpoints") {
    const Dataset ds = tiny_dataset();
    TrainConfig c = tiny_config();
    c.max_epochs = 1;
    Checkpoint ck = make_checkpoint(train_model(slice(ds, 0, 45), slice(ds, 45, 60), c, 3, 5), c);
    const std::string bytes = encode_checkpoint(ck);
    CHECK_THROWS_AS(decode_checkpoint(std::string_view(bytes).substr(0, bytes.size() - 5)), DataError);
    std::string bad = bytes;
    bad[3] = '?';
    CHECK_THROWS_AS(decode_checkpoint(bad), DataError);
  }
}
