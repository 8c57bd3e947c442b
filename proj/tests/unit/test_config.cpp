#include <doctest.h>

#include <cstdlib>
#include <filesystem>

#include "mambakick/config.hpp"
#include "mambakick/kv.hpp"

using namespace mambakick;

TEST_SUITE("config") {
  TEST_CASE("defaults carry the training recipe") {
    const TrainConfig c;
    CHECK(c.batch_size == 5);
    CHECK(c.max_epochs == 60);
    CHECK(c.patience == 10);
    CHECK(c.lr == 1e-3);
    CHECK(c.weight_decay == 5e-2);
    CHECK(c.clip_norm == 1.0);
    CHECK(c.label_smoothing == 0.01);
    CHECK(c.folds == 10);
    CHECK(c.augment.apply_prob == 0.90);
    CHECK(c.augment.metadata_noise_std == 0.01);
    CHECK_NOTHROW(c.validate());
  }

  TEST_CASE("text round trip") {
    TrainConfig c;
    c.lr = 0.1 + 0.2;
    c.seed = 123456789012345ULL;
    c.scan_method = ScanMethod::parallel;
    c.ablation_mode = AblationMode::narrow;
    c.loss_normalization = LossNormalization::batch_mean;
    c.class_weighting = ClassWeighting::none;
    c.augment.frame_dropout = 1.0 / 3.0;
    c.use_conv = false;
    const std::string text = c.to_text();
    CHECK(TrainConfig::parse(text) == c);
    CHECK(TrainConfig::parse(text).to_text() == text);
  }

  TEST_CASE("every key is documented in the written file") {
    const std::string text = TrainConfig{}.to_text();
    for (const char* key : {"batch_size", "max_epochs", "patience", "lr", "weight_decay", "clip_norm",
                            "label_smoothing", "augment.apply_prob", "augment.temporal_shift_max",
                            "augment.feature_dropout"})
      CHECK(text.find(std::string(key) + " = ") != std::string::npos);
  }

  TEST_CASE("partial files keep defaults and comments are ignored") {
    const TrainConfig c = TrainConfig::parse("# tuned\nmax_epochs = 3\n\naugment.enabled = false\n");
    CHECK(c.max_epochs == 3);
    CHECK_FALSE(c.augment_enabled);
    CHECK(c.batch_size == 5);
  }

  TEST_CASE("bad files") {
    CHECK_THROWS_AS(TrainConfig::parse("learning_rate = 0.1\n"), ConfigError);
    CHECK_THROWS_AS(TrainConfig::parse("lr 0.1\n"), ConfigError);
    CHECK_THROWS_AS(TrainConfig::parse("lr = fast\n"), ConfigError);
    CHECK_THROWS_AS(TrainConfig::parse("lr = 0.1\nlr = 0.2\n"), ConfigError);
    CHECK_THROWS_AS(TrainConfig::parse("batch_size = 1\n"), ConfigError);
    CHECK_THROWS_AS(TrainConfig::parse("scan_method = sideways\n"), ConfigError);
    CHECK_THROWS_AS(TrainConfig::load("/nonexistent/config.txt"), ConfigError);
  }

  TEST_CASE("environment variable supplies the default path") {
    const auto path = std::filesystem::temp_directory_path() / "mambakick_unit_env.cfg";
    write_text_file(path, "patience = 4\n");
    ::setenv(kConfigEnvVar, path.c_str(), 1);
    CHECK(resolve_config("").patience == 4);
    const auto other = std::filesystem::temp_directory_path() / "mambakick_unit_explicit.cfg";
    write_text_file(other, "patience = 7\n");
    CHECK(resolve_config(other.string()).patience == 7);
    ::unsetenv(kConfigEnvVar);
    CHECK(resolve_config("").patience == 10);
  }

  TEST_CASE("derived width") {
    const TrainConfig c;
    CHECK(c.resolved_width(16) == 16);
    CHECK(c.resolved_width(256) == 64);
    CHECK(c.resolved_width(2048) == 128);
    TrainConfig fixed;
    fixed.d_model = 24;
    CHECK(fixed.resolved_width(2048) == 24);
  }

  TEST_CASE("key value helpers") {
    for (double v : {0.1, 1e-300, -3.5e17, 1.0 / 3.0, 5e-324})
      CHECK(parse_double(format_double(v), "x") == v);
    CHECK(format_double(0.001) == "0.001");
    CHECK(parse_bool("true", "x"));
    CHECK_FALSE(parse_bool("false", "x"));
    KeyValues kv;
    kv.set("a", 1);
    kv.set("b", std::string("two words"));
    const KeyValues back = KeyValues::parse(kv.to_text());
    CHECK(back.get_int("a") == 1);
    CHECK(back.require("b") == "two words");
    CHECK_THROWS_AS(back.require("c"), DataError);
  }
}
