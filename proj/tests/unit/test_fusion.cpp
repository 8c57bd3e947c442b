#include <doctest.h>

#include <cmath>

#include "../support/gradcheck.hpp"
#include "mambakick/fusion_head.hpp"
#include "mambakick/rng.hpp"

using namespace mambakick;

namespace {

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c) {
  Matrix m(r, c);
  for (auto& v : m.values()) v = rng.normal();
  return m;
}

FusionHead random_head(Rng& rng, std::size_t in, std::size_t hidden, std::size_t classes,
                       double dropout) {
  FusionOptions o;
  o.input_dim = in;
  o.hidden = hidden;
  o.classes = classes;
  o.dropout = dropout;
  FusionHead head(o);
  head.init(rng);
  for (auto& v : head.hidden.bias) v = rng.normal(0.0, 0.5);
  for (auto& v : head.bn_gamma) v = 1.0 + rng.normal(0.0, 0.3);
  for (auto& v : head.bn_beta) v = rng.normal(0.0, 0.3);
  for (auto& v : head.running_mean) v = rng.normal(0.0, 0.2);
  for (auto& v : head.running_var) v = rng.uniform(0.5, 1.5);
  return head;
}

double weighted_sum(const Matrix& m, const Matrix& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) s += m.values()[i] * r.values()[i];
  return s;
}

}  // namespace

TEST_SUITE("fusion_head") {
  TEST_CASE("meta branch with zero weights is relu of the bias") {
    MetaBranch m(3);
    m.proj.bias = {0.5, -0.2, 0.0};
    const auto out = meta_branch(MetadataVector{1, 0}, m);
    CHECK(out == std::vector<double>{0.5, 0.0, 0.0});
  }

  TEST_CASE("meta branch separates (0,0) and (1,1)") {
    Rng rng(1);
    MetaBranch m(8);
    m.init(rng);
    CHECK(meta_branch(MetadataVector{0, 0}, m) != meta_branch(MetadataVector{1, 1}, m));
  }

  TEST_CASE("meta branch matches an affine relu oracle") {
    Rng rng(2);
    MetaBranch m(6);
    m.init(rng);
    for (auto& b : m.proj.bias) b = rng.normal();
    for (std::uint8_t s = 0; s < 2; ++s) {
      for (std::uint8_t f = 0; f < 2; ++f) {
        const auto out = meta_branch(MetadataVector{s, f}, m);
        for (std::size_t j = 0; j < 6; ++j) {
          const double pre = m.proj.bias[j] + m.proj.weight(j, 0) * s + m.proj.weight(j, 1) * f;
          CHECK(out[j] == doctest::Approx(std::max(0.0, pre)).epsilon(1e-15));
        }
      }
    }
  }

  TEST_CASE("meta branch rejects non-binary fields") {
    MetaBranch m(2);
    CHECK_THROWS_AS(meta_branch(MetadataVector{0, 2}, m), InvalidInputError);
    CHECK_NOTHROW(meta_branch(std::vector<double>{0.03, 0.98}, m));
    CHECK_THROWS_AS(meta_branch(std::vector<double>{0.0}, m), ShapeError);
  }

  TEST_CASE("eval mode ignores the dropout rate and is deterministic") {
    Rng rng(3);
    FusionHead a = random_head(rng, 7, 5, 3, 0.5);
    FusionHead b = a;
    b.dropout = 0.0;
    const Matrix x = random_matrix(rng, 4, 7);
    const Matrix la = fuse_and_classify(a, x, Mode::eval, nullptr);
    CHECK(la.values() == fuse_and_classify(b, x, Mode::eval, nullptr).values());
    CHECK(la.values() == fuse_and_classify(a, x, Mode::eval, nullptr).values());
  }

  TEST_CASE("train mode batch of one is an error") {
    Rng rng(4);
    const FusionHead head = random_head(rng, 3, 4, 2, 0.0);
    CHECK_THROWS_AS(fuse_and_classify(head, Matrix(1, 3, 1.0), Mode::train, &rng), InvalidInputError);
    CHECK_NOTHROW(fuse_and_classify(head, Matrix(1, 3, 1.0), Mode::eval, nullptr));
  }

  TEST_CASE("identical batch rows normalize to beta") {
    Rng rng(5);
    FusionHead head = random_head(rng, 3, 4, 2, 0.0);
    Matrix x(4, 3);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 3; ++j) x(i, j) = 0.1 * static_cast<double>(j + 1);
    FusionCache cache;
    const Matrix logits = fuse_and_classify(head, x, Mode::train, &rng, &cache);
    for (double v : cache.xhat.values()) CHECK(v == 0.0);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j)
        CHECK(cache.activated(i, j) == std::max(0.0, head.bn_beta[j]));
    for (double v : logits.values()) CHECK(std::isfinite(v));
  }

  TEST_CASE("running statistics move only on update") {
    Rng rng(6);
    FusionHead head = random_head(rng, 3, 4, 2, 0.0);
    const auto mean0 = head.running_mean;
    const auto var0 = head.running_var;
    const Matrix x = random_matrix(rng, 5, 3);
    FusionCache cache;
    fuse_and_classify(head, x, Mode::train, &rng, &cache);
    CHECK(head.running_mean == mean0);
    update_running_stats(head, cache);
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(head.running_mean[j] == doctest::Approx(0.9 * mean0[j] + 0.1 * cache.batch_mean[j]));
      CHECK(head.running_var[j] == doctest::Approx(0.9 * var0[j] + 0.1 * cache.batch_var_unbiased[j]));
    }
  }

  TEST_CASE("dropout keeps the expected activation") {
    Rng rng(7);
    const FusionHead head = random_head(rng, 3, 64, 2, 0.3);
    const Matrix x = random_matrix(rng, 8, 3);
    double zeros = 0.0, total = 0.0;
    for (int rep = 0; rep < 200; ++rep) {
      FusionCache cache;
      fuse_and_classify(head, x, Mode::train, &rng, &cache);
      for (double m : cache.mask.values()) {
        CHECK((m == 0.0 || std::abs(m - 1.0 / 0.7) <= 1e-15));
        zeros += (m == 0.0);
        total += 1.0;
      }
    }
    CHECK(zeros / total == doctest::Approx(0.3).epsilon(0.03));
  }

  TEST_CASE("train mode gradients match finite differences") {
    Rng rng(8);
    FusionHead head = random_head(rng, 6, 5, 3, 0.3);
    const Matrix x = random_matrix(rng, 6, 6);
    const Matrix r = random_matrix(rng, 6, 3);
    auto loss = [&] {
      Rng drop(99);
      return weighted_sum(fuse_and_classify(head, x, Mode::train, &drop), r);
    };
    Rng drop(99);
    FusionCache cache;
    fuse_and_classify(head, x, Mode::train, &drop, &cache);
    FusionHead grad = zeros_like(head);
    const Matrix dx = fusion_backward(head, cache, r, grad);
    ParamList params, grads;
    head.collect("fusion", params);
    grad.collect("fusion", grads);
    std::string name;
    // The hidden bias is cancelled by batch normalization, so its gradient is zero.
    const auto errs = testing::finite_difference_check(params, grads, loss, 1e-5, 1e-6);
    const double w = testing::worst(errs, &name);
    INFO(name);
    CHECK(w <= 1e-4);

    Matrix xm = x;
    double diff = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < xm.size(); ++i) {
      const double keep = xm.values()[i];
      xm.values()[i] = keep + 1e-5;
      Rng d1(99);
      const double up = weighted_sum(fuse_and_classify(head, xm, Mode::train, &d1), r);
      xm.values()[i] = keep - 1e-5;
      Rng d2(99);
      const double down = weighted_sum(fuse_and_classify(head, xm, Mode::train, &d2), r);
      xm.values()[i] = keep;
      diff = std::max(diff, std::abs((up - down) / 2e-5 - dx.values()[i]));
      scale = std::max(scale, std::abs((up - down) / 2e-5));
    }
    CHECK(diff / scale <= 1e-4);
  }
}

TEST_SUITE("loss") {
  TEST_CASE("uniform logits give ln 3") {
    LossConfig cfg;
    cfg.label_smoothing = 0.0;
    const Matrix logits(2, 3, 0.4);
    const std::vector<int> labels{0, 2};
    CHECK(weighted_smoothed_ce(logits, labels, cfg) == doctest::Approx(std::log(3.0)).epsilon(1e-15));
  }

  TEST_CASE("uniform weight scale cancels") {
    Rng rng(1);
    const Matrix logits = random_matrix(rng, 4, 3);
    const std::vector<int> labels{0, 1, 2, 1};
    LossConfig unit;
    unit.label_smoothing = 0.0;
    LossConfig twice = unit;
    twice.class_weights = {2.0, 2.0, 2.0};
    CHECK(weighted_smoothed_ce(logits, labels, unit) ==
          doctest::Approx(weighted_smoothed_ce(logits, labels, twice)).epsilon(1e-15));
  }

  TEST_CASE("smoothed binary example") {
    Matrix logits(1, 2);
    logits(0, 0) = std::log(3.0);
    const std::vector<int> labels{0};
    LossConfig cfg;
    cfg.label_smoothing = 0.01;
    const double expected = -(0.995 * std::log(0.75) + 0.005 * std::log(0.25));
    CHECK(weighted_smoothed_ce(logits, labels, cfg) == doctest::Approx(expected).epsilon(1e-14));
  }

  TEST_CASE("plain cross-entropy identity") {
    Rng rng(2);
    const Matrix logits = random_matrix(rng, 5, 3);
    const std::vector<int> labels{2, 0, 1, 1, 0};
    LossConfig cfg;
    cfg.label_smoothing = 0.0;
    double ce = 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
      const auto lp = log_softmax(logits.row(i));
      ce -= lp[static_cast<std::size_t>(labels[i])];
    }
    CHECK(weighted_smoothed_ce(logits, labels, cfg) == doctest::Approx(ce / 5.0).epsilon(1e-15));
  }

  TEST_CASE("softmax sums to one and ignores logit shifts") {
    Rng rng(3);
    const std::vector<int> labels{1, 0, 2};
    LossConfig cfg;
    cfg.class_weights = {0.7, 1.1, 1.2};
    for (int rep = 0; rep < 20; ++rep) {
      Matrix logits = random_matrix(rng, 3, 3);
      for (std::size_t i = 0; i < 3; ++i) {
        const auto p = softmax(logits.row(i));
        CHECK(std::abs(p[0] + p[1] + p[2] - 1.0) <= 1e-12);
      }
      const double base = weighted_smoothed_ce(logits, labels, cfg);
      Matrix shifted = logits;
      for (std::size_t j = 0; j < 3; ++j) shifted(1, j) += 12.5;
      CHECK(std::abs(weighted_smoothed_ce(shifted, labels, cfg) - base) <= 1e-12);
    }
  }

  TEST_CASE("gradient vanishes at the smoothed target") {
    const double s = 0.1;
    Matrix logits(1, 3);
    // p = q = [1 - s + s/3, s/3, s/3]
    logits(0, 0) = std::log(1.0 - s + s / 3.0);
    logits(0, 1) = std::log(s / 3.0);
    logits(0, 2) = std::log(s / 3.0);
    LossConfig cfg;
    cfg.label_smoothing = s;
    const std::vector<int> labels{0};
    const Matrix d = loss_backward(logits, labels, cfg);
    for (double v : d.values()) CHECK(std::abs(v) <= 1e-15);
  }

  TEST_CASE("uniform logits gradient") {
    LossConfig cfg;
    cfg.label_smoothing = 0.0;
    const std::vector<int> labels{0, 0};
    const Matrix d = loss_backward(Matrix(2, 3, 0.0), labels, cfg);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(d(i, 0) == doctest::Approx((1.0 / 3.0 - 1.0) / 2.0).epsilon(1e-15));
      CHECK(d(i, 1) == doctest::Approx((1.0 / 3.0) / 2.0).epsilon(1e-15));
    }
  }

  TEST_CASE("loss gradient matches finite differences") {
    Rng rng(4);
    Matrix logits = random_matrix(rng, 6, 3);
    const std::vector<int> labels{0, 1, 2, 2, 0, 1};
    for (auto norm : {LossNormalization::weight_sum, LossNormalization::batch_mean}) {
      LossConfig cfg;
      cfg.class_weights = {0.5, 1.9, 0.6};
      cfg.normalization = norm;
      const Matrix d = loss_backward(logits, labels, cfg);
      double diff = 0.0, scale = 0.0;
      for (std::size_t i = 0; i < logits.size(); ++i) {
        const double keep = logits.values()[i];
        const double h = 1e-6;
        logits.values()[i] = keep + h;
        const double up = weighted_smoothed_ce(logits, labels, cfg);
        logits.values()[i] = keep - h;
        const double down = weighted_smoothed_ce(logits, labels, cfg);
        logits.values()[i] = keep;
        diff = std::max(diff, std::abs((up - down) / (2 * h) - d.values()[i]));
        scale = std::max(scale, std::abs(d.values()[i]));
      }
      CHECK(diff / scale <= 1e-6);
    }
  }

  TEST_CASE("raising a class weight raises that sample's gradient share") {
    Matrix logits(2, 2);
    logits(0, 0) = 0.3;
    logits(1, 1) = -0.2;
    const std::vector<int> labels{0, 1};
    double prev = 0.0;
    for (double w : {0.5, 1.0, 2.0, 4.0}) {
      LossConfig cfg;
      cfg.class_weights = {1.0, w};
      const Matrix d = loss_backward(logits, labels, cfg);
      const double mag = std::abs(d(1, 0)) + std::abs(d(1, 1));
      CHECK(mag > prev);
      prev = mag;
    }
  }

  TEST_CASE("label out of range") {
    LossConfig cfg;
    const std::vector<int> labels{3};
    CHECK_THROWS_AS(weighted_smoothed_ce(Matrix(1, 3), labels, cfg), InvalidInputError);
    CHECK_THROWS_AS(loss_backward(Matrix(1, 3), labels, cfg), InvalidInputError);
  }
}
