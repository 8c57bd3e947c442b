#include <doctest.h>

#include <cmath>

#include "../support/gradcheck.hpp"
#include "mambakick/model.hpp"
#include "mambakick/rng.hpp"
#include "mambakick/temporal_head.hpp"

using namespace mambakick;

namespace {

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c) {
  Matrix m(r, c);
  for (auto& v : m.values()) v = rng.normal();
  return m;
}

BranchEncoder random_encoder(Rng& rng, std::size_t D, std::size_t H, bool conv = true) {
  EncoderOptions o;
  o.input_dim = D;
  o.width = H;
  o.state_size = 3;
  o.num_layers = 2;
  o.use_conv = conv;
  BranchEncoder enc(o);
  enc.init(rng);
  for (auto& v : enc.pool_weight) v = rng.normal();
  for (auto& L : enc.layers) {
    for (auto& b : L.ssm.delta_proj.bias) b = rng.uniform(-1.0, 1.0);
    for (auto& v : L.gate_proj.bias) v = rng.normal(0.0, 0.3);
  }
  for (auto& n : enc.norms) {
    for (auto& g : n.gamma) g = 1.0 + rng.normal(0.0, 0.2);
    for (auto& b : n.beta) b = rng.normal(0.0, 0.2);
  }
  return enc;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST_SUITE("temporal_head") {
  TEST_CASE("zero score weights give the mean") {
    Rng rng(1);
    const Matrix h = random_matrix(rng, 5, 3);
    const std::vector<double> w(3, 0.0);
    const auto r = attn_pool(h, w);
    for (double a : r.alphas) CHECK(a == doctest::Approx(0.2).epsilon(1e-15));
    for (std::size_t d = 0; d < 3; ++d) {
      double mean = 0.0;
      for (std::size_t t = 0; t < 5; ++t) mean += h(t, d) / 5.0;
      CHECK(r.pooled[d] == doctest::Approx(mean).epsilon(1e-14));
    }
  }

  TEST_CASE("single step pools to itself") {
    Matrix h(1, 3);
    h(0, 0) = 1.5;
    h(0, 1) = -2.0;
    h(0, 2) = 0.25;
    const std::vector<double> w{0.3, 0.1, -4.0};
    const auto r = attn_pool(h, w);
    CHECK(r.alphas == std::vector<double>{1.0});
    CHECK(r.pooled == std::vector<double>(h.values()));
  }

  TEST_CASE("two scores 0 and ln 3") {
    Matrix h(2, 2);
    h(0, 0) = 0.0;
    h(0, 1) = 2.0;
    h(1, 0) = std::log(3.0);
    h(1, 1) = -1.0;
    const std::vector<double> w{1.0, 0.0};
    const auto r = attn_pool(h, w);
    CHECK(r.alphas[0] == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(r.alphas[1] == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(r.pooled[1] == doctest::Approx(0.25 * 2.0 + 0.75 * -1.0).epsilon(1e-15));
  }

  TEST_CASE("pool weights form a distribution") {
    Rng rng(2);
    for (int i = 0; i < 50; ++i) {
      const Matrix h = random_matrix(rng, 1 + static_cast<std::size_t>(i % 9), 4);
      std::vector<double> w(4);
      for (auto& v : w) v = rng.normal();
      const auto r = attn_pool(h, w);
      double s = 0.0;
      for (double a : r.alphas) {
        CHECK(a > 0.0);
        CHECK(a <= 1.0);
        s += a;
      }
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
  }

  TEST_CASE("score shift invariance") {
    // Adding c * w / |w|^2 to every step adds c to every score.
    Rng rng(3);
    const Matrix h = random_matrix(rng, 6, 4);
    std::vector<double> w(4);
    for (auto& v : w) v = rng.normal();
    const double c = 7.5 / dot(w, w);
    Matrix shifted = h;
    for (std::size_t t = 0; t < 6; ++t)
      for (std::size_t d = 0; d < 4; ++d) shifted(t, d) += c * w[d];
    const auto a = attn_pool(h, w);
    const auto b = attn_pool(shifted, w);
    for (std::size_t t = 0; t < 6; ++t) CHECK(std::abs(a.alphas[t] - b.alphas[t]) <= 1e-12);
  }

  TEST_CASE("empty sequence and width mismatch") {
    CHECK_THROWS_AS(attn_pool(Matrix(0, 2), std::vector<double>{1.0, 2.0}), InvalidInputError);
    CHECK_THROWS_AS(attn_pool(Matrix(2, 2), std::vector<double>{1.0}), ShapeError);
    Rng rng(4);
    const BranchEncoder enc = random_encoder(rng, 5, 4);
    CHECK_THROWS_AS(encode_branch(enc, Matrix(3, 6)), ShapeError);
  }

  TEST_CASE("constant sequence with silent blocks is the projected clip") {
    Rng rng(5);
    BranchEncoder enc = random_encoder(rng, 5, 4);
    for (auto& L : enc.layers) L.out_proj.weight.fill(0.0);
    Matrix clip = random_matrix(rng, 1, 5);
    Matrix seq(7, 5);
    for (std::size_t t = 0; t < 7; ++t)
      for (std::size_t d = 0; d < 5; ++d) seq(t, d) = clip(0, d);
    const auto v = encode_branch(enc, seq);
    const Matrix proj = enc.input_proj.forward(clip);
    for (std::size_t d = 0; d < 4; ++d) CHECK(v[d] == doctest::Approx(proj(0, d)).epsilon(1e-14));
  }

  TEST_CASE("memoryless stack maps a constant sequence to its single-step encoding") {
    Rng rng(6);
    BranchEncoder enc = random_encoder(rng, 5, 4, false);
    for (auto& L : enc.layers) L.ssm.a_log.fill(50.0);
    Matrix clip = random_matrix(rng, 1, 5);
    Matrix seq(6, 5);
    for (std::size_t t = 0; t < 6; ++t)
      for (std::size_t d = 0; d < 5; ++d) seq(t, d) = clip(0, d);
    const auto a = encode_branch(enc, seq);
    const auto b = encode_branch(enc, clip);
    for (std::size_t d = 0; d < 4; ++d) CHECK(a[d] == doctest::Approx(b[d]).epsilon(1e-12));
  }

  TEST_CASE("last clip matters") {
    Rng rng(7);
    const BranchEncoder enc = random_encoder(rng, 5, 4);
    const Matrix seq = random_matrix(rng, 8, 5);
    Matrix other = seq;
    other(7, 2) += 1.0;
    CHECK(encode_branch(enc, seq) != encode_branch(enc, other));
  }

  TEST_CASE("float sequence matches its matrix form") {
    Rng rng(8);
    const BranchEncoder enc = random_encoder(rng, 5, 4);
    EmbeddingSequence seq(Phase::kick, 4, 5);
    for (auto& v : seq.data) v = static_cast<float>(rng.normal());
    CHECK(encode_branch(enc, seq) == encode_branch(enc, seq.to_matrix()));
  }

  TEST_CASE("encoder gradients match finite differences") {
    for (std::size_t T : {1u, 9u}) {
      Rng rng(9 + T);
      BranchEncoder enc = random_encoder(rng, 5, 4);
      const Matrix seq = random_matrix(rng, T, 5);
      std::vector<double> r(4);
      for (auto& v : r) v = rng.normal();
      auto loss = [&] { return dot(encode_branch(enc, seq), r); };

      BranchCache cache;
      encode_branch(enc, seq, &cache);
      BranchEncoder grad = zeros_like(enc);
      const Matrix dseq = encode_branch_backward(enc, cache, r, grad);
      ParamList params, grads;
      enc.collect("enc", params);
      grad.collect("enc", grads);
      std::string worst_name;
      const double worst = testing::worst(testing::finite_difference_check(params, grads, loss), &worst_name);
      INFO("T=" << T << " worst tensor " << worst_name);
      CHECK(worst <= 1e-4);
      if (T == 1) {
        for (double g : grad.pool_weight) CHECK(g == 0.0);
      }

      Matrix xm = seq;
      double diff = 0.0, scale = 0.0;
      for (std::size_t i = 0; i < xm.size(); ++i) {
        const double keep = xm.values()[i];
        xm.values()[i] = keep + 1e-5;
        const double up = dot(encode_branch(enc, xm), r);
        xm.values()[i] = keep - 1e-5;
        const double down = dot(encode_branch(enc, xm), r);
        xm.values()[i] = keep;
        const double num = (up - down) / 2e-5;
        diff = std::max(diff, std::abs(num - dseq.values()[i]));
        scale = std::max(scale, std::abs(num));
      }
      CHECK(diff / scale <= 1e-4);
    }
  }

  TEST_CASE("zero upstream gradient") {
    Rng rng(12);
    const BranchEncoder enc = random_encoder(rng, 5, 4);
    const Matrix seq = random_matrix(rng, 4, 5);
    BranchCache cache;
    encode_branch(enc, seq, &cache);
    BranchEncoder grad = zeros_like(enc);
    const Matrix dseq = encode_branch_backward(enc, cache, std::vector<double>(4, 0.0), grad);
    ParamList grads;
    grad.collect("", grads);
    for (const auto& g : grads)
      for (double v : g.values) CHECK(v == 0.0);
    for (double v : dseq.values()) CHECK(v == 0.0);
  }

  TEST_CASE("run and kick encoders do not share parameters") {
    ModelOptions o;
    o.encoder.input_dim = 6;
    o.encoder.width = 4;
    o.encoder.state_size = 2;
    ModelBundle m(o);
    Rng rng(13);
    m.init(rng);
    ParamList run, kick;
    m.run.collect("run", run);
    m.kick.collect("kick", kick);
    REQUIRE(run.size() == kick.size());
    bool any_value_differs = false;
    for (std::size_t i = 0; i < run.size(); ++i) {
      CHECK(run[i].values.data() != kick[i].values.data());
      any_value_differs = any_value_differs ||
                          !std::equal(run[i].values.begin(), run[i].values.end(), kick[i].values.begin());
    }
    CHECK(any_value_differs);
  }
}
