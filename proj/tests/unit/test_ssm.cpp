#include <doctest.h>

#include <cmath>
#include <numbers>

#include "../support/gradcheck.hpp"
#include "mambakick/rng.hpp"
#include "mambakick/ssm.hpp"

using namespace mambakick;

namespace {

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
  Matrix m(r, c);
  for (auto& v : m.values()) v = rng.normal(0.0, scale);
  return m;
}

SsmParams random_params(Rng& rng, std::size_t H, std::size_t N) {
  SsmParams p(H, N);
  p.init(rng);
  // Move delta into a range where the state actually carries over.
  for (auto& b : p.delta_proj.bias) b = rng.uniform(-1.0, 1.0);
  for (auto& v : p.skip) v = rng.normal();
  return p;
}

double max_rel_diff(const Matrix& a, const Matrix& b) {
  double scale = 0.0, diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    scale = std::max(scale, std::abs(b.values()[i]));
    diff = std::max(diff, std::abs(a.values()[i] - b.values()[i]));
  }
  return diff / std::max(scale, 1e-300);
}

}  // namespace

TEST_SUITE("ssm_core") {
  TEST_CASE("discretize_zoh closed form") {
    const auto z = discretize_zoh(-1.0, 1.0, std::numbers::ln2);
    CHECK(std::abs(z.a_bar - 0.5) <= 1e-12);
    CHECK(std::abs(z.b_bar - 0.5) <= 1e-12);
  }

  TEST_CASE("discretize_zoh limit branch and zero width") {
    const auto lim = discretize_zoh(-1e-12, 2.0, 0.3);
    CHECK(std::abs(lim.b_bar - 0.6) <= 1e-12);
    const auto zero = discretize_zoh(-1.0, 1.0, 0.0);
    CHECK(zero.a_bar == 1.0);
    CHECK(zero.b_bar == 0.0);
  }

  TEST_CASE("discretize_zoh rejects bad input") {
    CHECK_THROWS_AS(discretize_zoh(std::nan(""), 1.0, 0.1), NumericDomainError);
    CHECK_THROWS_AS(discretize_zoh(-1.0, INFINITY, 0.1), NumericDomainError);
    CHECK_THROWS_AS(discretize_zoh(-1.0, 1.0, -0.1), NumericDomainError);
    CHECK_THROWS_AS(discretize_zoh(0.5, 1.0, 0.1), NumericDomainError);
  }

  TEST_CASE("a_bar stays in (0, 1)") {
    Rng rng(3);
    for (int i = 0; i < 10000; ++i) {
      const double a = -std::exp(rng.uniform(-8.0, 3.0));
      const double delta = std::exp(rng.uniform(-9.0, 1.0));
      const auto z = discretize_zoh(a, rng.normal(), delta);
      REQUIRE(z.a_bar > 0.0);
      REQUIRE(z.a_bar < 1.0);
    }
  }

  TEST_CASE("b_bar is continuous across the limit switch") {
    const double delta = 1.0;
    for (double eps : {1e-12, 1e-10, 1e-9}) {
      const double inside = discretize_zoh(-(1e-6 - eps), 1.0, delta).b_bar;
      const double outside = discretize_zoh(-(1e-6 + eps), 1.0, delta).b_bar;
      CHECK(std::abs(inside - outside) <= 1e-9);
    }
    // Both sides agree with expm1(z) / a evaluated directly.
    const double a = -1.0000001e-6;
    CHECK(std::abs(discretize_zoh(a, 1.0, 1.0).b_bar - std::expm1(a) / a) <= 1e-15);
  }

  TEST_CASE("zoh_factor partials match finite differences") {
    for (double a : {-3.0, -0.2, -1e-4, -1e-8}) {
      for (double delta : {0.01, 0.5, 2.0}) {
        const auto f = zoh_factor(a, delta);
        const double ha = std::min(0.1 * std::abs(a), 1e-5), hd = delta * 1e-6;
        const double da = (zoh_factor(a + ha, delta).f - zoh_factor(a - ha, delta).f) / (2 * ha);
        const double dd = (zoh_factor(a, delta + hd).f - zoh_factor(a, delta - hd).f) / (2 * hd);
        CHECK(f.df_da == doctest::Approx(da).epsilon(1e-4));
        CHECK(f.df_ddelta == doctest::Approx(dd).epsilon(1e-7));
      }
    }
  }

  TEST_CASE("selective_project zero weights give softplus(0)") {
    SsmParams p(3, 2);
    Matrix x(1, 3, 0.0);
    const auto t = selective_project(x, p);
    for (double d : t.delta.values()) CHECK(d == doctest::Approx(std::numbers::ln2).epsilon(1e-15));
  }

  TEST_CASE("selective_project identity b_proj copies inputs") {
    SsmParams p(4, 2);
    p.b_proj.weight(0, 0) = 1.0;
    p.b_proj.weight(1, 1) = 1.0;
    const std::vector<double> e1{1.0, 0.0, 0.0, 0.0};
    const auto s = selective_project(e1, p);
    CHECK(s.b == std::vector<double>{1.0, 0.0});
  }

  TEST_CASE("selective_project matches a dot-product oracle") {
    Rng rng(11);
    SsmParams p = random_params(rng, 5, 3);
    for (auto& v : p.b_proj.bias) v = rng.normal();
    for (auto& v : p.c_proj.bias) v = rng.normal();
    const Matrix x = random_matrix(rng, 4, 5);
    const auto t = selective_project(x, p);
    for (std::size_t r = 0; r < 4; ++r) {
      for (std::size_t n = 0; n < 3; ++n) {
        double b = p.b_proj.bias[n], c = p.c_proj.bias[n];
        for (std::size_t i = 0; i < 5; ++i) {
          b += p.b_proj.weight(n, i) * x(r, i);
          c += p.c_proj.weight(n, i) * x(r, i);
        }
        CHECK(t.b(r, n) == doctest::Approx(b).epsilon(1e-14));
        CHECK(t.c(r, n) == doctest::Approx(c).epsilon(1e-14));
      }
      for (std::size_t h = 0; h < 5; ++h) {
        double s = p.delta_proj.bias[h];
        for (std::size_t i = 0; i < 5; ++i) s += p.delta_proj.weight(h, i) * x(r, i);
        CHECK(t.delta(r, h) == doctest::Approx(std::log1p(std::exp(s))).epsilon(1e-14));
        CHECK(t.delta(r, h) > 0.0);
      }
    }
  }

  TEST_CASE("selective_project shape mismatch") {
    SsmParams p(3, 2);
    CHECK_THROWS_AS(selective_project(Matrix(2, 4), p), ShapeError);
  }

  TEST_CASE("hand-unrolled two-step recurrence") {
    DiscreteParams d(2, 1, 1);
    d.a_bar = {0.5, 0.5};
    d.b_bar = {0.5, 0.5};
    Matrix c(2, 1, 1.0);
    Matrix x(2, 1, 1.0);
    const std::vector<double> skip{0.0};
    for (auto method : {ScanMethod::recurrent, ScanMethod::parallel}) {
      const Matrix y = scan_discrete(d, c, skip, x, method);
      CHECK(y(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
      CHECK(y(1, 0) == doctest::Approx(0.75).epsilon(1e-15));
    }
  }

  TEST_CASE("zero evolution is memoryless") {
    Rng rng(5);
    DiscreteParams d(6, 2, 3);
    for (auto& v : d.b_bar) v = rng.normal();
    Matrix c = random_matrix(rng, 6, 3);
    Matrix x = random_matrix(rng, 6, 2);
    const std::vector<double> skip{0.3, -0.7};
    const Matrix y = scan_discrete(d, c, skip, x, ScanMethod::recurrent);
    for (std::size_t t = 0; t < 6; ++t) {
      for (std::size_t h = 0; h < 2; ++h) {
        double expect = skip[h] * x(t, h);
        for (std::size_t n = 0; n < 3; ++n) expect += c(t, n) * d.b_bar[d.index(t, h, n)] * x(t, h);
        CHECK(y(t, h) == doctest::Approx(expect).epsilon(1e-14));
      }
    }
  }

  TEST_CASE("zero input gives zero output") {
    Rng rng(2);
    const SsmParams p = random_params(rng, 4, 3);
    const Matrix y = scan_recurrent(Matrix(7, 4, 0.0), p);
    for (double v : y.values()) CHECK(v == 0.0);
  }

  TEST_CASE("empty sequence is rejected") {
    Rng rng(2);
    const SsmParams p = random_params(rng, 2, 2);
    CHECK_THROWS_AS(scan_recurrent(Matrix(0, 2), p), InvalidInputError);
    CHECK_THROWS_AS(scan_parallel(Matrix(0, 2), p), InvalidInputError);
  }

  TEST_CASE("parallel scan agrees with recurrent scan") {
    Rng rng(123);
    for (int inst = 0; inst < 100; ++inst) {
      const auto T = static_cast<std::size_t>(rng.uniform_int(1, 64));
      const auto H = static_cast<std::size_t>(rng.uniform_int(1, 8));
      const auto N = static_cast<std::size_t>(rng.uniform_int(1, 4));
      const SsmParams p = random_params(rng, H, N);
      const Matrix x = random_matrix(rng, T, H);
      REQUIRE(max_rel_diff(scan_parallel(x, p), scan_recurrent(x, p)) <= 1e-5);
    }
  }

  TEST_CASE("single step scan is bit identical") {
    Rng rng(8);
    const SsmParams p = random_params(rng, 5, 3);
    const Matrix x = random_matrix(rng, 1, 5);
    CHECK(scan_parallel(x, p).values() == scan_recurrent(x, p).values());
  }

  TEST_CASE("affine composition law") {
    const AffineMap m1{0.3, 1.5}, m2{-0.8, 0.25};
    for (double h0 : {0.0, 1.0, -2.5}) {
      CHECK(then(m1, m2).apply(h0) == doctest::Approx(m2.apply(m1.apply(h0))).epsilon(1e-15));
    }
    Rng rng(4);
    std::vector<double> a(13), u(13);
    for (auto& v : a) v = rng.uniform();
    for (auto& v : u) v = rng.normal();
    std::vector<double> seq = u, par = u;
    affine_scan_recurrent(a, seq, 1);
    affine_scan_parallel(a, par, 1);
    AffineMap acc;
    for (std::size_t t = 0; t < 13; ++t) {
      acc = then(acc, AffineMap{a[t], u[t]});
      CHECK(acc.apply(0.0) == doctest::Approx(seq[t]).epsilon(1e-13));
      CHECK(par[t] == doctest::Approx(seq[t]).epsilon(1e-12));
    }
  }
}

TEST_SUITE("ssm_layer") {
  SsmLayer small_layer(Rng& rng, bool conv, std::size_t width = 4, std::size_t N = 3) {
    SsmLayerOptions o;
    o.width = width;
    o.state_size = N;
    o.expand = 2;
    o.use_conv = conv;
    SsmLayer layer(o);
    layer.init(rng);
    for (auto& b : layer.ssm.delta_proj.bias) b = rng.uniform(-1.0, 1.0);
    for (auto& v : layer.ssm.b_proj.bias) v = rng.normal(0.0, 0.3);
    for (auto& v : layer.ssm.c_proj.bias) v = rng.normal(0.0, 0.3);
    for (auto& v : layer.conv_bias) v = rng.normal(0.0, 0.1);
    for (auto& v : layer.gate_proj.bias) v = rng.normal(0.0, 0.3);
    return layer;
  }

  TEST_CASE("open gate without conv reduces to the raw scan") {
    Rng rng(21);
    SsmLayer layer = small_layer(rng, false);
    layer.gate_proj.weight.fill(0.0);
    std::fill(layer.gate_proj.bias.begin(), layer.gate_proj.bias.end(), 60.0);
    const Matrix x = random_matrix(rng, 6, 4);
    const Matrix y = ssm_layer_forward(layer, x);
    const Matrix expected = layer.out_proj.forward(scan_recurrent(layer.in_proj.forward(x), layer.ssm));
    CHECK(max_rel_diff(y, expected) <= 1e-14);
  }

  TEST_CASE("zero input gives zero output") {
    Rng rng(22);
    SsmLayer layer = small_layer(rng, true);
    std::fill(layer.conv_bias.begin(), layer.conv_bias.end(), 0.0);
    const Matrix y = ssm_layer_forward(layer, Matrix(5, 4, 0.0));
    for (double v : y.values()) CHECK(v == 0.0);
  }

  TEST_CASE("layer gradients match finite differences") {
    for (bool conv : {false, true}) {
      for (auto method : {ScanMethod::recurrent, ScanMethod::parallel}) {
        Rng rng(conv ? 31 : 32);
        SsmLayer layer = small_layer(rng, conv);
        const Matrix x = random_matrix(rng, 9, 4);
        const Matrix r = random_matrix(rng, 9, 4);
        auto loss = [&] {
          const Matrix y = ssm_layer_forward(layer, x, method);
          double s = 0.0;
          for (std::size_t i = 0; i < y.size(); ++i) s += r.values()[i] * y.values()[i];
          return s;
        };
        SsmLayerCache cache;
        ssm_layer_forward(layer, x, cache, method);
        SsmLayer grad = zeros_like(layer);
        const Matrix dx = ssm_layer_backward(layer, cache, r, grad);
        ParamList params, grads;
        layer.collect("layer", params);
        grad.collect("layer", grads);
        const auto errs = testing::finite_difference_check(params, grads, loss);
        for (const auto& e : errs) {
          INFO(e.name);
          CHECK(e.rel_error <= 1e-4);
        }
        // Input gradient.
        Matrix xm = x;
        double max_diff = 0.0, scale = 0.0;
        for (std::size_t i = 0; i < xm.size(); ++i) {
          const double keep = xm.values()[i];
          auto f = [&](double v) {
            xm.values()[i] = v;
            const Matrix y = ssm_layer_forward(layer, xm, method);
            double s = 0.0;
            for (std::size_t j = 0; j < y.size(); ++j) s += r.values()[j] * y.values()[j];
            return s;
          };
          const double num = (f(keep + 1e-5) - f(keep - 1e-5)) / 2e-5;
          xm.values()[i] = keep;
          max_diff = std::max(max_diff, std::abs(num - dx.values()[i]));
          scale = std::max(scale, std::abs(num));
        }
        CHECK(max_diff / scale <= 1e-4);
      }
    }
  }

  TEST_CASE("zero upstream gradient gives zero gradients") {
    Rng rng(40);
    SsmLayer layer = small_layer(rng, true);
    const Matrix x = random_matrix(rng, 5, 4);
    SsmLayerCache cache;
    ssm_layer_forward(layer, x, cache);
    SsmLayer grad = zeros_like(layer);
    const Matrix dx = ssm_layer_backward(layer, cache, Matrix(5, 4, 0.0), grad);
    ParamList grads;
    grad.collect("", grads);
    for (const auto& g : grads)
      for (double v : g.values) CHECK(v == 0.0);
    for (double v : dx.values()) CHECK(v == 0.0);
  }

  TEST_CASE("scalar single-step gradients match the product rule") {
    // width 1, expand 1, N 1, no conv: every quantity is a scalar.
    SsmLayerOptions o;
    o.width = 1;
    o.state_size = 1;
    o.expand = 1;
    o.use_conv = false;
    SsmLayer L(o);
    L.in_proj.weight(0, 0) = 0.7;
    L.gate_proj.weight(0, 0) = -0.4;
    L.gate_proj.bias[0] = 0.2;
    L.ssm.delta_proj.weight(0, 0) = 0.5;
    L.ssm.delta_proj.bias[0] = -0.3;
    L.ssm.b_proj.weight(0, 0) = 1.1;
    L.ssm.b_proj.bias[0] = 0.1;
    L.ssm.c_proj.weight(0, 0) = -0.6;
    L.ssm.c_proj.bias[0] = 0.4;
    L.ssm.a_log(0, 0) = std::log(1.5);
    L.ssm.skip[0] = 0.9;
    L.out_proj.weight(0, 0) = 1.3;
    const double x = 0.8;

    const double u = 0.7 * x;
    const double g = 1.0 / (1.0 + std::exp(-(-0.4 * x + 0.2)));
    const double s = 0.5 * u - 0.3;
    const double delta = std::log1p(std::exp(s));
    const double B = 1.1 * u + 0.1;
    const double C = -0.6 * u + 0.4;
    const double a = -1.5;
    const double f = std::expm1(delta * a) / a;
    const double scan = C * f * B * u + 0.9 * u;
    const double y = 1.3 * g * scan;

    Matrix xm(1, 1, x);
    SsmLayerCache cache;
    const Matrix out = ssm_layer_forward(L, xm, cache);
    CHECK(out(0, 0) == doctest::Approx(y).epsilon(1e-14));
    SsmLayer grad = zeros_like(L);
    ssm_layer_backward(L, cache, Matrix(1, 1, 1.0), grad);

    const double dscan = 1.3 * g;
    CHECK(grad.out_proj.weight(0, 0) == doctest::Approx(g * scan).epsilon(1e-12));
    CHECK(grad.ssm.skip[0] == doctest::Approx(dscan * u).epsilon(1e-12));
    CHECK(grad.ssm.c_proj.bias[0] == doctest::Approx(dscan * f * B * u).epsilon(1e-12));
    CHECK(grad.ssm.b_proj.bias[0] == doctest::Approx(dscan * C * f * u).epsilon(1e-12));
    CHECK(grad.gate_proj.bias[0] == doctest::Approx(1.3 * scan * g * (1 - g)).epsilon(1e-12));
    // df/ddelta = exp(delta a); dsoftplus/ds = sigmoid(s).
    const double sig_s = 1.0 / (1.0 + std::exp(-s));
    CHECK(grad.ssm.delta_proj.bias[0] ==
          doctest::Approx(dscan * C * B * u * std::exp(delta * a) * sig_s).epsilon(1e-12));
    // df/da = (delta e^{za} a - (e^{za} - 1)) / a^2 and da/da_log = a.
    const double df_da = (delta * std::exp(delta * a) * a - std::expm1(delta * a)) / (a * a);
    CHECK(grad.ssm.a_log(0, 0) == doctest::Approx(dscan * C * B * u * df_da * a).epsilon(1e-12));
  }

  TEST_CASE("causality") {
    Rng rng(50);
    SsmLayer layer = small_layer(rng, true);
    const Matrix x = random_matrix(rng, 10, 4);
    const Matrix y = ssm_layer_forward(layer, x);
    for (std::size_t t = 0; t < 10; ++t) {
      Matrix xp = x;
      xp(t, 1) += 0.5;
      const Matrix yp = ssm_layer_forward(layer, xp);
      for (std::size_t s = 0; s < 10; ++s) {
        bool same = true;
        for (std::size_t h = 0; h < 4; ++h) same = same && yp(s, h) == y(s, h);
        if (s < t) {
          CHECK(same);
        } else if (s == t) {
          CHECK_FALSE(same);
        }
      }
    }
  }
}
