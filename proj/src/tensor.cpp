#include "mambakick/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "mambakick/rng.hpp"

namespace mambakick {

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Linear::Linear(std::size_t in, std::size_t out, bool with_bias)
    : weight(out, in), bias(with_bias ? out : 0, 0.0) {}

void Linear::init_uniform(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(1, in_features())));
  for (double& w : weight.values()) w = rng.uniform(-bound, bound);
  std::fill(bias.begin(), bias.end(), 0.0);
}

void Linear::forward_row(std::span<const double> x, std::span<double> y) const {
  const std::size_t in = in_features();
  const std::size_t out = out_features();
  if (x.size() != in || y.size() != out) {
    throw ShapeError("linear expects " + std::to_string(in) + " inputs, got " +
                     std::to_string(x.size()));
  }
  const double* w = weight.values().data();
  for (std::size_t o = 0; o < out; ++o) {
    double acc = bias.empty() ? 0.0 : bias[o];
    const double* wr = w + o * in;
    for (std::size_t i = 0; i < in; ++i) acc += wr[i] * x[i];
    y[o] = acc;
  }
}

Matrix Linear::forward(const Matrix& x) const {
  if (x.cols() != in_features()) {
    throw ShapeError("linear expects width " + std::to_string(in_features()) + ", got " +
                     std::to_string(x.cols()));
  }
  Matrix y(x.rows(), out_features());
  for (std::size_t t = 0; t < x.rows(); ++t) forward_row(x.row(t), y.row(t));
  return y;
}

Matrix Linear::backward(const Matrix& x, const Matrix& dy, Linear& grad) const {
  const std::size_t in = in_features();
  const std::size_t out = out_features();
  if (dy.cols() != out || dy.rows() != x.rows() || x.cols() != in) {
    throw ShapeError("linear backward: gradient shape does not match forward input");
  }
  Matrix dx(x.rows(), in);
  const double* w = weight.values().data();
  double* gw = grad.weight.values().data();
  for (std::size_t t = 0; t < x.rows(); ++t) {
    auto xr = x.row(t);
    auto dyr = dy.row(t);
    auto dxr = dx.row(t);
    for (std::size_t o = 0; o < out; ++o) {
      const double g = dyr[o];
      if (g == 0.0) continue;
      const double* wr = w + o * in;
      double* gwr = gw + o * in;
      for (std::size_t i = 0; i < in; ++i) {
        gwr[i] += g * xr[i];
        dxr[i] += g * wr[i];
      }
      if (!grad.bias.empty()) grad.bias[o] += g;
    }
  }
  return dx;
}

void Linear::collect(const std::string& prefix, ParamList& out) {
  out.push_back({prefix + ".weight", weight.values()});
  if (!bias.empty()) out.push_back({prefix + ".bias", bias});
}

void check_finite(std::span<const double> values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericDomainError(std::string("non-finite value in ") + what);
  }
}

void check_finite(const Matrix& m, const char* what) { check_finite(m.values(), what); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

}  // namespace mambakick
