#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mambakick/error.hpp"

namespace mambakick {

class Rng;

// Dense row-major matrix of doubles. Sequences are stored as T x width.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& values() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  void fill(double v);

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// A named view of one learnable tensor (or its gradient).
struct ParamRef {
  std::string name;
  std::span<double> values;
};

using ParamList = std::vector<ParamRef>;

// Affine map y = W x + b applied row-wise to a T x in sequence.
struct Linear {
  Matrix weight;              // out x in
  std::vector<double> bias;   // empty when the layer is bias-free

  Linear() = default;
  Linear(std::size_t in, std::size_t out, bool with_bias);

  std::size_t in_features() const noexcept { return weight.cols(); }
  std::size_t out_features() const noexcept { return weight.rows(); }
  bool has_bias() const noexcept { return !bias.empty(); }

  // Uniform(-1/sqrt(in), 1/sqrt(in)) weights, zero bias.
  void init_uniform(Rng& rng);

  Matrix forward(const Matrix& x) const;
  void forward_row(std::span<const double> x, std::span<double> y) const;
  // Accumulates dW, db into grad and returns dx.
  Matrix backward(const Matrix& x, const Matrix& dy, Linear& grad) const;

  void collect(const std::string& prefix, ParamList& out);
};

// Copy of a parameter holder with every learnable tensor zeroed; used as the
// gradient accumulator for that holder.
template <class Module>
Module zeros_like(const Module& module) {
  Module grad = module;
  ParamList params;
  grad.collect("", params);
  for (auto& p : params) std::fill(p.values.begin(), p.values.end(), 0.0);
  return grad;
}

void check_finite(std::span<const double> values, const char* what);
void check_finite(const Matrix& m, const char* what);

double sigmoid(double x);
double softplus(double x);

}  // namespace mambakick
