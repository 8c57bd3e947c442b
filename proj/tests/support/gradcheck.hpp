#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "mambakick/tensor.hpp"

namespace mambakick::testing {

struct TensorError {
  std::string name;
  double rel_error = 0.0;
  double max_abs_numeric = 0.0;
};

// Central differences on every entry of every tensor in `params`, compared
// with the analytic gradients in `grads` (same order). Error per tensor is
// max|a - n| / max(max|n|, max|a|, floor).
inline std::vector<TensorError> finite_difference_check(const ParamList& params, const ParamList& grads,
                                                        const std::function<double()>& loss,
                                                        double step = 1e-5, double floor = 1e-10) {
  std::vector<TensorError> out;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto theta = params[i].values;
    const auto g = grads[i].values;
    double max_diff = 0.0, max_n = 0.0, max_a = 0.0;
    for (std::size_t j = 0; j < theta.size(); ++j) {
      const double keep = theta[j];
      theta[j] = keep + step;
      const double up = loss();
      theta[j] = keep - step;
      const double down = loss();
      theta[j] = keep;
      const double numeric = (up - down) / (2.0 * step);
      max_diff = std::max(max_diff, std::abs(numeric - g[j]));
      max_n = std::max(max_n, std::abs(numeric));
      max_a = std::max(max_a, std::abs(g[j]));
    }
    out.push_back({params[i].name, max_diff / std::max({max_n, max_a, floor}), max_n});
  }
  return out;
}

inline double worst(const std::vector<TensorError>& errs, std::string* name = nullptr) {
  double w = 0.0;
  for (const auto& e : errs) {
    if (e.rel_error >= w) {
      w = e.rel_error;
      if (name) *name = e.name;
    }
  }
  return w;
}

}  // namespace mambakick::testing
