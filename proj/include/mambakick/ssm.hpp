#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mambakick/tensor.hpp"

namespace mambakick {

class Rng;

// Below this |delta * a| the ZOH input factor (exp(delta*a) - 1) / a is
// replaced by its limit delta.
inline constexpr double kZohLimitThreshold = 1e-6;

struct ZohPair {
  double a_bar;
  double b_bar;
};

// Zero-order-hold discretization of one diagonal state entry:
//   a_bar = exp(delta * a),  b_bar = ((exp(delta * a) - 1) / a) * b.
// Requires a < 0, delta >= 0 and finite inputs.
ZohPair discretize_zoh(double a, double b, double delta);

// The input factor f(a, delta) = b_bar / b together with the partials needed
// for the backward pass.
struct ZohFactor {
  double a_bar;
  double f;
  double df_da;
  double df_ddelta;
};
ZohFactor zoh_factor(double a, double delta);

// Affine map h -> a * h + u. The selective recurrence is a left-to-right
// composition of these maps.
struct AffineMap {
  double a = 1.0;
  double u = 0.0;
  double apply(double h) const { return a * h + u; }
};

// Map that applies `first` and then `second`.
inline AffineMap then(const AffineMap& first, const AffineMap& second) {
  return {second.a * first.a, second.a * first.u + second.u};
}

// Parameters of the selective state-space core for `channels` independent
// channels sharing input-dependent B_t, C_t.
struct SsmParams {
  std::size_t channels = 0;
  std::size_t state_size = 0;
  Matrix a_log;               // channels x state_size; A = -exp(a_log)
  std::vector<double> skip;   // channels
  Linear delta_proj;          // channels -> channels; its bias is the delta bias
  Linear b_proj;              // channels -> state_size
  Linear c_proj;              // channels -> state_size

  SsmParams() = default;
  SsmParams(std::size_t channels, std::size_t state_size);

  // a_log = log(n) for n = 1..N, skip = 1, projections uniform, delta bias
  // chosen so that softplus(bias) is log-uniform in [dt_min, dt_max].
  void init(Rng& rng, double dt_min = 1e-3, double dt_max = 1e-1);

  double a(std::size_t h, std::size_t n) const;
  void collect(const std::string& prefix, ParamList& out);
};

// Input-dependent terms of one sequence.
struct SelectiveTerms {
  Matrix delta_pre;  // T x H, before softplus
  Matrix delta;      // T x H, strictly positive
  Matrix b;          // T x N
  Matrix c;          // T x N
};

SelectiveTerms selective_project(const Matrix& x, const SsmParams& params);

struct SelectiveStep {
  std::vector<double> b;
  std::vector<double> c;
  std::vector<double> delta;
};
SelectiveStep selective_project(std::span<const double> x_t, const SsmParams& params);

// Per-(timestep, channel, state) discrete coefficients.
struct DiscreteParams {
  std::size_t steps = 0;
  std::size_t channels = 0;
  std::size_t state_size = 0;
  std::vector<double> a_bar;
  std::vector<double> b_bar;

  DiscreteParams() = default;
  DiscreteParams(std::size_t steps, std::size_t channels, std::size_t state_size);
  std::size_t index(std::size_t t, std::size_t h, std::size_t n) const {
    return (t * channels + h) * state_size + n;
  }
};

DiscreteParams discretize(const SsmParams& params, const SelectiveTerms& terms);

enum class ScanMethod { recurrent, parallel };

// Solves h_t = a_t * h_{t-1} + u_t with h_{-1} = 0 for `lanes` independent
// lanes. Both inputs are laid out as steps x lanes; on return `u` holds h.
void affine_scan_recurrent(std::span<const double> a, std::span<double> u, std::size_t lanes);
// Work-efficient (up-sweep / down-sweep) scan over the same affine maps.
void affine_scan_parallel(std::span<const double> a, std::span<double> u, std::size_t lanes);

// y_t[h] = <c_t, h_t[h, :]> + skip[h] * x_t[h] given precomputed discrete
// coefficients. Optionally returns the hidden states (steps x H x N).
Matrix scan_discrete(const DiscreteParams& disc, const Matrix& c, std::span<const double> skip,
                     const Matrix& x, ScanMethod method, std::vector<double>* states = nullptr);

Matrix scan_recurrent(const Matrix& x, const SsmParams& params);
Matrix scan_parallel(const Matrix& x, const SsmParams& params);

struct SsmLayerOptions {
  std::size_t width = 16;
  std::size_t state_size = 16;
  std::size_t expand = 2;
  std::size_t conv_width = 4;
  bool use_conv = true;
};

// Gated selective-SSM block:
//   u = in_proj(x); x' = conv(u) (optional causal depthwise);
//   out = out_proj(sigmoid(gate_proj(x)) * scan(x')).
struct SsmLayer {
  std::size_t width = 0;
  std::size_t inner = 0;
  std::size_t conv_width = 0;
  bool use_conv = false;
  Linear in_proj;             // width -> inner, no bias
  Linear gate_proj;           // width -> inner
  Matrix conv_weight;         // inner x conv_width; tap k reads u_{t-k}
  std::vector<double> conv_bias;
  SsmParams ssm;              // inner channels
  Linear out_proj;            // inner -> width, no bias

  SsmLayer() = default;
  explicit SsmLayer(const SsmLayerOptions& options);
  void init(Rng& rng);
  void collect(const std::string& prefix, ParamList& out);
};

struct SsmLayerCache {
  Matrix x;
  Matrix u;
  Matrix gate;       // sigmoid(gate_proj(x))
  Matrix xc;         // scan input
  Matrix scan_out;
  SelectiveTerms terms;
  DiscreteParams disc;
  std::vector<double> states;
};

Matrix ssm_layer_forward(const SsmLayer& layer, const Matrix& x, SsmLayerCache& cache,
                         ScanMethod method = ScanMethod::recurrent);
Matrix ssm_layer_forward(const SsmLayer& layer, const Matrix& x,
                         ScanMethod method = ScanMethod::recurrent);

// Accumulates parameter gradients into `grad` and returns dx.
Matrix ssm_layer_backward(const SsmLayer& layer, const SsmLayerCache& cache, const Matrix& dy,
                          SsmLayer& grad);

}  // namespace mambakick
