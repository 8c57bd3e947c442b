#include "mambakick/ssm.hpp"

#include <bit>
#include <cmath>

#include "mambakick/rng.hpp"

namespace mambakick {

ZohFactor zoh_factor(double a, double delta) {
  const double z = delta * a;
  const double a_bar = std::exp(z);
  if (std::abs(z) < kZohLimitThreshold) {
    // delta * (exp(z) - 1) / z to second order.
    return {a_bar, delta * (1.0 + 0.5 * z), 0.5 * delta * delta, 1.0 + z};
  }
  double g;  // (z e^z - e^z + 1) / z^2
  if (std::abs(z) < 1e-3) {
    g = 0.5 + z * (1.0 / 3.0 + z * (1.0 / 8.0 + z / 30.0));
  } else {
    g = (z * a_bar - std::expm1(z)) / (z * z);
  }
  return {a_bar, std::expm1(z) / a, g * delta * delta, a_bar};
}

ZohPair discretize_zoh(double a, double b, double delta) {
  if (!std::isfinite(a) || !std::isfinite(b) || !std::isfinite(delta)) {
    throw NumericDomainError("discretize_zoh requires finite inputs");
  }
  if (!(a < 0.0)) throw NumericDomainError("discretize_zoh requires a < 0");
  if (delta < 0.0) throw NumericDomainError("discretize_zoh requires delta >= 0");
  const ZohFactor zf = zoh_factor(a, delta);
  return {zf.a_bar, zf.f * b};
}

SsmParams::SsmParams(std::size_t channels_, std::size_t state_size_)
    : channels(channels_),
      state_size(state_size_),
      a_log(channels_, state_size_),
      skip(channels_, 1.0),
      delta_proj(channels_, channels_, true),
      b_proj(channels_, state_size_, true),
      c_proj(channels_, state_size_, true) {
  if (channels_ == 0 || state_size_ == 0) throw ShapeError("SSM requires N >= 1 and H >= 1");
}

void SsmParams::init(Rng& rng, double dt_min, double dt_max) {
  for (std::size_t h = 0; h < channels; ++h) {
    for (std::size_t n = 0; n < state_size; ++n) a_log(h, n) = std::log(static_cast<double>(n + 1));
  }
  std::fill(skip.begin(), skip.end(), 1.0);
  delta_proj.init_uniform(rng);
  b_proj.init_uniform(rng);
  c_proj.init_uniform(rng);
  for (double& bias : delta_proj.bias) {
    const double dt = std::exp(rng.uniform(std::log(dt_min), std::log(dt_max)));
    bias = dt + std::log(-std::expm1(-dt));  // softplus^{-1}(dt)
  }
}

double SsmParams::a(std::size_t h, std::size_t n) const { return -std::exp(a_log(h, n)); }

void SsmParams::collect(const std::string& prefix, ParamList& out) {
  out.push_back({prefix + ".a_log", a_log.values()});
  out.push_back({prefix + ".skip", skip});
  delta_proj.collect(prefix + ".delta_proj", out);
  b_proj.collect(prefix + ".b_proj", out);
  c_proj.collect(prefix + ".c_proj", out);
}

SelectiveTerms selective_project(const Matrix& x, const SsmParams& params) {
  if (x.cols() != params.channels) {
    throw ShapeError("selective_project expects width " + std::to_string(params.channels) +
                     ", got " + std::to_string(x.cols()));
  }
  SelectiveTerms terms;
  terms.delta_pre = params.delta_proj.forward(x);
  terms.delta = Matrix(x.rows(), params.channels);
  for (std::size_t i = 0; i < terms.delta.size(); ++i) {
    terms.delta.values()[i] = softplus(terms.delta_pre.values()[i]);
  }
  terms.b = params.b_proj.forward(x);
  terms.c = params.c_proj.forward(x);
  return terms;
}

SelectiveStep selective_project(std::span<const double> x_t, const SsmParams& params) {
  if (x_t.size() != params.channels) {
    throw ShapeError("selective_project expects width " + std::to_string(params.channels) +
                     ", got " + std::to_string(x_t.size()));
  }
  check_finite(x_t, "selective_project input");
  SelectiveStep step{std::vector<double>(params.state_size), std::vector<double>(params.state_size),
                     std::vector<double>(params.channels)};
  params.b_proj.forward_row(x_t, step.b);
  params.c_proj.forward_row(x_t, step.c);
  params.delta_proj.forward_row(x_t, step.delta);
  for (double& d : step.delta) d = softplus(d);
  return step;
}

DiscreteParams::DiscreteParams(std::size_t steps_, std::size_t channels_, std::size_t state_size_)
    : steps(steps_),
      channels(channels_),
      state_size(state_size_),
      a_bar(steps_ * channels_ * state_size_),
      b_bar(steps_ * channels_ * state_size_) {}

DiscreteParams discretize(const SsmParams& params, const SelectiveTerms& terms) {
  const std::size_t T = terms.delta.rows();
  const std::size_t H = params.channels;
  const std::size_t N = params.state_size;
  DiscreteParams disc(T, H, N);
  Matrix a(H, N);
  for (std::size_t h = 0; h < H; ++h)
    for (std::size_t n = 0; n < N; ++n) a(h, n) = params.a(h, n);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t h = 0; h < H; ++h) {
      const double delta = terms.delta(t, h);
      for (std::size_t n = 0; n < N; ++n) {
        const ZohFactor zf = zoh_factor(a(h, n), delta);
        const std::size_t i = disc.index(t, h, n);
        disc.a_bar[i] = zf.a_bar;
        disc.b_bar[i] = zf.f * terms.b(t, n);
      }
    }
  }
  return disc;
}

void affine_scan_recurrent(std::span<const double> a, std::span<double> u, std::size_t lanes) {
  if (a.size() != u.size() || lanes == 0 || a.size() % lanes != 0) {
    throw ShapeError("affine scan: coefficient arrays disagree");
  }
  const std::size_t steps = a.size() / lanes;
  for (std::size_t t = 1; t < steps; ++t) {
    const double* ap = a.data() + t * lanes;
    const double* prev = u.data() + (t - 1) * lanes;
    double* cur = u.data() + t * lanes;
    for (std::size_t l = 0; l < lanes; ++l) cur[l] = ap[l] * prev[l] + cur[l];
  }
}

void affine_scan_parallel(std::span<const double> a, std::span<double> u, std::size_t lanes) {
  if (a.size() != u.size() || lanes == 0 || a.size() % lanes != 0) {
    throw ShapeError("affine scan: coefficient arrays disagree");
  }
  const std::size_t steps = a.size() / lanes;
  if (steps == 0) return;
  const std::size_t padded = std::bit_ceil(steps);
  // Tree of composed maps, padded with identities.
  std::vector<double> ta(padded * lanes, 1.0);
  std::vector<double> tu(padded * lanes, 0.0);
  std::copy(a.begin(), a.end(), ta.begin());
  std::copy(u.begin(), u.end(), tu.begin());

  auto combine_into = [&](std::size_t first, std::size_t second) {
    // node[second] = node[first] followed by node[second]
    for (std::size_t l = 0; l < lanes; ++l) {
      const double a1 = ta[first * lanes + l], u1 = tu[first * lanes + l];
      double& a2 = ta[second * lanes + l];
      double& u2 = tu[second * lanes + l];
      u2 = a2 * u1 + u2;
      a2 = a2 * a1;
    }
  };

  // Up-sweep: each right child accumulates its left sibling's block.
  for (std::size_t stride = 1; stride < padded; stride *= 2) {
    for (std::size_t i = 2 * stride - 1; i < padded; i += 2 * stride) combine_into(i - stride, i);
  }
  // Down-sweep to an exclusive scan.
  for (std::size_t l = 0; l < lanes; ++l) {
    ta[(padded - 1) * lanes + l] = 1.0;
    tu[(padded - 1) * lanes + l] = 0.0;
  }
  for (std::size_t stride = padded / 2; stride >= 1; stride /= 2) {
    for (std::size_t i = 2 * stride - 1; i < padded; i += 2 * stride) {
      const std::size_t left = i - stride;
      for (std::size_t l = 0; l < lanes; ++l) {
        const double left_a = ta[left * lanes + l], left_u = tu[left * lanes + l];
        const double pre_a = ta[i * lanes + l], pre_u = tu[i * lanes + l];
        ta[left * lanes + l] = pre_a;
        tu[left * lanes + l] = pre_u;
        // prefix followed by the left block
        ta[i * lanes + l] = left_a * pre_a;
        tu[i * lanes + l] = left_a * pre_u + left_u;
      }
    }
    if (stride == 1) break;
  }
  // Inclusive state: apply element t to its exclusive prefix, starting from h = 0.
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t l = 0; l < lanes; ++l) {
      const std::size_t i = t * lanes + l;
      u[i] = a[i] * tu[i] + u[i];
    }
  }
}

Matrix scan_discrete(const DiscreteParams& disc, const Matrix& c, std::span<const double> skip,
                     const Matrix& x, ScanMethod method, std::vector<double>* states) {
  const std::size_t T = disc.steps, H = disc.channels, N = disc.state_size;
  if (T == 0) throw InvalidInputError("scan requires a non-empty sequence");
  if (x.rows() != T || x.cols() != H || c.rows() != T || c.cols() != N || skip.size() != H) {
    throw ShapeError("scan: sequence, C and skip shapes disagree with discrete parameters");
  }
  std::vector<double> h(disc.b_bar.size());
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t ch = 0; ch < H; ++ch)
      for (std::size_t n = 0; n < N; ++n) {
        const std::size_t i = disc.index(t, ch, n);
        h[i] = disc.b_bar[i] * x(t, ch);
      }
  if (method == ScanMethod::recurrent) {
    affine_scan_recurrent(disc.a_bar, h, H * N);
  } else {
    affine_scan_parallel(disc.a_bar, h, H * N);
  }
  Matrix y(T, H);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t ch = 0; ch < H; ++ch) {
      double acc = 0.0;
      const double* hp = h.data() + disc.index(t, ch, 0);
      for (std::size_t n = 0; n < N; ++n) acc += c(t, n) * hp[n];
      y(t, ch) = acc + skip[ch] * x(t, ch);
    }
  }
  if (states != nullptr) *states = std::move(h);
  return y;
}

namespace {

Matrix scan_with(const Matrix& x, const SsmParams& params, ScanMethod method) {
  if (x.rows() == 0) throw InvalidInputError("scan requires a non-empty sequence");
  check_finite(x, "scan input");
  const SelectiveTerms terms = selective_project(x, params);
  const DiscreteParams disc = discretize(params, terms);
  return scan_discrete(disc, terms.c, params.skip, x, method);
}

// Reverse pass of the selective scan. Accumulates parameter gradients and
// returns dL/dx for the scan input.
Matrix scan_backward(const SsmParams& params, const Matrix& x, const SelectiveTerms& terms,
                     const DiscreteParams& disc, const std::vector<double>& states, const Matrix& dy,
                     SsmParams& grad) {
  const std::size_t T = disc.steps, H = disc.channels, N = disc.state_size;
  Matrix dx(T, H);
  Matrix d_delta(T, H);
  Matrix db(T, N);
  Matrix dc(T, N);
  Matrix a(H, N);
  for (std::size_t h = 0; h < H; ++h)
    for (std::size_t n = 0; n < N; ++n) a(h, n) = params.a(h, n);

  std::vector<double> carry(H * N, 0.0);  // a_bar_{t+1} * dh_{t+1}
  for (std::size_t tt = T; tt-- > 0;) {
    for (std::size_t h = 0; h < H; ++h) {
      const double dyv = dy(tt, h);
      const double xv = x(tt, h);
      const double delta = terms.delta(tt, h);
      grad.skip[h] += dyv * xv;
      double dxv = dyv * params.skip[h];
      double ddelta = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        const std::size_t i = disc.index(tt, h, n);
        const double hv = states[i];
        dc(tt, n) += dyv * hv;
        const double dh = dyv * terms.c(tt, n) + carry[h * N + n];
        const double h_prev = tt > 0 ? states[disc.index(tt - 1, h, n)] : 0.0;
        const double d_abar = dh * h_prev;
        const double d_bbar = dh * xv;
        dxv += dh * disc.b_bar[i];
        carry[h * N + n] = disc.a_bar[i] * dh;

        const double an = a(h, n);
        const ZohFactor zf = zoh_factor(an, delta);
        double da = d_abar * zf.a_bar * delta;
        ddelta += d_abar * zf.a_bar * an;
        const double df = d_bbar * terms.b(tt, n);
        db(tt, n) += d_bbar * zf.f;
        ddelta += df * zf.df_ddelta;
        da += df * zf.df_da;
        grad.a_log(h, n) += da * an;  // dA/da_log = A
      }
      dx(tt, h) = dxv;
      d_delta(tt, h) = ddelta;
    }
  }

  Matrix ds(T, H);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    ds.values()[i] = d_delta.values()[i] * sigmoid(terms.delta_pre.values()[i]);
  }
  const Matrix dx_delta = params.delta_proj.backward(x, ds, grad.delta_proj);
  const Matrix dx_b = params.b_proj.backward(x, db, grad.b_proj);
  const Matrix dx_c = params.c_proj.backward(x, dc, grad.c_proj);
  for (std::size_t i = 0; i < dx.size(); ++i) {
    dx.values()[i] += dx_delta.values()[i] + dx_b.values()[i] + dx_c.values()[i];
  }
  return dx;
}

}  // namespace

Matrix scan_recurrent(const Matrix& x, const SsmParams& params) {
  return scan_with(x, params, ScanMethod::recurrent);
}

Matrix scan_parallel(const Matrix& x, const SsmParams& params) {
  return scan_with(x, params, ScanMethod::parallel);
}

SsmLayer::SsmLayer(const SsmLayerOptions& options)
    : width(options.width),
      inner(options.width * options.expand),
      conv_width(options.use_conv ? options.conv_width : 0),
      use_conv(options.use_conv && options.conv_width > 0),
      in_proj(options.width, options.width * options.expand, false),
      gate_proj(options.width, options.width * options.expand, true),
      conv_weight(use_conv ? inner : 0, conv_width),
      conv_bias(use_conv ? inner : 0, 0.0),
      ssm(options.width * options.expand, options.state_size),
      out_proj(options.width * options.expand, options.width, false) {
  if (options.width == 0 || options.expand == 0) throw ShapeError("SSM layer requires width >= 1");
}

void SsmLayer::init(Rng& rng) {
  in_proj.init_uniform(rng);
  gate_proj.init_uniform(rng);
  if (use_conv) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(conv_width));
    for (double& w : conv_weight.values()) w = rng.uniform(-bound, bound);
    std::fill(conv_bias.begin(), conv_bias.end(), 0.0);
  }
  ssm.init(rng);
  out_proj.init_uniform(rng);
}

void SsmLayer::collect(const std::string& prefix, ParamList& out) {
  in_proj.collect(prefix + ".in_proj", out);
  gate_proj.collect(prefix + ".gate_proj", out);
  if (use_conv) {
    out.push_back({prefix + ".conv.weight", conv_weight.values()});
    out.push_back({prefix + ".conv.bias", conv_bias});
  }
  ssm.collect(prefix + ".ssm", out);
  out_proj.collect(prefix + ".out_proj", out);
}

Matrix ssm_layer_forward(const SsmLayer& layer, const Matrix& x, SsmLayerCache& cache,
                         ScanMethod method) {
  if (x.cols() != layer.width) {
    throw ShapeError("SSM layer expects width " + std::to_string(layer.width) + ", got " +
                     std::to_string(x.cols()));
  }
  if (x.rows() == 0) throw InvalidInputError("SSM layer requires a non-empty sequence");
  const std::size_t T = x.rows();
  const std::size_t E = layer.inner;
  cache.x = x;
  cache.u = layer.in_proj.forward(x);
  cache.gate = layer.gate_proj.forward(x);
  for (double& g : cache.gate.values()) g = sigmoid(g);

  if (layer.use_conv) {
    cache.xc = Matrix(T, E);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t e = 0; e < E; ++e) {
        double acc = layer.conv_bias[e];
        for (std::size_t k = 0; k < layer.conv_width && k <= t; ++k) {
          acc += layer.conv_weight(e, k) * cache.u(t - k, e);
        }
        cache.xc(t, e) = acc;
      }
    }
  } else {
    cache.xc = cache.u;
  }

  cache.terms = selective_project(cache.xc, layer.ssm);
  cache.disc = discretize(layer.ssm, cache.terms);
  cache.scan_out = scan_discrete(cache.disc, cache.terms.c, layer.ssm.skip, cache.xc, method,
                                 &cache.states);
  Matrix gated(T, E);
  for (std::size_t i = 0; i < gated.size(); ++i) {
    gated.values()[i] = cache.gate.values()[i] * cache.scan_out.values()[i];
  }
  return layer.out_proj.forward(gated);
}

Matrix ssm_layer_forward(const SsmLayer& layer, const Matrix& x, ScanMethod method) {
  SsmLayerCache cache;
  return ssm_layer_forward(layer, x, cache, method);
}

Matrix ssm_layer_backward(const SsmLayer& layer, const SsmLayerCache& cache, const Matrix& dy,
                          SsmLayer& grad) {
  const std::size_t T = cache.x.rows();
  const std::size_t E = layer.inner;
  if (dy.rows() != T || dy.cols() != layer.width) {
    throw ShapeError("SSM layer backward: dy does not match the cached forward pass");
  }
  Matrix gated(T, E);
  for (std::size_t i = 0; i < gated.size(); ++i) {
    gated.values()[i] = cache.gate.values()[i] * cache.scan_out.values()[i];
  }
  const Matrix d_gated = layer.out_proj.backward(gated, dy, grad.out_proj);

  Matrix d_scan(T, E);
  Matrix d_gate_pre(T, E);
  for (std::size_t i = 0; i < d_gated.size(); ++i) {
    const double g = cache.gate.values()[i];
    d_scan.values()[i] = d_gated.values()[i] * g;
    d_gate_pre.values()[i] = d_gated.values()[i] * cache.scan_out.values()[i] * g * (1.0 - g);
  }
  Matrix dx = layer.gate_proj.backward(cache.x, d_gate_pre, grad.gate_proj);

  const Matrix dxc = scan_backward(layer.ssm, cache.xc, cache.terms, cache.disc, cache.states,
                                   d_scan, grad.ssm);
  Matrix du;
  if (layer.use_conv) {
    du = Matrix(T, E);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t e = 0; e < E; ++e) {
        const double g = dxc(t, e);
        grad.conv_bias[e] += g;
        for (std::size_t k = 0; k < layer.conv_width && k <= t; ++k) {
          grad.conv_weight(e, k) += g * cache.u(t - k, e);
          du(t - k, e) += g * layer.conv_weight(e, k);
        }
      }
    }
  } else {
    du = dxc;
  }
  const Matrix dx_in = layer.in_proj.backward(cache.x, du, grad.in_proj);
  for (std::size_t i = 0; i < dx.size(); ++i) dx.values()[i] += dx_in.values()[i];
  return dx;
}

}  // namespace mambakick
