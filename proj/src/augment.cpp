#include "mambakick/augment.hpp"

#include <algorithm>
#include <cmath>

#include "mambakick/rng.hpp"

namespace mambakick {

void AugmentConfig::validate() const {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string(name) + " must lie in [0, 1]");
  };
  auto nonneg = [](double s, const char* name) {
    if (!(s >= 0.0) || !std::isfinite(s)) throw ConfigError(std::string(name) + " must be >= 0");
  };
  prob(apply_prob, "augment.apply_prob");
  prob(temporal_mask_max_frac, "augment.temporal_mask_max_frac");
  prob(frame_dropout, "augment.frame_dropout");
  prob(feature_dropout, "augment.feature_dropout");
  if (temporal_shift_max < 0) throw ConfigError("augment.temporal_shift_max must be >= 0");
  nonneg(gaussian_noise_std, "augment.gaussian_noise_std");
  nonneg(magnitude_jitter_std, "augment.magnitude_jitter_std");
  nonneg(metadata_noise_std, "augment.metadata_noise_std");
}

AugmentedSample passthrough(const PenaltySample& sample) {
  return {sample, sample.meta.as_input()};
}

namespace {

void temporal_mask(EmbeddingSequence& seq, double max_frac, Rng& rng, PhaseTrace& tr) {
  const std::size_t T = seq.steps;
  const double u = rng.uniform();
  auto len = static_cast<std::size_t>(std::ceil(u * max_frac * static_cast<double>(T)));
  len = std::min(len, T);
  if (len == 0) return;
  const auto start = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(T - len)));
  std::fill(seq.data.begin() + static_cast<std::ptrdiff_t>(start * seq.dim),
            seq.data.begin() + static_cast<std::ptrdiff_t>((start + len) * seq.dim), 0.0f);
  tr.mask_start = start;
  tr.mask_length = len;
}

void temporal_shift(EmbeddingSequence& seq, int shift_max, Rng& rng, PhaseTrace& tr) {
  if (shift_max == 0) return;
  const auto shift = static_cast<int>(rng.uniform_int(-shift_max, shift_max));
  tr.shift = shift;
  const auto T = static_cast<std::ptrdiff_t>(seq.steps);
  const auto k = ((shift % T) + T) % T;
  if (k == 0) return;
  // Clip t moves to t + shift (mod T).
  std::rotate(seq.data.begin(), seq.data.end() - k * static_cast<std::ptrdiff_t>(seq.dim),
              seq.data.end());
}

void frame_dropout(EmbeddingSequence& seq, double p, Rng& rng, PhaseTrace& tr) {
  tr.frame_dropped.assign(seq.steps, false);
  if (p == 0.0) return;
  for (std::size_t t = 0; t < seq.steps; ++t) {
    if (!rng.bernoulli(p)) continue;
    tr.frame_dropped[t] = true;
    for (std::size_t d = 0; d < seq.dim; ++d) seq.at(t, d) = 0.0f;
  }
}

void gaussian_noise(EmbeddingSequence& seq, double std, Rng& rng) {
  if (std == 0.0) return;
  for (float& v : seq.data) v = static_cast<float>(v + std * rng.normal());
}

void magnitude_jitter(EmbeddingSequence& seq, double std, Rng& rng) {
  if (std == 0.0) return;
  for (std::size_t t = 0; t < seq.steps; ++t) {
    const double scale = 1.0 + std * rng.normal();
    for (std::size_t d = 0; d < seq.dim; ++d) seq.at(t, d) = static_cast<float>(seq.at(t, d) * scale);
  }
}

void feature_dropout(EmbeddingSequence& seq, double p, Rng& rng, PhaseTrace& tr) {
  tr.feature_dropped.assign(seq.dim, false);
  if (p == 0.0) return;
  for (std::size_t d = 0; d < seq.dim; ++d) {
    if (!rng.bernoulli(p)) continue;
    tr.feature_dropped[d] = true;
    for (std::size_t t = 0; t < seq.steps; ++t) seq.at(t, d) = 0.0f;
  }
}

}  // namespace

AugmentedSample augment(const PenaltySample& sample, const AugmentConfig& config, Rng& rng,
                        AugmentTrace* trace) {
  AugmentTrace local;
  AugmentTrace& tr = trace ? *trace : local;
  tr = AugmentTrace{};
  AugmentedSample out = passthrough(sample);
  if (!rng.bernoulli(config.apply_prob)) return out;
  tr.fired = true;

  EmbeddingSequence* phases[2] = {&out.sample.run, &out.sample.kick};
  for (int p = 0; p < 2; ++p) temporal_mask(*phases[p], config.temporal_mask_max_frac, rng, tr.phase[p]);
  for (int p = 0; p < 2; ++p) temporal_shift(*phases[p], config.temporal_shift_max, rng, tr.phase[p]);
  for (int p = 0; p < 2; ++p) frame_dropout(*phases[p], config.frame_dropout, rng, tr.phase[p]);
  for (int p = 0; p < 2; ++p) gaussian_noise(*phases[p], config.gaussian_noise_std, rng);
  for (int p = 0; p < 2; ++p) magnitude_jitter(*phases[p], config.magnitude_jitter_std, rng);
  for (int p = 0; p < 2; ++p) feature_dropout(*phases[p], config.feature_dropout, rng, tr.phase[p]);
  if (config.metadata_noise_std > 0.0) {
    for (double& m : out.meta_input) m += config.metadata_noise_std * rng.normal();
  }
  return out;
}

}  // namespace mambakick
