#include "mambakick/model.hpp"

#include <algorithm>
#include <array>
#include <type_traits>

#include "mambakick/rng.hpp"

namespace mambakick {

std::string BranchSet::label() const {
  std::string out;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += '+';
    out += name;
  };
  add(run, "run");
  add(kick, "kick");
  add(meta, "meta");
  return out.empty() ? "none" : out;
}

std::size_t ModelOptions::fusion_input_dim() const {
  if (ablation == AblationMode::zero) return 2 * encoder.width + meta_dim;
  return (branches.run ? encoder.width : 0) + (branches.kick ? encoder.width : 0) +
         (branches.meta ? meta_dim : 0);
}

ModelBundle::ModelBundle(const ModelOptions& opts)
    : options(opts), run(opts.encoder), kick(opts.encoder), meta(opts.meta_dim) {
  if (!opts.branches.run && !opts.branches.kick && !opts.branches.meta) {
    throw ConfigError("at least one branch must be active");
  }
  FusionOptions f;
  f.input_dim = opts.fusion_input_dim();
  f.hidden = opts.fusion_hidden;
  f.classes = opts.classes;
  f.dropout = opts.dropout;
  f.bn_eps = opts.bn_eps;
  f.bn_momentum = opts.bn_momentum;
  fusion = FusionHead(f);
}

void ModelBundle::init(Rng& rng) {
  run.init(rng);
  kick.init(rng);
  meta.init(rng);
  fusion.init(rng);
}

void ModelBundle::collect(const std::string& prefix, ParamList& out) {
  run.collect(prefix + "run", out);
  kick.collect(prefix + "kick", out);
  meta.collect(prefix + "meta", out);
  fusion.collect(prefix + "fusion", out);
}

void ModelBundle::collect_buffers(const std::string& prefix, ParamList& out) {
  fusion.collect_buffers(prefix + "fusion", out);
}

std::size_t ModelBundle::parameter_count() {
  ParamList params;
  collect("", params);
  std::size_t n = 0;
  for (const auto& p : params) n += p.values.size();
  return n;
}

namespace {

template <class Sample>
const PenaltySample& base(const Sample& s) {
  if constexpr (std::is_same_v<Sample, AugmentedSample>) {
    return s.sample;
  } else {
    return s;
  }
}

template <class Sample>
ModelBatch build(std::span<const Sample> samples) {
  ModelBatch batch;
  batch.meta = Matrix(samples.size(), 2);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const PenaltySample& s = base(samples[i]);
    batch.run.push_back(s.run.to_matrix());
    batch.kick.push_back(s.kick.to_matrix());
    std::array<double, 2> m;
    if constexpr (std::is_same_v<Sample, AugmentedSample>) {
      m = samples[i].meta_input;
    } else {
      m = s.meta.as_input();
    }
    batch.meta(i, 0) = m[0];
    batch.meta(i, 1) = m[1];
    batch.labels.push_back(s.label);
  }
  return batch;
}

// Column offsets of each branch inside the concat (npos when absent).
struct Layout {
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
  std::size_t run = npos, kick = npos, meta = npos;
};

Layout layout_of(const ModelOptions& o) {
  Layout l;
  const std::size_t H = o.encoder.width;
  if (o.ablation == AblationMode::zero) {
    if (o.branches.run) l.run = 0;
    if (o.branches.kick) l.kick = H;
    if (o.branches.meta) l.meta = 2 * H;
    return l;
  }
  std::size_t at = 0;
  if (o.branches.run) { l.run = at; at += H; }
  if (o.branches.kick) { l.kick = at; at += H; }
  if (o.branches.meta) l.meta = at;
  return l;
}

}  // namespace

ModelBatch make_batch(std::span<const AugmentedSample> samples) { return build(samples); }
ModelBatch make_batch(std::span<const PenaltySample> samples) { return build(samples); }

Matrix model_forward(const ModelBundle& model, const ModelBatch& batch, Mode mode, Rng* rng,
                     ModelCache* cache) {
  const std::size_t B = batch.size();
  if (B == 0) throw InvalidInputError("empty batch");
  if (batch.kick.size() != B || batch.meta.rows() != B) throw ShapeError("ragged model batch");
  const Layout l = layout_of(model.options);
  Matrix concat(B, model.fusion.input_dim(), 0.0);
  if (cache) {
    cache->run.assign(B, {});
    cache->kick.assign(B, {});
  }
  for (std::size_t i = 0; i < B; ++i) {
    if (l.run != Layout::npos) {
      const auto v = encode_branch(model.run, batch.run[i], cache ? &cache->run[i] : nullptr);
      std::copy(v.begin(), v.end(), concat.row(i).begin() + static_cast<std::ptrdiff_t>(l.run));
    }
    if (l.kick != Layout::npos) {
      const auto v = encode_branch(model.kick, batch.kick[i], cache ? &cache->kick[i] : nullptr);
      std::copy(v.begin(), v.end(), concat.row(i).begin() + static_cast<std::ptrdiff_t>(l.kick));
    }
  }
  if (l.meta != Layout::npos) {
    const Matrix m = meta_branch_forward(model.meta, batch.meta, cache ? &cache->meta : nullptr);
    for (std::size_t i = 0; i < B; ++i) {
      std::copy(m.row(i).begin(), m.row(i).end(),
                concat.row(i).begin() + static_cast<std::ptrdiff_t>(l.meta));
    }
  }
  return fuse_and_classify(model.fusion, concat, mode, rng, cache ? &cache->fusion : nullptr);
}

void model_backward(const ModelBundle& model, const ModelCache& cache, const Matrix& dlogits,
                    ModelBundle& grad) {
  const Matrix dconcat = fusion_backward(model.fusion, cache.fusion, dlogits, grad.fusion);
  const Layout l = layout_of(model.options);
  const std::size_t H = model.options.encoder.width;
  const std::size_t B = dconcat.rows();
  for (std::size_t i = 0; i < B; ++i) {
    const auto row = dconcat.row(i);
    if (l.run != Layout::npos) {
      encode_branch_backward(model.run, cache.run[i], row.subspan(l.run, H), grad.run);
    }
    if (l.kick != Layout::npos) {
      encode_branch_backward(model.kick, cache.kick[i], row.subspan(l.kick, H), grad.kick);
    }
  }
  if (l.meta != Layout::npos) {
    const std::size_t M = model.options.meta_dim;
    Matrix dm(B, M);
    for (std::size_t i = 0; i < B; ++i) {
      const auto src = dconcat.row(i).subspan(l.meta, M);
      std::copy(src.begin(), src.end(), dm.row(i).begin());
    }
    meta_branch_backward(model.meta, cache.meta, dm, grad.meta);
  }
}

std::vector<int> argmax_rows(const Matrix& logits) {
  std::vector<int> out(logits.rows(), 0);
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto row = logits.row(i);
    std::size_t best = 0;
    for (std::size_t k = 1; k < row.size(); ++k)
      if (row[k] > row[best]) best = k;
    out[i] = static_cast<int>(best);
  }
  return out;
}

std::vector<int> predict(const ModelBundle& model, std::span<const PenaltySample> samples) {
  constexpr std::size_t kChunk = 64;
  std::vector<int> out;
  out.reserve(samples.size());
  for (std::size_t at = 0; at < samples.size(); at += kChunk) {
    const auto part = samples.subspan(at, std::min(kChunk, samples.size() - at));
    const auto pred = argmax_rows(model_forward(model, make_batch(part), Mode::eval, nullptr));
    out.insert(out.end(), pred.begin(), pred.end());
  }
  return out;
}

}  // namespace mambakick
