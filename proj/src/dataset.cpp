#include "mambakick/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <numeric>
#include <sstream>

#include "mambakick/rng.hpp"

namespace mambakick {

std::string class_name(std::size_t label, std::size_t classes) {
  if (classes == 2) return label == 0 ? "left" : label == 1 ? "right" : "center";
  switch (label) {
    case 0: return "left";
    case 1: return "center";
    case 2: return "right";
    default: return "class" + std::to_string(label);
  }
}

void Dataset::refresh_counts() {
  manifest.sample_count = samples.size();
  manifest.class_counts.assign(manifest.classes, 0);
  for (const auto& s : samples) {
    if (s.label < manifest.classes) ++manifest.class_counts[s.label];
  }
}

std::vector<int> Dataset::labels() const {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.label);
  return out;
}

namespace {

void put_u8(std::string& out, std::uint8_t v) { out.push_back(static_cast<char>(v)); }

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

class Reader {
 public:
  explicit Reader(std::span<const char> bytes) : bytes_(bytes) {}

  bool has(std::size_t n) const { return pos_ + n <= bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  std::uint8_t u8() { return static_cast<std::uint8_t>(bytes_[pos_++]); }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) {
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const char> bytes_;
  std::size_t pos_ = 0;
};

void validate_backbone(const std::string& name) {
  if (name.empty() || name.size() > 64) throw DataError("backbone name must have 1..64 characters");
  for (char c : name) {
    if (std::isspace(static_cast<unsigned char>(c)) || !std::isprint(static_cast<unsigned char>(c))) {
      throw DataError("backbone name must be printable without whitespace");
    }
  }
}

std::string encode_header(const DatasetManifest& m) {
  std::ostringstream os;
  os << kDatasetMagic << '\n'
     << "version " << m.version << '\n'
     << "dim " << m.dim << '\n'
     << "run_len " << m.run_len << '\n'
     << "kick_len " << m.kick_len << '\n'
     << "classes " << m.classes << '\n'
     << "samples " << m.sample_count << '\n'
     << "counts";
  for (auto c : m.class_counts) os << ' ' << c;
  os << '\n' << "backbone " << m.backbone << '\n';
  std::string header = os.str();
  if (header.size() >= kDatasetHeaderSize) throw DataError("dataset header does not fit");
  header.resize(kDatasetHeaderSize - 1, ' ');
  header.push_back('\n');
  return header;
}

std::size_t parse_size(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw CorruptHeaderError("bad value for '" + key + "': " + value);
  }
}

DatasetManifest decode_header(std::span<const char> bytes) {
  if (bytes.size() < kDatasetHeaderSize) throw CorruptHeaderError("file shorter than the header");
  if (bytes[kDatasetHeaderSize - 1] != '\n') throw CorruptHeaderError("missing header terminator");
  std::istringstream is(std::string(bytes.data(), kDatasetHeaderSize));
  std::string line;
  std::getline(is, line);
  if (line != kDatasetMagic) throw CorruptHeaderError("bad magic '" + line + "'");
  DatasetManifest m;
  bool seen_dim = false, seen_samples = false, seen_counts = false;
  while (std::getline(is, line)) {
    const auto first = line.find_first_not_of(' ');
    if (first == std::string::npos) continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    std::string rest;
    std::getline(ls, rest);
    rest.erase(0, rest.find_first_not_of(' '));
    if (key == "version") {
      m.version = static_cast<std::uint32_t>(parse_size(key, rest));
    } else if (key == "dim") {
      m.dim = parse_size(key, rest);
      seen_dim = true;
    } else if (key == "run_len") {
      m.run_len = parse_size(key, rest);
    } else if (key == "kick_len") {
      m.kick_len = parse_size(key, rest);
    } else if (key == "classes") {
      m.classes = parse_size(key, rest);
    } else if (key == "samples") {
      m.sample_count = parse_size(key, rest);
      seen_samples = true;
    } else if (key == "counts") {
      std::istringstream cs(rest);
      std::string tok;
      while (cs >> tok) m.class_counts.push_back(parse_size(key, tok));
      seen_counts = true;
    } else if (key == "backbone") {
      m.backbone = rest;
    } else {
      throw CorruptHeaderError("unknown header key '" + key + "'");
    }
  }
  if (m.version != 1) throw CorruptHeaderError("unsupported version " + std::to_string(m.version));
  if (!seen_dim || !seen_samples || !seen_counts) throw CorruptHeaderError("missing header fields");
  if (m.dim == 0 || m.run_len == 0 || m.kick_len == 0) {
    throw CorruptHeaderError("dimensions and sequence lengths must be positive");
  }
  if (m.classes != 2 && m.classes != 3) throw CorruptHeaderError("classes must be 2 or 3");
  if (m.class_counts.size() != m.classes) throw CorruptHeaderError("one count per class required");
  if (std::accumulate(m.class_counts.begin(), m.class_counts.end(), std::size_t{0}) !=
      m.sample_count) {
    throw CorruptHeaderError("per-class counts do not sum to the sample count");
  }
  return m;
}

void encode_sequence(std::string& out, const EmbeddingSequence& seq) {
  put_u32(out, static_cast<std::uint32_t>(seq.data.size()));
  for (float f : seq.data) put_f32(out, f);
}

EmbeddingSequence decode_sequence(Reader& in, Phase phase, std::size_t steps, std::size_t dim,
                                  const std::string& id) {
  const char* name = phase == Phase::run ? "run" : "kick";
  if (!in.has(4)) throw TruncatedPayloadError(std::string(name) + " sequence length", id);
  const std::uint32_t count = in.u32();
  if (count != steps * dim) {
    throw DimensionMismatchError(std::string(name) + " sequence holds " + std::to_string(count) +
                                     " floats, header declares " + std::to_string(steps) + " x " +
                                     std::to_string(dim),
                                 id);
  }
  if (!in.has(4 * static_cast<std::size_t>(count))) {
    throw TruncatedPayloadError(std::string(name) + " sequence payload", id);
  }
  EmbeddingSequence seq(phase, steps, dim);
  for (auto& f : seq.data) f = in.f32();
  return seq;
}

}  // namespace

std::string encode_dataset(const Dataset& dataset) {
  Dataset copy_counts = dataset;
  copy_counts.refresh_counts();
  const DatasetManifest& m = copy_counts.manifest;
  validate_backbone(m.backbone);
  std::string out = encode_header(m);
  for (const auto& s : dataset.samples) {
    if (s.id.empty() || s.id.size() > 255) throw DataError("sample id must have 1..255 bytes", s.id);
    if (s.run.dim != m.dim || s.kick.dim != m.dim || s.run.steps != m.run_len ||
        s.kick.steps != m.kick_len) {
      throw DimensionMismatchError("sequence shape differs from the manifest", s.id);
    }
    if (s.label >= m.classes) throw DataError("label out of range", s.id);
    put_u8(out, static_cast<std::uint8_t>(s.id.size()));
    out += s.id;
    encode_sequence(out, s.run);
    encode_sequence(out, s.kick);
    put_u8(out, s.meta.pitch_side);
    put_u8(out, s.meta.dominant_foot);
    put_u8(out, s.label);
    put_u8(out, s.gk_direction ? *s.gk_direction : kGkAbsent);
  }
  return out;
}

Dataset decode_dataset(std::span<const char> bytes) {
  Dataset ds;
  ds.manifest = decode_header(bytes);
  const auto& m = ds.manifest;
  Reader in(bytes.subspan(kDatasetHeaderSize));
  ds.samples.reserve(m.sample_count);
  std::vector<std::size_t> counts(m.classes, 0);
  for (std::size_t i = 0; i < m.sample_count; ++i) {
    const std::string fallback = "#" + std::to_string(i);
    if (!in.has(1)) throw TruncatedPayloadError("missing record", fallback);
    const std::size_t id_len = in.u8();
    if (id_len == 0) throw DataError("empty sample id", fallback);
    if (!in.has(id_len)) throw TruncatedPayloadError("sample id", fallback);
    PenaltySample s;
    s.id = in.str(id_len);
    s.run = decode_sequence(in, Phase::run, m.run_len, m.dim, s.id);
    s.kick = decode_sequence(in, Phase::kick, m.kick_len, m.dim, s.id);
    if (!in.has(4)) throw TruncatedPayloadError("metadata/label bytes", s.id);
    s.meta.pitch_side = in.u8();
    s.meta.dominant_foot = in.u8();
    s.label = in.u8();
    const std::uint8_t gk = in.u8();
    if (s.meta.pitch_side > 1 || s.meta.dominant_foot > 1) {
      throw DataError("metadata bytes must be 0 or 1", s.id);
    }
    if (s.label >= m.classes) throw DataError("label out of range", s.id);
    if (gk != kGkAbsent) {
      if (gk > 2) throw DataError("goalkeeper direction out of range", s.id);
      s.gk_direction = gk;
    }
    for (float f : s.run.data)
      if (!std::isfinite(f)) throw DataError("non-finite embedding value", s.id);
    for (float f : s.kick.data)
      if (!std::isfinite(f)) throw DataError("non-finite embedding value", s.id);
    ++counts[s.label];
    ds.samples.push_back(std::move(s));
  }
  if (in.remaining() != 0) throw DataError("trailing bytes after the last record");
  if (counts != m.class_counts) throw DataError("label counts disagree with the header");
  return ds;
}

void save_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  const std::string bytes = encode_dataset(dataset);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset '" + path.string() + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_dataset(bytes);
}

std::string manifest_sidecar(const Dataset& dataset) {
  Dataset d = dataset;
  d.refresh_counts();
  const auto& m = d.manifest;
  std::ostringstream os;
  os << "backbone       " << m.backbone << '\n'
     << "embedding_dim  " << m.dim << '\n'
     << "run_len        " << m.run_len << '\n'
     << "kick_len       " << m.kick_len << '\n'
     << "classes        " << m.classes << '\n'
     << "samples        " << m.sample_count << '\n';
  for (std::size_t k = 0; k < m.classes; ++k) {
    os << "count." << class_name(k, m.classes) << std::string(9 - class_name(k, m.classes).size(), ' ')
       << m.class_counts[k] << '\n';
  }
  std::size_t with_gk = 0;
  for (const auto& s : d.samples) with_gk += s.gk_direction.has_value();
  os << "gk_annotated   " << with_gk << '\n' << '\n';

  struct Group {
    const char* metadata;
    const char* name;
    bool (*member)(const PenaltySample&);
  };
  const Group groups[] = {
      {"Pitch side", "Right side", [](const PenaltySample& s) { return s.meta.pitch_side == 0; }},
      {"Pitch side", "Left side", [](const PenaltySample& s) { return s.meta.pitch_side == 1; }},
      {"Kicker foot", "Right-footed", [](const PenaltySample& s) { return s.meta.dominant_foot == 0; }},
      {"Kicker foot", "Left-footed", [](const PenaltySample& s) { return s.meta.dominant_foot == 1; }},
  };
  os << std::left << std::setw(12) << "Metadata" << std::setw(14) << "Group" << std::setw(7) << "n";
  for (std::size_t k = 0; k < m.classes; ++k) {
    std::string h = class_name(k, m.classes);
    h[0] = static_cast<char>(std::toupper(h[0]));
    os << std::right << std::setw(12) << (h + " (%)");
  }
  os << '\n';
  for (const auto& g : groups) {
    std::vector<std::size_t> counts(m.classes, 0);
    std::size_t n = 0;
    for (const auto& s : d.samples) {
      if (!g.member(s)) continue;
      ++n;
      ++counts[s.label];
    }
    os << std::left << std::setw(12) << g.metadata << std::setw(14) << g.name << std::setw(7) << n;
    for (std::size_t k = 0; k < m.classes; ++k) {
      std::ostringstream cell;
      if (n == 0) {
        cell << "-";
      } else {
        cell << std::fixed << std::setprecision(2)
             << 100.0 * static_cast<double>(counts[k]) / static_cast<double>(n);
      }
      os << std::right << std::setw(12) << cell.str();
    }
    os << '\n';
  }
  return os.str();
}

std::vector<std::size_t> FoldSplit::members(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i)
    if (fold_of[i] == fold) out.push_back(i);
  return out;
}

std::vector<std::size_t> FoldSplit::complement(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i)
    if (fold_of[i] != fold) out.push_back(i);
  return out;
}

FoldSplit stratified_kfold(std::span<const PenaltySample> samples, std::size_t classes,
                           std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("cross-validation needs k >= 2");
  std::vector<std::vector<std::size_t>> by_class(classes);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].label >= classes) {
      throw InvalidInputError("label out of range for sample '" + samples[i].id + "'");
    }
    by_class[samples[i].label].push_back(i);
  }
  for (std::size_t c = 0; c < classes; ++c) {
    if (by_class[c].size() < k) {
      throw FoldInfeasibleError("class '" + class_name(c, classes) + "' has " +
                                std::to_string(by_class[c].size()) + " samples, fewer than k = " +
                                std::to_string(k));
    }
  }
  Rng rng(seed);
  FoldSplit split{k, std::vector<std::size_t>(samples.size(), 0)};
  std::size_t position = 0;
  for (auto& members : by_class) {
    rng.shuffle(std::span<std::size_t>(members));
    for (std::size_t idx : members) split.fold_of[idx] = position++ % k;
  }
  return split;
}

std::vector<PenaltySample> binarize_samples(std::span<const PenaltySample> samples) {
  std::vector<PenaltySample> out;
  for (const auto& s : samples) {
    if (s.label == static_cast<std::uint8_t>(Direction::center)) continue;
    PenaltySample b = s;
    b.label = s.label == static_cast<std::uint8_t>(Direction::left) ? 0 : 1;
    if (s.gk_direction) {
      const auto gk = *s.gk_direction;
      b.gk_direction = gk == static_cast<std::uint8_t>(Direction::left)    ? 0
                       : gk == static_cast<std::uint8_t>(Direction::right) ? 1
                                                                            : 2;
    }
    out.push_back(std::move(b));
  }
  return out;
}

Dataset binarize(const Dataset& dataset) {
  if (dataset.manifest.classes == 2) return dataset;
  Dataset out;
  out.manifest = dataset.manifest;
  out.manifest.classes = 2;
  out.samples = binarize_samples(dataset.samples);
  out.refresh_counts();
  return out;
}

std::vector<double> compute_class_weights(std::span<const int> labels, std::size_t classes) {
  std::vector<double> counts(classes, 0.0);
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) throw InvalidInputError("label out of range");
    counts[static_cast<std::size_t>(y)] += 1.0;
  }
  std::vector<double> w(classes);
  double mean = 0.0;
  for (std::size_t k = 0; k < classes; ++k) {
    if (counts[k] == 0.0) {
      throw InvalidInputError("class '" + class_name(k, classes) + "' absent from training labels");
    }
    w[k] = 1.0 / counts[k];
    mean += w[k];
  }
  mean /= static_cast<double>(classes);
  for (double& v : w) v /= mean;
  return w;
}

namespace {

std::size_t draw_categorical(Rng& rng, const std::array<double, 3>& p) {
  const double u = rng.uniform() * (p[0] + p[1] + p[2]);
  if (u < p[0]) return 0;
  if (u < p[0] + p[1]) return 1;
  return 2;
}

std::array<double, 3> normalized(std::array<double, 3> p, double power = 1.0) {
  double z = 0.0;
  for (double& v : p) {
    v = std::pow(v, power);
    z += v;
  }
  for (double& v : p) v /= z;
  return p;
}

// Per-direction signature used to plant the label: dim 0 carries the lateral
// sign, dim 1 separates center from the sides.
constexpr std::array<std::array<double, 2>, 3> kDirectionCode{{{-1.0, -1.0}, {0.0, 1.0}, {1.0, -1.0}}};

}  // namespace

Dataset generate_synthetic(const SyntheticConfig& config) {
  if (config.dim < 6) throw ConfigError("synthetic generator requires dim >= 6");
  if (config.run_len == 0 || config.kick_len == 0) throw ConfigError("sequence lengths must be >= 1");
  if (config.noise_std < 0.0 || config.signal_strength < 0.0 || config.appearance_std < 0.0) {
    throw ConfigError("signal and noise levels must be non-negative");
  }
  if (!(config.gk_match_rate >= 0.0 && config.gk_match_rate <= 1.0)) {
    throw ConfigError("gk_match_rate must lie in [0, 1]");
  }
  if (!(config.metadata_sharpness > 0.0)) throw ConfigError("metadata_sharpness must be positive");

  const DirectionRates rates;
  const auto foot_rows = std::array<std::array<double, 3>, 2>{
      normalized(rates.right_foot, config.metadata_sharpness),
      normalized(rates.left_foot, config.metadata_sharpness)};
  const auto side_right = normalized(rates.right_side);
  const auto side_left = normalized(rates.left_side);
  // P(left side | direction) by Bayes over the side rows.
  std::array<double, 3> p_left_side_given{};
  for (std::size_t k = 0; k < 3; ++k) {
    const double joint_left = side_left[k] * rates.p_left_side;
    const double joint_right = side_right[k] * (1.0 - rates.p_left_side);
    p_left_side_given[k] = joint_left / (joint_left + joint_right);
  }
  const bool informative = config.signal_strength > 0.0;

  Rng rng(config.seed);
  Dataset ds;
  ds.manifest.dim = config.dim;
  ds.manifest.run_len = config.run_len;
  ds.manifest.kick_len = config.kick_len;
  ds.manifest.classes = 3;
  ds.manifest.backbone = config.backbone;
  const int width = std::max(5, static_cast<int>(std::to_string(config.num_samples).size()));
  for (std::size_t i = 0; i < config.num_samples; ++i) {
    PenaltySample s;
    std::ostringstream id;
    id << 's' << std::setw(width) << std::setfill('0') << i;
    s.id = id.str();

    std::size_t label;
    if (informative) {
      s.meta.dominant_foot = rng.bernoulli(rates.p_left_foot) ? 1 : 0;
      label = draw_categorical(rng, foot_rows[s.meta.dominant_foot]);
      s.meta.pitch_side = rng.bernoulli(p_left_side_given[label]) ? 1 : 0;
    } else {
      label = draw_categorical(rng, rates.class_prior);
      s.meta.dominant_foot = rng.bernoulli(rates.p_left_foot) ? 1 : 0;
      s.meta.pitch_side = rng.bernoulli(rates.p_left_side) ? 1 : 0;
    }
    s.label = static_cast<std::uint8_t>(label);

    if (rng.bernoulli(config.gk_match_rate)) {
      s.gk_direction = s.label;
    } else {
      const auto offset = static_cast<std::size_t>(rng.uniform_int(1, 2));
      s.gk_direction = static_cast<std::uint8_t>((label + offset) % 3);
    }

    std::vector<double> appearance(config.dim, 0.0);
    for (std::size_t d = 4; d < config.dim; ++d) appearance[d] = rng.normal(0.0, config.appearance_std);

    auto fill = [&](Phase phase, std::size_t steps, std::size_t first_dim, double scale) {
      EmbeddingSequence seq(phase, steps, config.dim);
      for (std::size_t t = 0; t < steps; ++t) {
        const double ramp = static_cast<double>(t + 1) / static_cast<double>(steps);
        for (std::size_t d = 0; d < config.dim; ++d) {
          double v = appearance[d];
          if (d == first_dim || d == first_dim + 1) {
            v += scale * config.signal_strength * kDirectionCode[label][d - first_dim] * ramp;
          }
          v += config.noise_std * rng.normal();
          seq.at(t, d) = static_cast<float>(v);
        }
      }
      return seq;
    };
    s.run = fill(Phase::run, config.run_len, 2, 0.5);
    s.kick = fill(Phase::kick, config.kick_len, 0, 1.0);
    ds.samples.push_back(std::move(s));
  }
  ds.refresh_counts();
  return ds;
}

}  // namespace mambakick
