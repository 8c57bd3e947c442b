#include "mambakick/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <map>

namespace mambakick {

namespace {

template <class E>
struct EnumName {
  E value;
  const char* name;
};

constexpr EnumName<ClassWeighting> kWeighting[] = {
    {ClassWeighting::inverse_frequency, "inverse_frequency"}, {ClassWeighting::none, "none"}};
constexpr EnumName<LossNormalization> kNormalization[] = {
    {LossNormalization::weight_sum, "weight_sum"}, {LossNormalization::batch_mean, "batch_mean"}};
constexpr EnumName<ScanMethod> kScan[] = {{ScanMethod::recurrent, "recurrent"},
                                          {ScanMethod::parallel, "parallel"}};
constexpr EnumName<AblationMode> kAblation[] = {{AblationMode::zero, "zero"},
                                                {AblationMode::narrow, "narrow"}};

template <class E, std::size_t N>
const char* name_of(const EnumName<E> (&table)[N], E v) {
  for (const auto& e : table)
    if (e.value == v) return e.name;
  return "?";
}

template <class E, std::size_t N>
E parse_enum(const EnumName<E> (&table)[N], const std::string& text, const std::string& key) {
  for (const auto& e : table)
    if (text == e.name) return e.value;
  std::string allowed;
  for (const auto& e : table) allowed += std::string(allowed.empty() ? "" : ", ") + e.name;
  throw ConfigError(key + ": '" + text + "' is not one of {" + allowed + "}");
}

std::size_t parse_size(const std::string& text, const std::string& key) {
  const auto v = parse_int(text, key);
  if (v < 0) throw ConfigError(key + " must be non-negative");
  return static_cast<std::size_t>(v);
}

using Setter = std::function<void(TrainConfig&, const std::string&, const std::string&)>;

template <class T>
Setter field(T TrainConfig::*member) {
  return [member](TrainConfig& c, const std::string& v, const std::string& key) {
    if constexpr (std::is_same_v<T, double>) {
      c.*member = parse_double(v, key);
    } else if constexpr (std::is_same_v<T, bool>) {
      c.*member = parse_bool(v, key);
    } else if constexpr (std::is_same_v<T, std::uint64_t>) {
      const auto s = parse_int(v, key);
      if (s < 0) throw ConfigError(key + " must be non-negative");
      c.*member = static_cast<std::uint64_t>(s);
    } else {
      c.*member = parse_size(v, key);
    }
  };
}

template <class T>
Setter aug_field(T AugmentConfig::*member) {
  return [member](TrainConfig& c, const std::string& v, const std::string& key) {
    if constexpr (std::is_same_v<T, double>) {
      c.augment.*member = parse_double(v, key);
    } else {
      c.augment.*member = static_cast<int>(parse_int(v, key));
    }
  };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"batch_size", field(&TrainConfig::batch_size)},
      {"max_epochs", field(&TrainConfig::max_epochs)},
      {"patience", field(&TrainConfig::patience)},
      {"lr", field(&TrainConfig::lr)},
      {"weight_decay", field(&TrainConfig::weight_decay)},
      {"clip_norm", field(&TrainConfig::clip_norm)},
      {"label_smoothing", field(&TrainConfig::label_smoothing)},
      {"warmup_frac", field(&TrainConfig::warmup_frac)},
      {"adam_beta1", field(&TrainConfig::adam_beta1)},
      {"adam_beta2", field(&TrainConfig::adam_beta2)},
      {"adam_eps", field(&TrainConfig::adam_eps)},
      {"seed", field(&TrainConfig::seed)},
      {"folds", field(&TrainConfig::folds)},
      {"class_weighting",
       [](TrainConfig& c, const std::string& v, const std::string& k) {
         c.class_weighting = parse_enum(kWeighting, v, k);
       }},
      {"loss_normalization",
       [](TrainConfig& c, const std::string& v, const std::string& k) {
         c.loss_normalization = parse_enum(kNormalization, v, k);
       }},
      {"d_model", field(&TrainConfig::d_model)},
      {"state_size", field(&TrainConfig::state_size)},
      {"num_layers", field(&TrainConfig::num_layers)},
      {"expand", field(&TrainConfig::expand)},
      {"conv_width", field(&TrainConfig::conv_width)},
      {"use_conv", field(&TrainConfig::use_conv)},
      {"scan_method",
       [](TrainConfig& c, const std::string& v, const std::string& k) {
         c.scan_method = parse_enum(kScan, v, k);
       }},
      {"meta_dim", field(&TrainConfig::meta_dim)},
      {"fusion_hidden", field(&TrainConfig::fusion_hidden)},
      {"dropout", field(&TrainConfig::dropout)},
      {"bn_eps", field(&TrainConfig::bn_eps)},
      {"bn_momentum", field(&TrainConfig::bn_momentum)},
      {"ablation_mode",
       [](TrainConfig& c, const std::string& v, const std::string& k) {
         c.ablation_mode = parse_enum(kAblation, v, k);
       }},
      {"augment.enabled", field(&TrainConfig::augment_enabled)},
      {"augment.apply_prob", aug_field(&AugmentConfig::apply_prob)},
      {"augment.temporal_mask_max_frac", aug_field(&AugmentConfig::temporal_mask_max_frac)},
      {"augment.temporal_shift_max", aug_field(&AugmentConfig::temporal_shift_max)},
      {"augment.frame_dropout", aug_field(&AugmentConfig::frame_dropout)},
      {"augment.gaussian_noise_std", aug_field(&AugmentConfig::gaussian_noise_std)},
      {"augment.magnitude_jitter_std", aug_field(&AugmentConfig::magnitude_jitter_std)},
      {"augment.feature_dropout", aug_field(&AugmentConfig::feature_dropout)},
      {"augment.metadata_noise_std", aug_field(&AugmentConfig::metadata_noise_std)},
  };
  return table;
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2 (batch normalization)");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be finite and >= 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be > 0");
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) {
    throw ConfigError("label_smoothing must lie in [0, 1)");
  }
  if (!(warmup_frac >= 0.0 && warmup_frac < 1.0)) throw ConfigError("warmup_frac must lie in [0, 1)");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be > 0");
  if (folds < 2) throw ConfigError("folds must be >= 2");
  if (state_size < 1 || num_layers < 1 || expand < 1) {
    throw ConfigError("state_size, num_layers and expand must be >= 1");
  }
  if (use_conv && conv_width < 1) throw ConfigError("conv_width must be >= 1");
  if (meta_dim < 1 || fusion_hidden < 1) throw ConfigError("meta_dim and fusion_hidden must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (!(bn_eps > 0.0)) throw ConfigError("bn_eps must be > 0");
  if (!(bn_momentum >= 0.0 && bn_momentum <= 1.0)) throw ConfigError("bn_momentum must lie in [0, 1]");
  augment.validate();
}

std::size_t TrainConfig::resolved_width(std::size_t input_dim) const {
  if (d_model != 0) return d_model;
  return std::min<std::size_t>(128, std::max<std::size_t>(16, input_dim / 4));
}

ModelOptions TrainConfig::model_options(std::size_t input_dim, std::size_t classes,
                                        BranchSet branches) const {
  ModelOptions o;
  o.encoder.input_dim = input_dim;
  o.encoder.width = resolved_width(input_dim);
  o.encoder.state_size = state_size;
  o.encoder.num_layers = num_layers;
  o.encoder.expand = expand;
  o.encoder.conv_width = conv_width;
  o.encoder.use_conv = use_conv;
  o.encoder.scan = scan_method;
  o.meta_dim = meta_dim;
  o.fusion_hidden = fusion_hidden;
  o.classes = classes;
  o.dropout = dropout;
  o.bn_eps = bn_eps;
  o.bn_momentum = bn_momentum;
  o.branches = branches;
  o.ablation = ablation_mode;
  return o;
}

KeyValues TrainConfig::to_kv() const {
  KeyValues kv;
  kv.set("batch_size", batch_size);
  kv.set("max_epochs", max_epochs);
  kv.set("patience", patience);
  kv.set("lr", lr);
  kv.set("weight_decay", weight_decay);
  kv.set("clip_norm", clip_norm);
  kv.set("label_smoothing", label_smoothing);
  kv.set("warmup_frac", warmup_frac);
  kv.set("adam_beta1", adam_beta1);
  kv.set("adam_beta2", adam_beta2);
  kv.set("adam_eps", adam_eps);
  kv.set("seed", std::to_string(seed));
  kv.set("folds", folds);
  kv.set("class_weighting", name_of(kWeighting, class_weighting));
  kv.set("loss_normalization", name_of(kNormalization, loss_normalization));
  kv.set("d_model", d_model);
  kv.set("state_size", state_size);
  kv.set("num_layers", num_layers);
  kv.set("expand", expand);
  kv.set("conv_width", conv_width);
  kv.set("use_conv", use_conv);
  kv.set("scan_method", name_of(kScan, scan_method));
  kv.set("meta_dim", meta_dim);
  kv.set("fusion_hidden", fusion_hidden);
  kv.set("dropout", dropout);
  kv.set("bn_eps", bn_eps);
  kv.set("bn_momentum", bn_momentum);
  kv.set("ablation_mode", name_of(kAblation, ablation_mode));
  kv.set("augment.enabled", augment_enabled);
  kv.set("augment.apply_prob", augment.apply_prob);
  kv.set("augment.temporal_mask_max_frac", augment.temporal_mask_max_frac);
  kv.set("augment.temporal_shift_max", augment.temporal_shift_max);
  kv.set("augment.frame_dropout", augment.frame_dropout);
  kv.set("augment.gaussian_noise_std", augment.gaussian_noise_std);
  kv.set("augment.magnitude_jitter_std", augment.magnitude_jitter_std);
  kv.set("augment.feature_dropout", augment.feature_dropout);
  kv.set("augment.metadata_noise_std", augment.metadata_noise_std);
  return kv;
}

TrainConfig TrainConfig::from_kv(const KeyValues& kv) {
  TrainConfig c;
  const auto& table = setters();
  for (const auto& [key, value] : kv.entries()) {
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second(c, value, key);
  }
  c.validate();
  return c;
}

TrainConfig TrainConfig::parse(const std::string& text) { return from_kv(KeyValues::parse(text, "config")); }

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const DataError&) {
    throw ConfigError("cannot read config file '" + path.string() + "'");
  }
  return from_kv(KeyValues::parse(text, path.string()));
}

TrainConfig resolve_config(const std::string& explicit_path) {
  if (!explicit_path.empty()) return TrainConfig::load(explicit_path);
  if (const char* env = std::getenv(kConfigEnvVar); env && *env) return TrainConfig::load(env);
  return TrainConfig{};
}

}  // namespace mambakick
