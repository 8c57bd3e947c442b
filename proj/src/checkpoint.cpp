#include "mambakick/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include <json.hpp>

namespace mambakick {

using nlohmann::json;

namespace {

const char* scan_name(ScanMethod m) { return m == ScanMethod::parallel ? "parallel" : "recurrent"; }

json options_to_json(const ModelOptions& o) {
  return {
      {"input_dim", o.encoder.input_dim},
      {"width", o.encoder.width},
      {"state_size", o.encoder.state_size},
      {"num_layers", o.encoder.num_layers},
      {"expand", o.encoder.expand},
      {"conv_width", o.encoder.conv_width},
      {"use_conv", o.encoder.use_conv},
      {"scan", scan_name(o.encoder.scan)},
      {"meta_dim", o.meta_dim},
      {"fusion_hidden", o.fusion_hidden},
      {"classes", o.classes},
      {"dropout", o.dropout},
      {"bn_eps", o.bn_eps},
      {"bn_momentum", o.bn_momentum},
      {"branches", {{"run", o.branches.run}, {"kick", o.branches.kick}, {"meta", o.branches.meta}}},
      {"ablation", o.ablation == AblationMode::zero ? "zero" : "narrow"},
  };
}

ModelOptions options_from_json(const json& j) {
  ModelOptions o;
  o.encoder.input_dim = j.at("input_dim").get<std::size_t>();
  o.encoder.width = j.at("width").get<std::size_t>();
  o.encoder.state_size = j.at("state_size").get<std::size_t>();
  o.encoder.num_layers = j.at("num_layers").get<std::size_t>();
  o.encoder.expand = j.at("expand").get<std::size_t>();
  o.encoder.conv_width = j.at("conv_width").get<std::size_t>();
  o.encoder.use_conv = j.at("use_conv").get<bool>();
  o.encoder.scan = j.at("scan").get<std::string>() == "parallel" ? ScanMethod::parallel
                                                                  : ScanMethod::recurrent;
  o.meta_dim = j.at("meta_dim").get<std::size_t>();
  o.fusion_hidden = j.at("fusion_hidden").get<std::size_t>();
  o.classes = j.at("classes").get<std::size_t>();
  o.dropout = j.at("dropout").get<double>();
  o.bn_eps = j.at("bn_eps").get<double>();
  o.bn_momentum = j.at("bn_momentum").get<double>();
  const auto& b = j.at("branches");
  o.branches = {b.at("run").get<bool>(), b.at("kick").get<bool>(), b.at("meta").get<bool>()};
  o.ablation = j.at("ablation").get<std::string>() == "narrow" ? AblationMode::narrow : AblationMode::zero;
  return o;
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_tensor(std::string& out, const std::string& name, std::span<const double> values) {
  put_u64(out, name.size());
  out += name;
  put_u64(out, values.size());
  for (double v : values) put_u64(out, std::bit_cast<std::uint64_t>(v));
}

struct Cursor {
  std::span<const char> bytes;
  std::size_t pos = 0;

  void need(std::size_t n, const char* what) const {
    if (pos + n > bytes.size()) throw DataError(std::string("checkpoint truncated in ") + what);
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos++])) << (8 * i);
    }
    return v;
  }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(bytes.data() + pos, n);
    pos += n;
    return s;
  }
};

}  // namespace

Checkpoint make_checkpoint(const FoldTrainResult& result, const TrainConfig& config) {
  Checkpoint c;
  c.model = result.model;
  c.optimizer = result.optimizer;
  c.config = config;
  c.history = result.history;
  c.class_weights = result.class_weights;
  c.best_epoch = result.best_epoch;
  c.stopped_epoch = result.stopped_epoch;
  return c;
}

std::string encode_checkpoint(Checkpoint& ck) {
  ParamList params, buffers;
  ck.model.collect("", params);
  ck.model.collect_buffers("", buffers);
  if (!ck.optimizer.m.empty() && ck.optimizer.m.size() != params.size()) {
    throw ShapeError("optimizer state does not match the model");
  }

  json meta;
  meta["model"] = options_to_json(ck.model.options);
  meta["config"] = ck.config.to_text();
  meta["optimizer_step"] = ck.optimizer.step;
  meta["has_moments"] = !ck.optimizer.m.empty();
  meta["best_epoch"] = ck.best_epoch;
  meta["stopped_epoch"] = ck.stopped_epoch;
  meta["class_weights"] = ck.class_weights;
  json hist = json::array();
  for (const auto& r : ck.history) {
    hist.push_back({r.epoch, r.train_loss, r.val_loss, r.val_accuracy, r.lr});
  }
  meta["history"] = hist;
  const std::string meta_text = meta.dump();

  std::string out = kCheckpointMagic;
  put_u64(out, meta_text.size());
  out += meta_text;
  const bool moments = !ck.optimizer.m.empty();
  put_u64(out, params.size() + buffers.size() + (moments ? 2 * params.size() : 0));
  for (const auto& p : params) put_tensor(out, "param/" + p.name, p.values);
  for (const auto& b : buffers) put_tensor(out, "buffer/" + b.name, b.values);
  if (moments) {
    for (std::size_t i = 0; i < params.size(); ++i) put_tensor(out, "adam_m/" + params[i].name, ck.optimizer.m[i]);
    for (std::size_t i = 0; i < params.size(); ++i) put_tensor(out, "adam_v/" + params[i].name, ck.optimizer.v[i]);
  }
  return out;
}

Checkpoint decode_checkpoint(std::span<const char> bytes) {
  const std::string magic = kCheckpointMagic;
  if (bytes.size() < magic.size() || std::memcmp(bytes.data(), magic.data(), magic.size()) != 0) {
    throw DataError("not a checkpoint file (bad magic)");
  }
  Cursor cur{bytes, magic.size()};
  const std::uint64_t meta_len = cur.u64("metadata length");
  json meta;
  try {
    meta = json::parse(cur.str(meta_len, "metadata"));
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint metadata is not valid JSON: ") + e.what());
  }

  Checkpoint ck;
  try {
    ck.model = ModelBundle(options_from_json(meta.at("model")));
    ck.config = TrainConfig::parse(meta.at("config").get<std::string>());
    ck.optimizer.step = meta.at("optimizer_step").get<std::int64_t>();
    ck.best_epoch = meta.at("best_epoch").get<std::size_t>();
    ck.stopped_epoch = meta.at("stopped_epoch").get<std::size_t>();
    ck.class_weights = meta.at("class_weights").get<std::vector<double>>();
    for (const auto& r : meta.at("history")) {
      ck.history.push_back({r.at(0).get<std::size_t>(), r.at(1).get<double>(), r.at(2).get<double>(),
                            r.at(3).get<double>(), r.at(4).get<double>()});
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint metadata incomplete: ") + e.what());
  }

  ParamList params, buffers;
  ck.model.collect("", params);
  ck.model.collect_buffers("", buffers);
  const bool moments = meta.value("has_moments", false);
  if (moments) ck.optimizer = [&] {
    OptimizerState s = make_optimizer_state(params);
    s.step = ck.optimizer.step;
    return s;
  }();

  std::map<std::string, std::span<double>> slots;
  for (const auto& p : params) slots["param/" + p.name] = p.values;
  for (const auto& b : buffers) slots["buffer/" + b.name] = b.values;
  if (moments) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      slots["adam_m/" + params[i].name] = ck.optimizer.m[i];
      slots["adam_v/" + params[i].name] = ck.optimizer.v[i];
    }
  }

  const std::uint64_t count = cur.u64("tensor count");
  if (count != slots.size()) throw DataError("checkpoint tensor count does not match the model");
  for (std::uint64_t t = 0; t < count; ++t) {
    const std::string name = cur.str(cur.u64("tensor name"), "tensor name");
    const auto it = slots.find(name);
    if (it == slots.end()) throw DataError("unexpected tensor '" + name + "' in checkpoint");
    const std::uint64_t n = cur.u64("tensor size");
    if (n != it->second.size()) {
      throw DataError("tensor '" + name + "' holds " + std::to_string(n) + " values, model expects " +
                      std::to_string(it->second.size()));
    }
    cur.need(8 * n, "tensor payload");
    for (auto& v : it->second) v = std::bit_cast<double>(cur.u64("tensor payload"));
    slots.erase(it);
  }
  if (cur.pos != bytes.size()) throw DataError("trailing bytes after checkpoint tensors");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, Checkpoint& checkpoint) {
  const std::string bytes = encode_checkpoint(checkpoint);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing checkpoint '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace mambakick
