#include <bit>
#include <cstdint>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "mphil/trainer.hpp"

namespace mphil {

using ordered_json = nlohmann::ordered_json;

namespace {

constexpr char kB64Alphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  while (i + 3 <= bytes.size()) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out.push_back(kB64Alphabet[(v >> 18) & 63]);
    out.push_back(kB64Alphabet[(v >> 12) & 63]);
    out.push_back(kB64Alphabet[(v >> 6) & 63]);
    out.push_back(kB64Alphabet[v & 63]);
    i += 3;
  }
  const std::size_t rest = bytes.size() - i;
  if (rest == 1) {
    const std::uint32_t v = bytes[i] << 16;
    out.push_back(kB64Alphabet[(v >> 18) & 63]);
    out.push_back(kB64Alphabet[(v >> 12) & 63]);
    out.push_back('=');
    out.push_back('=');
  } else if (rest == 2) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
    out.push_back(kB64Alphabet[(v >> 18) & 63]);
    out.push_back(kB64Alphabet[(v >> 12) & 63]);
    out.push_back(kB64Alphabet[(v >> 6) & 63]);
    out.push_back('=');
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  auto value_of = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  if (text.size() % 4 != 0) throw std::runtime_error("base64: bad payload length");
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int vals[4];
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + k];
      if (c == '=') {
        vals[k] = 0;
        ++pad;
      } else {
        vals[k] = value_of(c);
        if (vals[k] < 0) throw std::runtime_error("base64: invalid character");
        if (pad) throw std::runtime_error("base64: data after padding");
      }
    }
    const std::uint32_t v =
        (vals[0] << 18) | (vals[1] << 12) | (vals[2] << 6) | vals[3];
    out.push_back((v >> 16) & 0xff);
    if (pad < 2) out.push_back((v >> 8) & 0xff);
    if (pad < 1) out.push_back(v & 0xff);
  }
  return out;
}

/// 64-bit float payload, little-endian regardless of host order.
std::string tensor_payload(const Tensor& t) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(t.size() * 8);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto u = std::bit_cast<std::uint64_t>(t.data()[i]);
    for (int b = 0; b < 8; ++b) bytes.push_back((u >> (8 * b)) & 0xff);
  }
  return base64_encode(bytes);
}

Tensor tensor_from_payload(std::size_t rows, std::size_t cols, const std::string& b64) {
  const std::vector<std::uint8_t> bytes = base64_decode(b64);
  if (bytes.size() != rows * cols * 8) {
    throw std::runtime_error("checkpoint: tensor payload size mismatch");
  }
  std::vector<double> values(rows * cols);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint64_t u = 0;
    for (int b = 0; b < 8; ++b)
      u |= static_cast<std::uint64_t>(bytes[i * 8 + b]) << (8 * b);
    values[i] = std::bit_cast<double>(u);
  }
  return Tensor(rows, cols, std::move(values));
}

ordered_json tensor_to_json(const Tensor& t) {
  return ordered_json{{"shape", {t.rows(), t.cols()}}, {"data_b64", tensor_payload(t)}};
}

Tensor tensor_from_json(const ordered_json& j) {
  const auto& shape = j.at("shape");
  return tensor_from_payload(shape.at(0).get<std::size_t>(),
                             shape.at(1).get<std::size_t>(),
                             j.at("data_b64").get<std::string>());
}

ordered_json config_to_json(const TrainConfig& c, std::size_t feature_dim) {
  ordered_json j;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.learning_rate;
  j["k"] = c.prototypes_per_class;
  j["beta"] = c.beta;
  j["alpha"] = c.alpha;
  j["tau"] = c.tau;
  j["prune_n"] = c.prune_n;
  j["seed"] = c.seed;
  j["preset"] = to_string(c.preset);
  j["variant"] = to_string(c.variant);
  j["num_classes"] = c.num_classes;
  j["val_metric"] = to_string(c.val_metric);
  j["readout"] = c.readout == ReadoutKind::mean ? "mean" : "sum";
  j["depth_override"] = c.depth_override;
  j["hidden_override"] = c.hidden_override;
  j["proj_dim_override"] = c.proj_dim_override;
  j["feature_dim"] = feature_dim;
  return j;
}

TrainConfig config_from_json(const ordered_json& j, std::size_t& feature_dim) {
  TrainConfig c;
  c.epochs = j.at("epochs").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.prototypes_per_class = j.at("k").get<std::size_t>();
  c.beta = j.at("beta").get<double>();
  c.alpha = j.at("alpha").get<double>();
  c.tau = j.at("tau").get<double>();
  c.prune_n = j.at("prune_n").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.preset = preset_from_string(j.at("preset").get<std::string>());
  c.variant = variant_from_string(j.at("variant").get<std::string>());
  c.num_classes = j.at("num_classes").get<std::size_t>();
  c.val_metric = val_metric_from_string(j.at("val_metric").get<std::string>());
  c.readout = j.at("readout").get<std::string>() == "sum" ? ReadoutKind::sum
                                                          : ReadoutKind::mean;
  c.depth_override = j.at("depth_override").get<std::size_t>();
  c.hidden_override = j.at("hidden_override").get<std::size_t>();
  c.proj_dim_override = j.at("proj_dim_override").get<std::size_t>();
  feature_dim = j.at("feature_dim").get<std::size_t>();
  return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  ordered_json j;
  j["version"] = ckpt.version;
  j["config"] = config_to_json(ckpt.config, ckpt.params.feature_dim);
  ordered_json tensors;
  visit_params(ckpt.params, [&](const std::string& name, const Tensor& t) {
    tensors[name] = tensor_to_json(t);
  });
  j["tensors"] = std::move(tensors);
  j["bank"] = tensor_to_json(ckpt.bank.m);
  j["rng"] = ckpt.rng_state;
  j["epoch"] = ckpt.epoch;

  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("save_checkpoint: write failed on " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw std::runtime_error("load_checkpoint: " + path + ": " + e.what());
  }

  const int version = j.at("version").get<int>();
  if (version != 1) {
    throw std::runtime_error("load_checkpoint: unsupported format version " +
                             std::to_string(version) + " (this build reads version 1)");
  }

  Checkpoint ckpt;
  ckpt.version = version;
  std::size_t feature_dim = 0;
  ckpt.config = config_from_json(j.at("config"), feature_dim);

  // rebuild the parameter skeleton, then overwrite every tensor by name
  RngStream scratch(0);
  ckpt.params = make_model_params(ckpt.config, feature_dim, scratch);
  const auto& tensors = j.at("tensors");
  visit_params(ckpt.params, [&](const std::string& name, Tensor& t) {
    const Tensor loaded = tensor_from_json(tensors.at(name));
    if (!loaded.same_shape(t)) {
      throw std::runtime_error("load_checkpoint: tensor " + name + " has shape " +
                               loaded.shape_str() + ", expected " + t.shape_str());
    }
    t = loaded;
  });

  ckpt.bank.num_classes = ckpt.config.num_classes;
  ckpt.bank.per_class = ckpt.config.effective_k();
  ckpt.bank.dim = ckpt.params.bank_dim;
  ckpt.bank.m = tensor_from_json(j.at("bank"));
  if (ckpt.bank.m.rows() != ckpt.bank.num_classes * ckpt.bank.per_class ||
      ckpt.bank.m.cols() != ckpt.bank.dim) {
    throw std::runtime_error("load_checkpoint: bank shape " + ckpt.bank.m.shape_str() +
                             " inconsistent with config");
  }
  ckpt.rng_state = j.at("rng").get<std::string>();
  ckpt.epoch = j.at("epoch").get<std::size_t>();
  return ckpt;
}

}  // namespace mphil
