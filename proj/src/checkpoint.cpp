#include "phnn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "phnn/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "PHN1 reader assumes a little-endian host");

namespace phnn {

using nlohmann::json;

const Checkpoint::Entry* Checkpoint::find(const std::string& name) const {
  for (const auto& e : entries) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

namespace {

json config_to_json(const ModelConfig& cfg) {
  return json{{"num_stages", cfg.num_stages},
              {"convs_per_stage", cfg.convs_per_stage},
              {"base_channels", cfg.base_channels},
              {"width_num", cfg.width_num},
              {"width_den", cfg.width_den},
              {"in_channels", cfg.in_channels},
              {"fusion_mode", to_string(cfg.fusion_mode)},
              {"kernel_size", cfg.kernel_size},
              {"seed", cfg.seed}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig cfg;
  cfg.num_stages = j.at("num_stages").get<int>();
  cfg.convs_per_stage = j.at("convs_per_stage").get<std::vector<int>>();
  cfg.base_channels = j.at("base_channels").get<std::vector<int>>();
  cfg.width_num = j.at("width_num").get<int>();
  cfg.width_den = j.at("width_den").get<int>();
  cfg.in_channels = j.at("in_channels").get<int>();
  cfg.fusion_mode = fusion_mode_from_string(j.at("fusion_mode").get<std::string>());
  cfg.kernel_size = j.at("kernel_size").get<int>();
  cfg.seed = j.at("seed").get<uint64_t>();
  return cfg;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  json header;
  header["config"] = config_to_json(ckpt.config);
  header["iteration"] = ckpt.iteration;
  header["epoch"] = ckpt.epoch;
  header["epoch_step"] = ckpt.epoch_step;
  header["epoch_seed"] = ckpt.epoch_seed;
  header["rng"] = ckpt.rng_state;
  header["beta"] = ckpt.beta ? json(*ckpt.beta) : json(nullptr);
  header["calibrated_threshold"] =
      ckpt.calibrated_threshold ? json(*ckpt.calibrated_threshold) : json(nullptr);

  json tensors = json::array();
  uint64_t offset = 0;
  for (const auto& e : ckpt.entries) {
    tensors.push_back(json{{"name", e.name}, {"shape", e.shape}, {"offset", offset}});
    offset += e.values.size() * sizeof(double);
  }
  header["tensors"] = tensors;

  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write("PHN1", 4);
  const uint16_t version = Checkpoint::kVersion;
  out.write(reinterpret_cast<const char*>(&version), 2);
  const uint32_t header_len = static_cast<uint32_t>(text.size());
  out.write(reinterpret_cast<const char*>(&header_len), 4);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& e : ckpt.entries) {
    out.write(reinterpret_cast<const char*>(e.values.data()),
              static_cast<std::streamsize>(e.values.size() * sizeof(double)));
  }
  if (!out) throw DataError("short write to checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (bytes.size() < 10 || std::memcmp(bytes.data(), "PHN1", 4) != 0) {
    throw ConfigError("checkpoint " + path.string() + ": bad magic at byte offset 0 (expected \"PHN1\")");
  }
  uint16_t version = 0;
  std::memcpy(&version, bytes.data() + 4, 2);
  if (version != Checkpoint::kVersion) {
    throw ConfigError("checkpoint " + path.string() + ": unsupported version " +
                      std::to_string(version) + " at byte offset 4");
  }
  uint32_t header_len = 0;
  std::memcpy(&header_len, bytes.data() + 6, 4);
  if (bytes.size() < 10 + static_cast<size_t>(header_len)) {
    throw ConfigError("checkpoint " + path.string() + ": truncated header at byte offset 10");
  }

  json header;
  try {
    header = json::parse(bytes.begin() + 10, bytes.begin() + 10 + header_len);
  } catch (const json::exception& e) {
    throw ConfigError("checkpoint " + path.string() + ": malformed header JSON: " + e.what());
  }

  Checkpoint ckpt;
  try {
    ckpt.config = config_from_json(header.at("config"));
    ckpt.iteration = header.at("iteration").get<uint64_t>();
    ckpt.epoch = header.at("epoch").get<uint64_t>();
    ckpt.epoch_step = header.at("epoch_step").get<uint64_t>();
    ckpt.epoch_seed = header.at("epoch_seed").get<uint64_t>();
    ckpt.rng_state = header.at("rng").get<std::string>();
    if (!header.at("beta").is_null()) ckpt.beta = header.at("beta").get<double>();
    if (!header.at("calibrated_threshold").is_null()) {
      ckpt.calibrated_threshold = header.at("calibrated_threshold").get<double>();
    }

    const size_t payload_start = 10 + header_len;
    const size_t payload_size = bytes.size() - payload_start;
    for (const auto& t : header.at("tensors")) {
      Checkpoint::Entry e;
      e.name = t.at("name").get<std::string>();
      e.shape = t.at("shape").get<Shape>();
      const uint64_t offset = t.at("offset").get<uint64_t>();
      const size_t count = static_cast<size_t>(numel_of(e.shape));
      if (offset + count * sizeof(double) > payload_size) {
        throw ConfigError("checkpoint " + path.string() + ": tensor '" + e.name +
                          "' payload exceeds file size (byte offset " +
                          std::to_string(payload_start + offset) + ")");
      }
      e.values.resize(count);
      std::memcpy(e.values.data(), bytes.data() + payload_start + offset, count * sizeof(double));
      ckpt.entries.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw ConfigError("checkpoint " + path.string() + ": header field error: " + e.what());
  }
  return ckpt;
}

void model_to_entries(const Model& model, Checkpoint& ckpt) {
  for (const auto& p : model.parameters()) {
    ckpt.entries.push_back(
        {p.name, p.tensor.shape(), {p.tensor.data().begin(), p.tensor.data().end()}});
  }
  for (int m = 1; m <= model.config().num_stages; ++m) {
    const auto& state = model.bn_state(m - 1);
    const std::string stage = "stage" + std::to_string(m);
    const int c = model.config().stage_channels(m - 1);
    auto mean = state.running_mean.empty() ? std::vector<double>(static_cast<size_t>(c), 0.0)
                                           : state.running_mean;
    auto var = state.running_var.empty() ? std::vector<double>(static_cast<size_t>(c), 0.0)
                                         : state.running_var;
    ckpt.entries.push_back({stage + ".bn.running_mean", {c}, std::move(mean)});
    ckpt.entries.push_back({stage + ".bn.running_var", {c}, std::move(var)});
    ckpt.entries.push_back(
        {stage + ".bn.count", {1}, {static_cast<double>(state.batches_seen)}});
  }
}

void entries_to_model(const Checkpoint& ckpt, Model& model) {
  for (auto& p : model.parameters()) {
    const auto* e = ckpt.find(p.name);
    if (e == nullptr) {
      throw ConfigError("checkpoint is missing parameter '" + p.name + "'");
    }
    if (e->shape != p.tensor.shape()) {
      throw ConfigError("checkpoint parameter '" + p.name + "' has shape " + shape_str(e->shape) +
                        ", model expects " + shape_str(p.tensor.shape()));
    }
    std::copy(e->values.begin(), e->values.end(), p.tensor.data_mut().begin());
  }
  for (int m = 1; m <= model.config().num_stages; ++m) {
    const std::string stage = "stage" + std::to_string(m);
    auto& state = model.bn_state(m - 1);
    const auto* mean = ckpt.find(stage + ".bn.running_mean");
    const auto* var = ckpt.find(stage + ".bn.running_var");
    const auto* count = ckpt.find(stage + ".bn.count");
    if (!mean || !var || !count) {
      throw ConfigError("checkpoint is missing batch-norm state for " + stage);
    }
    state.running_mean = mean->values;
    state.running_var = var->values;
    state.batches_seen = static_cast<long long>(count->values[0]);
  }
}

}  // namespace phnn
