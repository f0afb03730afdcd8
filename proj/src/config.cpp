#include "phnn/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "phnn/error.hpp"

namespace phnn {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<int> parse_int_list(const std::string& s, const std::string& key) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoi(trim(item)));
    } catch (...) {
      throw ConfigError("config: bad integer '" + item + "' in " + key);
    }
  }
  if (out.empty()) throw ConfigError("config: empty list for " + key);
  return out;
}

std::vector<double> parse_double_list(const std::string& s, const std::string& key) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(trim(item)));
    } catch (...) {
      throw ConfigError("config: bad number '" + item + "' in " + key);
    }
  }
  return out;
}

int to_int(const std::string& v, const std::string& key) {
  try {
    return std::stoi(v);
  } catch (...) {
    throw ConfigError("config: bad integer '" + v + "' for " + key);
  }
}

double to_double(const std::string& v, const std::string& key) {
  try {
    return std::stod(v);
  } catch (...) {
    throw ConfigError("config: bad number '" + v + "' for " + key);
  }
}

uint64_t to_u64(const std::string& v, const std::string& key) {
  try {
    return std::stoull(v);
  } catch (...) {
    throw ConfigError("config: bad integer '" + v + "' for " + key);
  }
}

}  // namespace

std::map<std::string, std::string> read_kv_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config " + path.string() + " line " + std::to_string(line_no) +
                        ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) {
      throw ConfigError("config " + path.string() + " line " + std::to_string(line_no) +
                        ": empty key");
    }
    if (kv.count(key)) {
      throw ConfigError("config " + path.string() + " line " + std::to_string(line_no) +
                        ": duplicate key '" + key + "'");
    }
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

TrainConfig parse_train_config(const std::filesystem::path& path) {
  auto kv = read_kv_file(path);
  TrainConfig cfg;

  auto take = [&](const char* key) -> std::optional<std::string> {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    std::string v = it->second;
    kv.erase(it);
    return v;
  };

  if (auto v = take("num_stages")) cfg.model.num_stages = to_int(*v, "num_stages");
  if (auto v = take("convs_per_stage")) cfg.model.convs_per_stage = parse_int_list(*v, "convs_per_stage");
  if (auto v = take("base_channels")) cfg.model.base_channels = parse_int_list(*v, "base_channels");
  if (auto v = take("width_multiplier")) {
    const auto slash = v->find('/');
    if (slash == std::string::npos) {
      throw ConfigError("config: width_multiplier must be a rational like 1/8");
    }
    cfg.model.width_num = to_int(trim(v->substr(0, slash)), "width_multiplier");
    cfg.model.width_den = to_int(trim(v->substr(slash + 1)), "width_multiplier");
  }
  if (auto v = take("in_channels")) cfg.model.in_channels = to_int(*v, "in_channels");
  if (auto v = take("fusion_mode")) cfg.model.fusion_mode = fusion_mode_from_string(*v);
  if (auto v = take("kernel_size")) cfg.model.kernel_size = to_int(*v, "kernel_size");
  if (auto v = take("seed")) {
    cfg.seed = to_u64(*v, "seed");
    cfg.model.seed = cfg.seed;
  }

  if (auto v = take("lr")) cfg.lr = to_double(*v, "lr");
  if (auto v = take("momentum")) cfg.momentum = to_double(*v, "momentum");
  if (auto v = take("batch_size")) cfg.batch_size = to_int(*v, "batch_size");
  if (auto v = take("epochs")) cfg.epochs = to_double(*v, "epochs");
  if (auto v = take("max_steps")) cfg.max_steps = to_u64(*v, "max_steps");
  if (auto v = take("folds")) cfg.folds = to_int(*v, "folds");
  if (auto v = take("val_fraction")) cfg.val_fraction = to_double(*v, "val_fraction");
  if (auto v = take("large_dataset")) cfg.large_dataset_id = *v;
  if (auto v = take("threshold_grid")) cfg.threshold_grid = parse_double_list(*v, "threshold_grid");

  // slice_stride.<dataset_id>=<n>
  for (auto it = kv.begin(); it != kv.end();) {
    if (it->first.rfind("slice_stride.", 0) == 0) {
      const std::string dataset = it->first.substr(13);
      if (dataset.empty()) throw ConfigError("config: slice_stride key needs a dataset_id");
      cfg.slice_stride[dataset] = to_int(it->second, it->first);
      it = kv.erase(it);
    } else {
      ++it;
    }
  }

  if (!kv.empty()) {
    throw ConfigError("config " + path.string() + ": unknown key '" + kv.begin()->first + "'");
  }
  cfg.validate();
  return cfg;
}

}  // namespace phnn
