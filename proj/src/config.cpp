#include "protorec/config.hpp"

#include <fstream>
#include <sstream>

#include <fmt/core.h>
#include <json.hpp>

#include "protorec/errors.hpp"
#include "protorec/seed.hpp"

namespace protorec {

using nlohmann::json;

std::vector<TrainConfig> SweepGrid::expand(const TrainConfig& base) const {
  std::vector<TrainConfig> out;
  for (int ku : k_u)
    for (double lu : lambda_u)
      for (int kt : k_t)
        for (double lt : lambda_t) {
          TrainConfig c = base;
          c.filter = {ku, kt};
          c.lambda_u = lu;
          c.lambda_t = lt;
          out.push_back(c);
        }
  return out;
}

namespace {

void reject_unknown(const json& obj, std::initializer_list<std::string_view> known,
                    std::string_view where) {
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (auto k : known) ok = ok || key == k;
    if (!ok) throw UsageError(fmt::format("config: unknown key '{}' in {}", key, where));
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  if (path.empty() || path.is_absolute() || base.empty()) return path;
  return base / path;
}

}  // namespace

RunConfig parse_config(std::string_view text, const std::filesystem::path& base_dir) {
  RunConfig cfg;
  try {
    const json root = json::parse(text);
    if (!root.is_object()) throw UsageError("config: top level must be an object");
    reject_unknown(root, {"seed", "data", "model", "train", "sweep"}, "config");
    read(root, "seed", cfg.seed);
    if (root.contains("data")) {
      const auto& d = root.at("data");
      reject_unknown(d, {"interactions", "format", "attributes", "groups"}, "data");
      if (d.contains("interactions"))
        cfg.data.interactions = resolve(base_dir, d.at("interactions").get<std::string>());
      if (d.contains("format")) cfg.data.format = parse_format(d.at("format").get<std::string>());
      if (d.contains("attributes"))
        cfg.data.attributes = resolve(base_dir, d.at("attributes").get<std::string>());
      if (d.contains("groups"))
        for (const auto& [raw, label] : d.at("groups").items())
          cfg.data.groups[raw] = parse_group(label.get<std::string>());
    }
    auto& t = cfg.train;
    if (root.contains("model")) {
      const auto& m = root.at("model");
      reject_unknown(m, {"variant", "dim", "user_prototypes", "item_prototypes", "k_u", "k_t"},
                     "model");
      if (m.contains("variant")) t.variant = parse_variant(m.at("variant").get<std::string>());
      read(m, "dim", t.dim);
      read(m, "user_prototypes", t.user_prototypes);
      read(m, "item_prototypes", t.item_prototypes);
      read(m, "k_u", t.filter.k_u);
      read(m, "k_t", t.filter.k_t);
    }
    if (root.contains("train")) {
      const auto& tr = root.at("train");
      reject_unknown(tr,
                     {"lambda_u", "lambda_t", "negatives", "learning_rate", "epochs",
                      "batch_size", "weight_decay"},
                     "train");
      read(tr, "lambda_u", t.lambda_u);
      read(tr, "lambda_t", t.lambda_t);
      read(tr, "negatives", t.n_negatives);
      read(tr, "learning_rate", t.learning_rate);
      read(tr, "epochs", t.epochs);
      read(tr, "batch_size", t.batch_size);
      read(tr, "weight_decay", t.weight_decay);
    }
    if (root.contains("sweep")) {
      const auto& s = root.at("sweep");
      reject_unknown(s, {"k_u", "lambda_u", "k_t", "lambda_t"}, "sweep");
      read(s, "k_u", cfg.sweep.k_u);
      read(s, "lambda_u", cfg.sweep.lambda_u);
      read(s, "k_t", cfg.sweep.k_t);
      read(s, "lambda_t", cfg.sweep.lambda_t);
    }
  } catch (const json::exception& e) {
    throw UsageError(fmt::format("config: {}", e.what()));
  }
  cfg.train.seed = cfg.seed;
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError(fmt::format("cannot open config {}", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

std::string canonical_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["variant"] = std::string(to_string(c.variant));
  j["dim"] = c.dim;
  j["user_prototypes"] = c.user_prototypes;
  j["item_prototypes"] = c.item_prototypes;
  j["k_u"] = c.filter.k_u;
  j["k_t"] = c.filter.k_t;
  j["lambda_u"] = c.lambda_u;
  j["lambda_t"] = c.lambda_t;
  j["negatives"] = c.n_negatives;
  j["learning_rate"] = c.learning_rate;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["weight_decay"] = c.weight_decay;
  j["seed"] = c.seed;
  return j.dump();
}

std::string config_hash(const TrainConfig& c) {
  return fmt::format("{:016x}", fnv1a64(canonical_json(c)));
}

std::string file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open {}", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return fmt::format("fnv1a64:{:016x}", fnv1a64(ss.str()));
}

}  // namespace protorec
