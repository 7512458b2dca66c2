#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "protorec/data.hpp"
#include "protorec/train.hpp"

namespace protorec {

struct DataConfig {
  std::filesystem::path interactions;
  InteractionFormat format = InteractionFormat::tsv;
  std::filesystem::path attributes;
  GroupMapping groups;
};

// Cartesian grid over the filtering and regularization knobs; every other
// training setting comes from the base config.
struct SweepGrid {
  std::vector<int> k_u{kAllPrototypes};
  std::vector<double> lambda_u{0.0};
  std::vector<int> k_t{kAllPrototypes};
  std::vector<double> lambda_t{0.0};

  std::vector<TrainConfig> expand(const TrainConfig& base) const;
};

// Run configuration file (JSON):
//
//   {
//     "seed": 7,
//     "data":  {"interactions": "ratings.dat", "format": "movielens_dat",
//               "attributes": "genres.tsv",
//               "groups": {"Drama": "over", "War": "under"}},
//     "model": {"variant": "protomf", "dim": 32, "user_prototypes": 16,
//               "item_prototypes": 16, "k_u": -1, "k_t": -1},
//     "train": {"lambda_u": 0.0, "lambda_t": 0.0, "negatives": 10,
//               "learning_rate": 0.001, "epochs": 10, "batch_size": 256,
//               "weight_decay": 0.0001},
//     "sweep": {"k_u": [-1], "lambda_u": [0.0], "k_t": [-1, 25],
//               "lambda_t": [0.0, 0.003]}
//   }
//
// Every section and key is optional. Relative data paths resolve against
// the config file's directory. Unknown keys are rejected.
struct RunConfig {
  std::uint64_t seed = 0;
  DataConfig data;
  TrainConfig train;
  SweepGrid sweep;
};

RunConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

// Canonical JSON of a training config; the seed is included.
std::string canonical_json(const TrainConfig& config);

// 16 hex digits of fnv1a64(canonical_json(config)).
std::string config_hash(const TrainConfig& config);

std::string file_digest(const std::filesystem::path& path);

}  // namespace protorec
