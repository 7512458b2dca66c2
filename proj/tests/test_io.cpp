#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "protorec/checkpoint.hpp"
#include "protorec/config.hpp"
#include "protorec/errors.hpp"
#include "protorec/seed.hpp"

using namespace protorec;
namespace fs = std::filesystem;

TEST(FormatDouble, ShortestRoundTrip) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 1e308, 0.0, -0.0, 123456789.125,
                   std::numeric_limits<double>::denorm_min()}) {
    const auto s = format_double(v);
    EXPECT_EQ(std::strtod(s.c_str(), nullptr), v) << s;
  }
  EXPECT_EQ(format_double(0.5), "0.5");
}

TEST(Checkpoint, RoundTripReproducesScores) {
  for (Variant v : {Variant::mf, Variant::protomf}) {
    Checkpoint c{init_params({v, 7, 9, 5, 3, 4}, 12), {2, kAllPrototypes}, "00ff00ff00ff00ff"};
    std::stringstream buf;
    write_checkpoint(buf, c);
    const auto back = read_checkpoint(buf);
    EXPECT_EQ(back, c);
    for (std::uint32_t t = 0; t < 9; ++t)
      EXPECT_EQ(affinity(back.params, 3, t, back.filter), affinity(c.params, 3, t, c.filter));
  }
}

TEST(Checkpoint, RejectsCorruptInput) {
  Checkpoint c{init_params({Variant::protomf, 2, 2, 2, 2, 2}, 1), {}, "-"};
  std::stringstream buf;
  write_checkpoint(buf, c);
  const auto text = buf.str();
  auto read_text = [](const std::string& t) {
    std::istringstream in(t);
    return read_checkpoint(in);
  };
  EXPECT_THROW(read_text("not a checkpoint\n"), DataError);
  EXPECT_THROW(read_text(text.substr(0, text.size() / 2)), DataError);
  std::string bad_version = text;
  bad_version.replace(bad_version.find(" 1\n"), 3, " 9\n");
  EXPECT_THROW(read_text(bad_version), DataError);
  EXPECT_THROW(load_checkpoint("/nonexistent/ckpt.txt"), DataError);
}

TEST(Seeds, DerivationIsKeyedAndStable) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cull);
  EXPECT_EQ(derive_seed(1, "init"), derive_seed(1, "init"));
  EXPECT_NE(derive_seed(1, "init"), derive_seed(2, "init"));
  EXPECT_NE(derive_seed(1, "init"), derive_seed(1, "train/shuffle"));
}

TEST(Config, ParsesAllSections) {
  const auto cfg = parse_config(R"({
    "seed": 7,
    "data": {"interactions": "r.dat", "format": "movielens_dat", "attributes": "/abs/g.tsv",
             "groups": {"Drama": "over", "War": "under"}},
    "model": {"variant": "protomf", "dim": 12, "user_prototypes": 5, "item_prototypes": 6,
              "k_u": -1, "k_t": 3},
    "train": {"lambda_u": 0.5, "lambda_t": 0.003, "negatives": 4, "learning_rate": 0.01,
              "epochs": 3, "batch_size": 32, "weight_decay": 0.0},
    "sweep": {"k_t": [-1, 25], "lambda_t": [0.0, 0.003]}
  })", "/base");
  EXPECT_EQ(cfg.seed, 7u);
  EXPECT_EQ(cfg.train.seed, 7u);
  EXPECT_EQ(cfg.data.interactions, fs::path("/base/r.dat"));
  EXPECT_EQ(cfg.data.attributes, fs::path("/abs/g.tsv"));
  EXPECT_EQ(cfg.data.format, InteractionFormat::movielens_dat);
  EXPECT_EQ(cfg.data.groups.at("War"), Group::under);
  EXPECT_EQ(cfg.train.dim, 12u);
  EXPECT_EQ(cfg.train.filter, (FilterSpec{kAllPrototypes, 3}));
  EXPECT_EQ(cfg.train.n_negatives, 4u);
  EXPECT_EQ(cfg.train.lambda_t, 0.003);
  const auto grid = cfg.sweep.expand(cfg.train);
  ASSERT_EQ(grid.size(), 4u);
  EXPECT_EQ(grid[3].filter.k_t, 25);
  EXPECT_EQ(grid[3].lambda_t, 0.003);
  EXPECT_EQ(grid[3].dim, 12u);
}

TEST(Config, RejectsBadInput) {
  EXPECT_THROW(parse_config("{"), UsageError);
  EXPECT_THROW(parse_config(R"({"trian": {}})"), UsageError);
  EXPECT_THROW(parse_config(R"({"model": {"dims": 3}})"), UsageError);
  EXPECT_THROW(parse_config(R"({"model": {"variant": "svd"}})"), UsageError);
  EXPECT_THROW(parse_config(R"({"train": {"epochs": "ten"}})"), UsageError);
  EXPECT_THROW(load_config("/nonexistent/run.json"), UsageError);
}

TEST(Config, HashTracksEveryField) {
  TrainConfig a;
  const auto h = config_hash(a);
  EXPECT_EQ(h.size(), 16u);
  EXPECT_EQ(h, config_hash(a));
  auto b = a;
  b.filter.k_t = 2;
  EXPECT_NE(config_hash(b), h);
  b = a;
  b.seed = 1;
  EXPECT_NE(config_hash(b), h);
  b = a;
  b.lambda_u = 1e-9;
  EXPECT_NE(config_hash(b), h);
}

TEST(Config, FileDigest) {
  const auto path = fs::temp_directory_path() / "protorec_digest.txt";
  std::ofstream(path) << "a";
  EXPECT_EQ(file_digest(path), "fnv1a64:af63dc4c8601ec8c");
  fs::remove(path);
  EXPECT_THROW(file_digest(path), DataError);
}
