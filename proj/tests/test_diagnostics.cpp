#include <gtest/gtest.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "protorec/diagnostics.hpp"
#include "protorec/errors.hpp"
#include "protorec/synthetic.hpp"
#include "protorec/train.hpp"

using namespace protorec;

namespace {

Matrix rows(std::initializer_list<std::vector<double>> r) {
  Matrix m(r.size(), r.begin()->size());
  std::size_t i = 0;
  for (const auto& row : r) {
    for (std::size_t j = 0; j < row.size(); ++j) m(i, j) = row[j];
    ++i;
  }
  return m;
}

Dataset one_item_dataset() {
  std::istringstream in("u\ti\n");
  return read_interactions(in, InteractionFormat::tsv);
}

ModelParams with_item(std::vector<double> item, Matrix prototypes) {
  auto p = init_params({Variant::protomf, 1, 1, item.size(), 1, prototypes.rows()}, 0);
  for (std::size_t j = 0; j < item.size(); ++j) p.item_factors(0, j) = item[j];
  p.item_prototypes = std::move(prototypes);
  return p;
}

}  // namespace

TEST(DistanceProfile, Examples) {
  const auto ds = one_item_dataset();
  const std::size_t k1[] = {1}, k3[] = {1, 2, 3};

  auto p = with_item({1, 1, 0}, rows({{0, 0, 1}, {2, 2, 0}}));
  EXPECT_EQ(distance_profile(p, ds, k1).mean_distance(0, 0), 0.0);

  p = with_item({1, 0, 0}, rows({{0, 1, 0}, {0, 0, 1}, {0, 2, 2}}));
  const auto orth = distance_profile(p, ds, k3);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(orth.mean_distance(0, k), 1.0);

  // Cosine similarities {1, 0.5, 0}: k=2 averages distances 0 and 0.5.
  p = with_item({1, 0}, rows({{0, 1}, {1, 0}, {0.5, std::sqrt(0.75)}}));
  const std::size_t k2[] = {2};
  EXPECT_NEAR(distance_profile(p, ds, k2).mean_distance(0, 0), 0.25, 1e-15);
}

TEST(DistanceProfile, MonotoneInKAndParallelMatchesSerial) {
  SyntheticSpec spec;
  spec.n_users = 100;
  spec.n_items = 90;
  spec.seed = 5;
  const auto ds = synthetic_dataset(make_synthetic(spec));
  TrainConfig cfg;
  cfg.dim = 8;
  cfg.user_prototypes = 4;
  cfg.item_prototypes = 6;
  cfg.epochs = 2;
  cfg.learning_rate = 5e-3;
  const auto split = make_split(ds, 5);
  const auto params = train(ds, split, cfg).params;
  const std::size_t ks[] = {1, 2, 3, 4, 5, 6};
  const auto prof = distance_profile(params, ds, ks, Exec::parallel);
  const auto serial = distance_profile(params, ds, ks, Exec::serial);
  EXPECT_TRUE(std::ranges::equal(prof.mean_distance.values(), serial.mean_distance.values(),
                                 [](double a, double b) {
                                   return std::bit_cast<std::uint64_t>(a) ==
                                          std::bit_cast<std::uint64_t>(b);
                                 }));
  std::size_t total = 0;
  for (std::size_t b = 0; b < prof.bin_sizes.size(); ++b) {
    total += prof.bin_sizes[b];
    for (std::size_t k = 1; k < 6; ++k)
      EXPECT_LE(prof.mean_distance(b, k - 1), prof.mean_distance(b, k) + 1e-15);
  }
  EXPECT_EQ(total, ds.n_items);
  const auto csv = distance_profile_csv(prof);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "decile,n_items,k1,k2,k3,k4,k5,k6");
}

TEST(DistanceProfile, Errors) {
  const auto ds = one_item_dataset();
  auto p = with_item({1, 0}, rows({{0, 1}, {1, 0}}));
  const std::size_t too_big[] = {3}, zero[] = {0};
  EXPECT_THROW(distance_profile(p, ds, too_big), UsageError);
  EXPECT_THROW(distance_profile(p, ds, zero), UsageError);
  const auto mf = init_params({Variant::mf, 1, 1, 2, 0, 0}, 0);
  const std::size_t k1[] = {1};
  EXPECT_THROW(distance_profile(mf, ds, k1), UsageError);
}

TEST(GramStats, Examples) {
  auto g = gram_stats(rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}));
  EXPECT_EQ(g.mean_abs_offdiag, 0.0);
  EXPECT_EQ(g.penalty_value, 3.0);
  g = gram_stats(rows({{1, 2}, {1, 2}}));
  EXPECT_NEAR(g.max_abs_offdiag, 1.0, 1e-15);
  g = gram_stats(rows({{1, 0}, {1, 1}}));
  EXPECT_NEAR(g.max_abs_offdiag, 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(g.mean_abs_offdiag, 0.7071, 1e-4);
  EXPECT_THROW(gram_stats(rows({{1, 0}})), UsageError);
}

TEST(GramStats, BoundsAndPenaltyIdentity) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 50; ++trial) {
    Matrix P(2 + trial % 7, 5);
    for (auto& v : P.values()) v = n(rng);
    const auto g = gram_stats(P);
    EXPECT_LE(0.0, g.mean_abs_offdiag);
    EXPECT_LE(g.mean_abs_offdiag, g.max_abs_offdiag);
    EXPECT_LE(g.max_abs_offdiag, 1.0);
    EXPECT_EQ(g.penalty_value, regularizer_penalty(P));
  }
}

TEST(Embeddings, RowsRoundTripAndGroups) {
  SyntheticSpec spec;
  spec.n_users = 40;
  spec.n_items = 35;
  spec.tail_items = 5;
  spec.head_items = 5;
  const auto ds = synthetic_dataset(make_synthetic(spec));
  auto p = init_params({Variant::protomf, ds.n_users, ds.n_items, 6, 3, 4}, 9);
  p.item_factors(0, 0) = 1.0 / 3.0;
  std::ostringstream out;
  write_embeddings_csv(out, p, ds);
  std::istringstream in(out.str());
  const auto back = read_embeddings_csv(in);
  ASSERT_EQ(back.size(), ds.n_items + 4);
  for (std::size_t t = 0; t < ds.n_items; ++t) {
    EXPECT_EQ(back[t].kind, "item");
    EXPECT_EQ(back[t].key, ds.item_keys[t]);
    EXPECT_EQ(back[t].group, to_string(ds.item_group[t]));
    EXPECT_EQ(back[t].popularity, std::to_string(ds.item_popularity[t]));
    for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(back[t].values[j], p.item_factors(t, j));
  }
  for (std::size_t l = 0; l < 4; ++l) {
    const auto& r = back[ds.n_items + l];
    EXPECT_EQ(r.kind, "prototype");
    EXPECT_EQ(r.index, l);
    for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(r.values[j], p.item_prototypes(l, j));
  }
  EXPECT_THROW(export_embeddings(p, ds, "/nonexistent-dir/x/emb.csv"), DataError);
}
