#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "protorec/errors.hpp"
#include "protorec/model.hpp"

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

ModelParams small_proto(std::uint64_t seed) {
  return init_params({Variant::protomf, 5, 7, 4, 3, 4}, seed);
}

// Plain-loop oracle of the two-sided prototype score.
double oracle_affinity(const ModelParams& p, std::uint32_t u, std::uint32_t t, int ku, int kt) {
  auto embed = [](std::span<const double> x, const Matrix& P, int k) {
    std::vector<double> s(P.rows());
    for (std::size_t i = 0; i < P.rows(); ++i) {
      double xp = 0, xx = 0, pp = 0;
      for (std::size_t j = 0; j < x.size(); ++j) {
        xp += x[j] * P(i, j);
        xx += x[j] * x[j];
        pp += P(i, j) * P(i, j);
      }
      s[i] = xp / std::sqrt(xx * pp);
    }
    if (k == kAllPrototypes) return s;
    std::vector<double> out(s.size(), 0.0);
    std::vector<bool> taken(s.size(), false);
    for (int r = 0; r < k; ++r) {
      std::size_t best = s.size();
      for (std::size_t i = 0; i < s.size(); ++i)
        if (!taken[i] && (best == s.size() || s[i] > s[best])) best = i;
      taken[best] = true;
      out[best] = s[best];
    }
    return out;
  };
  const auto us = embed(p.user_factors.row(u), p.user_prototypes, ku);
  const auto ts = embed(p.item_factors.row(t), p.item_prototypes, kt);
  double a = 0.0;
  for (std::size_t i = 0; i < us.size(); ++i)
    for (std::size_t j = 0; j < ts.size(); ++j)
      a += us[i] * (p.user_map(i, j) + p.item_map(j, i)) * ts[j];
  return a;
}

}  // namespace

TEST(CosineEmbed, Examples) {
  const Matrix P = rows({{1.0, 2.0}, {-2.0, 1.0}});
  const std::vector<double> x{1.0, 2.0};
  const auto s = cosine_embed(x, P);
  EXPECT_DOUBLE_EQ(s.values[0], 1.0);
  EXPECT_DOUBLE_EQ(s.values[1], 0.0);
  EXPECT_EQ(s.mask, (std::vector<std::uint32_t>{0, 1}));

  const auto h = cosine_embed(std::vector<double>{1.0, 0.0}, rows({{1.0, 1.0}}));
  EXPECT_NEAR(h.values[0], 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(h.values[0], 0.7071, 1e-4);
}

TEST(CosineEmbed, DegenerateNormGivesZero) {
  const Matrix P = rows({{1.0, 0.0}, {0.0, 0.0}});
  const auto s = cosine_embed(std::vector<double>{0.0, 0.0}, P);
  EXPECT_EQ(s.values, (std::vector<double>{0.0, 0.0}));
  const auto t = cosine_embed(std::vector<double>{3.0, 0.0}, P);
  EXPECT_EQ(t.values, (std::vector<double>{1.0, 0.0}));
}

TEST(CosineEmbed, ScaleInvariance) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  Matrix P(6, 5);
  for (auto& v : P.values()) v = g(rng);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> x(5), cx(5);
    const double c = std::exp(g(rng) * 3.0);
    for (std::size_t j = 0; j < 5; ++j) {
      x[j] = g(rng);
      cx[j] = c * x[j];
    }
    const auto a = cosine_embed(x, P), b = cosine_embed(cx, P);
    for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(a.values[i], b.values[i], 1e-13);
  }
}

TEST(TopkFilter, Examples) {
  const auto f = topk_filter({{0.9, 0.1, 0.5}, {0, 1, 2}}, 2);
  EXPECT_EQ(f.values, (std::vector<double>{0.9, 0.0, 0.5}));
  EXPECT_EQ(f.mask, (std::vector<std::uint32_t>{0, 2}));

  const auto tie = topk_filter({{0.5, 0.5, 0.1}, {0, 1, 2}}, 1);
  EXPECT_EQ(tie.mask, (std::vector<std::uint32_t>{0}));

  const SimilarityVector s{{0.3, -0.2, 0.7}, {0, 1, 2}};
  const auto all = topk_filter(s, kAllPrototypes);
  EXPECT_EQ(all.values, s.values);
  EXPECT_EQ(all.mask, s.mask);
}

TEST(TopkFilter, BadKRejected) {
  EXPECT_THROW(topk_filter({{0.1, 0.2}, {0, 1}}, 0), UsageError);
  EXPECT_THROW(topk_filter({{0.1, 0.2}, {0, 1}}, -2), UsageError);
  EXPECT_THROW((FilterSpec{3, 1}.validate(2, 2)), UsageError);
  EXPECT_NO_THROW((FilterSpec{2, kAllPrototypes}.validate(2, 2)));
}

TEST(TopkFilter, MaskProperties) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> coarse(-3, 3);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t L = 1 + trial % 9;
    SimilarityVector s;
    for (std::size_t i = 0; i < L; ++i) {
      // Coarse values make ties common.
      s.values.push_back(trial % 2 ? coarse(rng) / 3.0 : u(rng));
      s.mask.push_back(static_cast<std::uint32_t>(i));
    }
    const int k = 1 + trial % static_cast<int>(L);
    const auto f = topk_filter(s, k);
    ASSERT_EQ(f.mask.size(), static_cast<std::size_t>(k));
    std::vector<bool> kept(L, false);
    for (auto i : f.mask) kept[i] = true;
    double min_kept = 2.0;
    for (std::size_t i = 0; i < L; ++i) {
      if (kept[i]) {
        EXPECT_EQ(f.values[i], s.values[i]);
        min_kept = std::min(min_kept, s.values[i]);
      } else {
        EXPECT_EQ(f.values[i], 0.0);
      }
    }
    for (std::size_t i = 0; i < L; ++i)
      if (!kept[i]) EXPECT_LE(s.values[i], min_kept);
  }
}

TEST(Affinity, MfDotProduct) {
  ModelParams p;
  p.variant = Variant::mf;
  p.user_factors = rows({{1.0, 2.0}});
  p.item_factors = rows({{3.0, 4.0}});
  EXPECT_EQ(affinity(p, 0, 0, {}), 11.0);
}

TEST(Affinity, ZeroMapsScoreZero) {
  auto p = small_proto(2);
  p.user_map.fill(0.0);
  p.item_map.fill(0.0);
  for (std::uint32_t u = 0; u < 5; ++u)
    for (std::uint32_t t = 0; t < 7; ++t) EXPECT_EQ(affinity(p, u, t, {}), 0.0);
}

TEST(Affinity, AllOnesScalarCase) {
  auto p = init_params({Variant::protomf, 1, 1, 1, 1, 1}, 0);
  for (Matrix* m : {&p.user_factors, &p.item_factors, &p.user_prototypes, &p.item_prototypes,
                    &p.user_map, &p.item_map})
    m->fill(1.0);
  EXPECT_EQ(affinity(p, 0, 0, {}), 2.0);
}

TEST(Affinity, MatchesLoopOracle) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto p = small_proto(seed);
    for (auto [ku, kt] : {std::pair{kAllPrototypes, kAllPrototypes}, {1, 2}, {3, 1}})
      for (std::uint32_t u = 0; u < 5; ++u)
        for (std::uint32_t t = 0; t < 7; ++t)
          EXPECT_NEAR(affinity(p, u, t, {ku, kt}), oracle_affinity(p, u, t, ku, kt), 1e-12);
  }
}

TEST(Affinity, OutOfRange) {
  const auto p = small_proto(1);
  EXPECT_THROW(affinity(p, 5, 0, {}), std::out_of_range);
  EXPECT_THROW(affinity(p, 0, 7, {}), std::out_of_range);
}

TEST(Affinity, Deterministic) {
  const auto p = small_proto(9);
  EXPECT_EQ(affinity(p, 1, 2, {2, 2}), affinity(p, 1, 2, {2, 2}));
}

TEST(BatchScores, BitIdenticalToAffinity) {
  const auto p = init_params({Variant::protomf, 3, 120, 8, 5, 6}, 4);
  std::vector<std::uint32_t> items;
  for (std::uint32_t t = 0; t < 100; ++t) items.push_back((t * 37) % 120);
  for (FilterSpec f : {FilterSpec{}, FilterSpec{2, 3}}) {
    const auto s = batch_scores(p, 1, items, f);
    ASSERT_EQ(s.size(), 100u);
    for (std::size_t i = 0; i < items.size(); ++i) EXPECT_EQ(s[i], affinity(p, 1, items[i], f));
  }
  EXPECT_TRUE(batch_scores(p, 0, {}, {}).empty());
  const std::uint32_t one[] = {5};
  EXPECT_EQ(batch_scores(p, 2, one, {})[0], affinity(p, 2, 5, {}));

  const auto mf = init_params({Variant::mf, 3, 120, 8, 0, 0}, 4);
  const auto ms = batch_scores(mf, 1, items, {});
  for (std::size_t i = 0; i < items.size(); ++i) EXPECT_EQ(ms[i], affinity(mf, 1, items[i], {}));
}

TEST(InitParams, SeededShapesAndSpread) {
  const auto a = init_params({Variant::protomf, 40, 50, 16, 6, 7}, 1);
  EXPECT_EQ(a, init_params({Variant::protomf, 40, 50, 16, 6, 7}, 1));
  EXPECT_NE(a, init_params({Variant::protomf, 40, 50, 16, 6, 7}, 2));
  EXPECT_EQ(a.user_map.rows(), 6u);
  EXPECT_EQ(a.user_map.cols(), 7u);
  EXPECT_EQ(a.item_map.rows(), 7u);
  EXPECT_EQ(a.item_map.cols(), 6u);
  double ss = 0.0;
  for (double v : a.item_factors.values()) ss += v * v;
  EXPECT_NEAR(std::sqrt(ss / a.item_factors.values().size()), 0.1, 0.01);

  const auto mf = init_params({Variant::mf, 4, 5, 3, 6, 7}, 1);
  EXPECT_EQ(mf.user_prototypes.rows(), 0u);
  EXPECT_EQ(mf.item_map.rows(), 0u);
}
