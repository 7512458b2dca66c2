#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "protorec/data.hpp"
#include "protorec/errors.hpp"
#include "protorec/synthetic.hpp"

using namespace protorec;

namespace {

Dataset from_text(const std::string& text, InteractionFormat f = InteractionFormat::tsv) {
  std::istringstream in(text);
  return read_interactions(in, f, "test");
}

Dataset with_groups(Dataset ds, const std::string& attrs, const GroupMapping& mapping,
                    GroupLoadStats* stats = nullptr) {
  std::istringstream in(attrs);
  return read_item_groups(in, std::move(ds), mapping, stats);
}

// Each user u<k> gets `per_user` items with increasing timestamps.
Dataset grid_dataset(std::size_t users, std::size_t items, std::size_t per_user) {
  std::ostringstream s;
  std::int64_t ts = 1;
  for (std::size_t u = 0; u < users; ++u)
    for (std::size_t j = 0; j < per_user; ++j)
      s << 'u' << u << "\ti" << (u * 7 + j * 3) % items << '\t' << ts++ << '\n';
  return from_text(s.str());
}

}  // namespace

TEST(LoadInteractions, ThreeLineExample) {
  const auto ds = from_text("u1 i1\nu1 i2\nu2 i1\n");
  EXPECT_EQ(ds.n_users, 2u);
  EXPECT_EQ(ds.n_items, 2u);
  EXPECT_EQ(ds.interactions.size(), 3u);
  EXPECT_EQ(ds.item_popularity, (std::vector<std::uint32_t>{2, 1}));
}

TEST(LoadInteractions, DuplicateKeepsEarliestTimestamp) {
  const auto ds = from_text("u1\ti1\t50\nu1\ti1\t20\n");
  ASSERT_EQ(ds.interactions.size(), 1u);
  EXPECT_EQ(ds.interactions[0].timestamp, 20);
  EXPECT_EQ(ds.item_popularity[0], 1u);
}

TEST(LoadInteractions, MovieLensLine) {
  const auto ds = from_text("1::1193::5::978300760\n", InteractionFormat::movielens_dat);
  ASSERT_EQ(ds.interactions.size(), 1u);
  EXPECT_EQ(ds.user_keys[0], "1");
  EXPECT_EQ(ds.item_keys[0], "1193");
  EXPECT_EQ(ds.interactions[0].timestamp, 978300760);
}

TEST(LoadInteractions, MalformedLineNamesLine) {
  try {
    from_text("u1\ti1\t1\nonlyone\n");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find(":2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(from_text("1::2::3\n", InteractionFormat::movielens_dat), DataError);
  EXPECT_THROW(from_text("u1\ti1\tnot-a-time\n"), DataError);
}

TEST(LoadInteractions, EmptyInputIsError) {
  EXPECT_THROW(from_text(""), DataError);
  EXPECT_THROW(from_text("# just a comment\n\n"), DataError);
}

TEST(LoadInteractions, CanonicalRoundTrip) {
  const auto ds = from_text("b a 3\nc a 1\nb d 2\nb a 9\n");
  std::ostringstream out;
  write_interactions_tsv(ds, out);
  EXPECT_EQ(from_text(out.str()), ds);
}

TEST(DatasetInvariants, IndicesDenseAndPopularityCounts) {
  const auto ds = synthetic_dataset(make_synthetic({}));
  std::vector<std::uint32_t> count(ds.n_items, 0);
  std::set<std::pair<std::uint32_t, std::uint32_t>> pairs;
  for (const auto& x : ds.interactions) {
    ASSERT_LT(x.user, ds.n_users);
    ASSERT_LT(x.item, ds.n_items);
    ++count[x.item];
    EXPECT_TRUE(pairs.insert({x.user, x.item}).second);
  }
  EXPECT_EQ(count, ds.item_popularity);
  EXPECT_EQ(ds.item_group.size(), ds.n_items);
}

TEST(ItemGroups, DirectMapping) {
  auto ds = from_text("u1 i1\nu1 i2\nu2 i3\n");
  ds = with_groups(ds, "i1\tUS\ni2\tNL\n", {{"US", Group::over}, {"NL", Group::under}});
  EXPECT_EQ(ds.item_group[0], Group::over);
  EXPECT_EQ(ds.item_group[1], Group::under);
  EXPECT_EQ(ds.item_group[2], Group::neutral);
}

TEST(ItemGroups, GenreTokens) {
  auto ds = from_text("u1 a\nu1 b\nu1 c\nu1 d\n");
  GroupMapping m{{"Drama", Group::over}, {"Western", Group::under}};
  GroupLoadStats stats;
  ds = with_groups(ds, "a\tDrama\nb\tWestern|Drama\nc\tComedy\nzz\tDrama\n", m, &stats);
  EXPECT_EQ(ds.item_group[0], Group::over);
  EXPECT_EQ(ds.item_group[1], Group::under);
  EXPECT_EQ(ds.item_group[2], Group::neutral);
  EXPECT_EQ(ds.item_group[3], Group::neutral);
  EXPECT_EQ(stats.unknown_items, 1u);
  EXPECT_EQ(stats.labeled, 2u);
}

TEST(ItemGroups, UnreadableFile) {
  auto ds = from_text("u1 i1\n");
  EXPECT_THROW(load_item_groups("/nonexistent/attrs.tsv", ds, {}), DataError);
}

TEST(Split, RecencyRule) {
  const auto ds = from_text("u\tc\t3\nu\ta\t1\nu\tb\t2\n");
  const auto split = make_split(ds, 1);
  ASSERT_EQ(split.train.size(), 1u);
  EXPECT_EQ(ds.item_keys[split.train[0].item], "a");
  ASSERT_EQ(split.validation.size(), 1u);
  EXPECT_EQ(ds.item_keys[split.validation[0].positive], "b");
  ASSERT_EQ(split.test.size(), 1u);
  EXPECT_EQ(ds.item_keys[split.test[0].positive], "c");
}

TEST(Split, TwoInteractionsStayInTrain) {
  const auto ds = from_text("u\ta\t1\nu\tb\t2\n");
  const auto split = make_split(ds, 1);
  EXPECT_EQ(split.train.size(), 2u);
  EXPECT_TRUE(split.validation.empty());
  EXPECT_TRUE(split.test.empty());
}

TEST(Split, SameSeedSameNegatives) {
  const auto ds = synthetic_dataset(make_synthetic({}));
  EXPECT_EQ(make_split(ds, 5), make_split(ds, 5));
  EXPECT_NE(make_split(ds, 5).test, make_split(ds, 6).test);
}

TEST(Split, ShortfallTakesAllAvailable) {
  // The grid touches 6 distinct items and every user has 4 of them, so
  // only 2 negatives are left per list.
  auto ds = grid_dataset(3, 10, 4);
  ASSERT_EQ(ds.n_items, 6u);
  const auto split = make_split(ds, 3);
  ASSERT_EQ(split.test.size(), 3u);
  for (const auto& c : split.test) {
    EXPECT_TRUE(c.shortfall);
    EXPECT_EQ(c.negatives.size(), 2u);
  }
}

TEST(Split, Invariants) {
  const auto ds = synthetic_dataset(make_synthetic({}));
  const auto split = make_split(ds, 11);
  std::vector<std::set<std::uint32_t>> seen(ds.n_users), train(ds.n_users);
  for (const auto& x : ds.interactions) seen[x.user].insert(x.item);
  for (const auto& x : split.train) train[x.user].insert(x.item);
  EXPECT_EQ(split.train.size() + split.validation.size() + split.test.size(),
            ds.interactions.size());
  for (Stage st : {Stage::validation, Stage::test}) {
    for (const auto& c : split.cases(st)) {
      EXPECT_FALSE(train[c.user].count(c.positive));
      EXPECT_FALSE(c.shortfall);
      const auto cands = c.candidates();
      ASSERT_EQ(cands.size(), 100u);
      EXPECT_EQ(cands[c.positive_slot], c.positive);
      std::set<std::uint32_t> negs(c.negatives.begin(), c.negatives.end());
      EXPECT_EQ(negs.size(), c.negatives.size());
      for (auto n : c.negatives) EXPECT_FALSE(seen[c.user].count(n));
    }
  }
}

TEST(Deciles, DistinctCountsOnePerBin) {
  std::ostringstream s;
  for (int i = 0; i < 10; ++i)
    for (int u = 0; u <= i; ++u) s << 'u' << u << "\ti" << (9 - i) << '\n';
  const auto ds = from_text(s.str());
  const auto bins = popularity_deciles(ds);
  for (std::size_t t = 0; t < ds.n_items; ++t)
    EXPECT_EQ(bins[t], ds.item_popularity[t] - 1) << "item " << ds.item_keys[t];
}

TEST(Deciles, EqualCountsFollowIndex) {
  std::ostringstream s;
  for (int i = 0; i < 20; ++i) s << "u\ti" << i << '\n';
  const auto ds = from_text(s.str());
  const auto bins = popularity_deciles(ds);
  for (std::size_t t = 0; t < 20; ++t) EXPECT_EQ(bins[t], t / 2);
}

TEST(Deciles, FourItemsLogOrder) {
  // counts {1, 1, 10, 100} on items a, b, c, d; fewer than 10 items so
  // each item is its own bin in ascending log(1+c) order.
  std::ostringstream s;
  const std::pair<const char*, int> counts[] = {{"c", 10}, {"a", 1}, {"d", 100}, {"b", 1}};
  for (auto [item, n] : counts)
    for (int u = 0; u < n; ++u) s << 'u' << u << '\t' << item << '\n';
  const auto ds = from_text(s.str());
  EXPECT_EQ(decile_count(ds), 4u);
  const auto bins = popularity_deciles(ds);
  auto bin_of = [&](const char* k) { return bins[ds.item_index.at(k)]; };
  // Hand order: log(2) = log(2) < log(11) < log(101); a precedes b by index.
  EXPECT_EQ(bin_of("c"), 2);
  EXPECT_EQ(bin_of("a"), 0);
  EXPECT_EQ(bin_of("d"), 3);
  EXPECT_EQ(bin_of("b"), 1);
  const auto tail = long_tail_items(ds);
  EXPECT_TRUE(tail[ds.item_index.at("a")]);
  EXPECT_FALSE(tail[ds.item_index.at("b")]);
}

TEST(Prepared, RoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "protorec_prepared_rt";
  std::filesystem::remove_all(dir);
  const auto data = make_synthetic({.n_users = 60, .n_items = 50, .seed = 4});
  const auto ds = synthetic_dataset(data);
  const auto split = make_split(ds, 9);
  write_prepared(dir, ds, split);
  const auto back = read_prepared(dir);
  EXPECT_EQ(back.dataset.n_users, ds.n_users);
  EXPECT_EQ(back.dataset.item_keys, ds.item_keys);
  EXPECT_EQ(back.dataset.item_group, ds.item_group);
  EXPECT_EQ(back.dataset.item_popularity, ds.item_popularity);
  EXPECT_EQ(back.split, split);
  std::filesystem::remove_all(dir);
}
