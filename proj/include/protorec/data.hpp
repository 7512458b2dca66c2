#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace protorec {

enum class Group : std::uint8_t { over, under, neutral };

std::string_view to_string(Group g);
Group parse_group(std::string_view s);  // throws UsageError

enum class InteractionFormat { tsv, movielens_dat };

InteractionFormat parse_format(std::string_view s);  // throws UsageError

// One nonzero entry of the implicit user-item matrix, in dense indices.
struct Interaction {
  std::uint32_t user = 0;
  std::uint32_t item = 0;
  std::int64_t timestamp = 0;

  bool operator==(const Interaction&) const = default;
};

struct Dataset {
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  // De-duplicated, in order of first appearance in the source file.
  std::vector<Interaction> interactions;
  std::vector<std::uint32_t> item_popularity;
  std::vector<Group> item_group;
  // Dense index -> external key.
  std::vector<std::string> user_keys;
  std::vector<std::string> item_keys;
  std::unordered_map<std::string, std::uint32_t> user_index;
  std::unordered_map<std::string, std::uint32_t> item_index;

  bool operator==(const Dataset&) const = default;
};

Dataset read_interactions(std::istream& in, InteractionFormat format,
                          std::string_view source = "<stream>");
Dataset load_interactions(const std::filesystem::path& path, InteractionFormat format);

// Canonical internal form: `user<TAB>item<TAB>timestamp`, one line per
// interaction in stored order. Reloading it as tsv yields an equal Dataset.
void write_interactions_tsv(const Dataset& dataset, std::ostream& out);

// Raw attribute value -> group label. Attribute values may hold several
// `|`-separated tokens; an item is `under` if any token maps to under,
// else `over` if any token maps to over, else neutral.
using GroupMapping = std::map<std::string, Group, std::less<>>;

struct GroupLoadStats {
  std::size_t labeled = 0;        // items given a non-neutral label
  std::size_t unknown_items = 0;  // attribute lines naming items not in the dataset
};

Dataset read_item_groups(std::istream& in, Dataset dataset, const GroupMapping& mapping,
                         GroupLoadStats* stats = nullptr);
Dataset load_item_groups(const std::filesystem::path& path, Dataset dataset,
                         const GroupMapping& mapping, GroupLoadStats* stats = nullptr);

enum class Stage { validation, test };

std::string_view to_string(Stage s);
Stage parse_stage(std::string_view s);

inline constexpr std::size_t kEvalNegatives = 99;

// One leave-one-out evaluation list: the held-out positive plus sampled
// negatives, with the positive inserted at a seeded slot.
struct EvalCase {
  std::uint32_t user = 0;
  std::uint32_t positive = 0;
  std::vector<std::uint32_t> negatives;
  std::uint32_t positive_slot = 0;
  bool shortfall = false;  // fewer than kEvalNegatives non-interacted items existed

  std::vector<std::uint32_t> candidates() const;

  bool operator==(const EvalCase&) const = default;
};

struct Split {
  std::vector<Interaction> train;
  std::vector<EvalCase> validation;
  std::vector<EvalCase> test;

  const std::vector<EvalCase>& cases(Stage s) const {
    return s == Stage::validation ? validation : test;
  }

  bool operator==(const Split&) const = default;
};

// Leave-one-out by recency: for users with >= 3 interactions the latest is
// test, the second latest validation, the rest train. Timestamp ties are
// resolved by file order (later line = more recent).
Split make_split(const Dataset& dataset, std::uint64_t seed);

// Popularity bins 0..min(10, M)-1 over ascending log(1 + count), ties by
// item index. Bin 0 is the long tail.
std::vector<std::uint8_t> popularity_deciles(const Dataset& dataset);
std::size_t decile_count(const Dataset& dataset);
std::vector<bool> long_tail_items(const Dataset& dataset);

// Prepared-directory layout written by `prepare` and read by the other commands.
void write_prepared(const std::filesystem::path& dir, const Dataset& dataset,
                    const Split& split);

struct Prepared {
  Dataset dataset;
  Split split;
};

Prepared read_prepared(const std::filesystem::path& dir);

}  // namespace protorec
