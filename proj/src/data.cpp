#include "protorec/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <fmt/core.h>

#include "protorec/errors.hpp"
#include "protorec/seed.hpp"

namespace protorec {

std::string_view to_string(Group g) {
  switch (g) {
    case Group::over: return "over";
    case Group::under: return "under";
    case Group::neutral: return "neutral";
  }
  return "neutral";
}

Group parse_group(std::string_view s) {
  if (s == "over") return Group::over;
  if (s == "under") return Group::under;
  if (s == "neutral") return Group::neutral;
  throw UsageError(fmt::format("unknown group label '{}'", s));
}

InteractionFormat parse_format(std::string_view s) {
  if (s == "tsv") return InteractionFormat::tsv;
  if (s == "movielens_dat") return InteractionFormat::movielens_dat;
  throw UsageError(fmt::format("unknown interaction format '{}'", s));
}

std::string_view to_string(Stage s) { return s == Stage::validation ? "validation" : "test"; }

Stage parse_stage(std::string_view s) {
  if (s == "validation") return Stage::validation;
  if (s == "test") return Stage::test;
  throw UsageError(fmt::format("unknown stage '{}'", s));
}

namespace {

std::vector<std::string_view> split_on(std::string_view line, std::string_view sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + sep.size();
  }
}

std::vector<std::string_view> split_whitespace(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string_view trim_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

bool parse_real(std::string_view s, double& out) {
  // from_chars for double is available in libstdc++ 11.
  return parse_number(s, out);
}

struct DatasetBuilder {
  Dataset ds;
  std::unordered_map<std::uint64_t, std::size_t> pair_slot;

  void add(std::string_view user, std::string_view item, std::int64_t ts) {
    auto u = intern(user, ds.user_keys, ds.user_index);
    auto t = intern(item, ds.item_keys, ds.item_index);
    const std::uint64_t key = (static_cast<std::uint64_t>(u) << 32) | t;
    auto [it, inserted] = pair_slot.emplace(key, ds.interactions.size());
    if (inserted) {
      ds.interactions.push_back({u, t, ts});
    } else {
      auto& kept = ds.interactions[it->second];
      kept.timestamp = std::min(kept.timestamp, ts);
    }
  }

  static std::uint32_t intern(std::string_view key, std::vector<std::string>& keys,
                              std::unordered_map<std::string, std::uint32_t>& index) {
    auto [it, inserted] =
        index.emplace(std::string(key), static_cast<std::uint32_t>(keys.size()));
    if (inserted) keys.emplace_back(key);
    return it->second;
  }

  Dataset finish() && {
    ds.n_users = ds.user_keys.size();
    ds.n_items = ds.item_keys.size();
    ds.item_popularity.assign(ds.n_items, 0);
    for (const auto& x : ds.interactions) ++ds.item_popularity[x.item];
    ds.item_group.assign(ds.n_items, Group::neutral);
    return std::move(ds);
  }
};

}  // namespace

Dataset read_interactions(std::istream& in, InteractionFormat format, std::string_view source) {
  DatasetBuilder builder;
  std::string raw;
  std::size_t line_no = 0;
  auto fail = [&](std::string_view why) {
    return DataError(fmt::format("{}:{}: {}", source, line_no, why));
  };
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = trim_cr(raw);
    if (line.empty()) continue;
    if (format == InteractionFormat::tsv) {
      if (line.front() == '#') continue;
      auto fields = split_on(line, "\t");
      if (fields.size() == 1) fields = split_whitespace(line);
      if (fields.size() < 2 || fields.size() > 3)
        throw fail("expected user<TAB>item[<TAB>timestamp]");
      if (fields[0].empty() || fields[1].empty()) throw fail("empty user or item key");
      std::int64_t ts = 0;
      if (fields.size() == 3 && !parse_number(fields[2], ts)) throw fail("bad timestamp");
      builder.add(fields[0], fields[1], ts);
    } else {
      auto fields = split_on(line, "::");
      if (fields.size() != 4) throw fail("expected user::item::rating::timestamp");
      if (fields[0].empty() || fields[1].empty()) throw fail("empty user or item key");
      double rating = 0.0;
      if (!parse_real(fields[2], rating)) throw fail("bad rating");
      std::int64_t ts = 0;
      if (!parse_number(fields[3], ts)) throw fail("bad timestamp");
      builder.add(fields[0], fields[1], ts);
    }
  }
  if (builder.ds.interactions.empty())
    throw DataError(fmt::format("{}: no interactions", source));
  return std::move(builder).finish();
}

Dataset load_interactions(const std::filesystem::path& path, InteractionFormat format) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open {}", path.string()));
  return read_interactions(in, format, path.string());
}

void write_interactions_tsv(const Dataset& dataset, std::ostream& out) {
  for (const auto& x : dataset.interactions)
    out << dataset.user_keys[x.user] << '\t' << dataset.item_keys[x.item] << '\t'
        << x.timestamp << '\n';
}

Dataset read_item_groups(std::istream& in, Dataset dataset, const GroupMapping& mapping,
                         GroupLoadStats* stats) {
  GroupLoadStats local;
  std::vector<Group> labels(dataset.n_items, Group::neutral);
  std::string raw;
  while (std::getline(in, raw)) {
    std::string_view line = trim_cr(raw);
    if (line.empty() || line.front() == '#') continue;
    auto tab = line.find('\t');
    if (tab == std::string_view::npos) continue;
    auto key = line.substr(0, tab);
    auto attribute = line.substr(tab + 1);
    auto it = dataset.item_index.find(std::string(key));
    if (it == dataset.item_index.end()) {
      ++local.unknown_items;
      continue;
    }
    Group& label = labels[it->second];
    for (auto token : split_on(attribute, "|")) {
      auto m = mapping.find(token);
      if (m == mapping.end()) continue;
      if (m->second == Group::under)
        label = Group::under;
      else if (m->second == Group::over && label != Group::under)
        label = Group::over;
    }
  }
  for (Group g : labels)
    if (g != Group::neutral) ++local.labeled;
  dataset.item_group = std::move(labels);
  if (stats) *stats = local;
  return dataset;
}

Dataset load_item_groups(const std::filesystem::path& path, Dataset dataset,
                         const GroupMapping& mapping, GroupLoadStats* stats) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open attribute file {}", path.string()));
  return read_item_groups(in, std::move(dataset), mapping, stats);
}

std::vector<std::uint32_t> EvalCase::candidates() const {
  std::vector<std::uint32_t> out;
  out.reserve(negatives.size() + 1);
  out.insert(out.end(), negatives.begin(), negatives.begin() + positive_slot);
  out.push_back(positive);
  out.insert(out.end(), negatives.begin() + positive_slot, negatives.end());
  return out;
}

namespace {

EvalCase sample_case(std::uint32_t user, std::uint32_t positive,
                     const std::vector<std::uint32_t>& interacted_sorted, std::size_t n_items,
                     std::mt19937_64& rng) {
  EvalCase c;
  c.user = user;
  c.positive = positive;
  const std::size_t available = n_items - interacted_sorted.size();
  auto is_interacted = [&](std::uint32_t i) {
    return std::binary_search(interacted_sorted.begin(), interacted_sorted.end(), i);
  };
  if (available <= kEvalNegatives) {
    for (std::uint32_t i = 0; i < n_items; ++i)
      if (!is_interacted(i)) c.negatives.push_back(i);
    std::shuffle(c.negatives.begin(), c.negatives.end(), rng);
    c.shortfall = available < kEvalNegatives;
  } else {
    std::vector<std::uint32_t> chosen_sorted;
    std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(n_items - 1));
    while (c.negatives.size() < kEvalNegatives) {
      auto i = pick(rng);
      if (is_interacted(i)) continue;
      auto pos = std::lower_bound(chosen_sorted.begin(), chosen_sorted.end(), i);
      if (pos != chosen_sorted.end() && *pos == i) continue;
      chosen_sorted.insert(pos, i);
      c.negatives.push_back(i);
    }
  }
  std::uniform_int_distribution<std::uint32_t> slot(
      0, static_cast<std::uint32_t>(c.negatives.size()));
  c.positive_slot = slot(rng);
  return c;
}

}  // namespace

Split make_split(const Dataset& dataset, std::uint64_t seed) {
  if (dataset.interactions.empty()) throw DataError("cannot split an empty dataset");

  // Per-user interaction positions, ordered by (timestamp, file position).
  std::vector<std::vector<std::size_t>> by_user(dataset.n_users);
  for (std::size_t i = 0; i < dataset.interactions.size(); ++i)
    by_user[dataset.interactions[i].user].push_back(i);

  std::vector<std::uint8_t> role(dataset.interactions.size(), 0);  // 0 train, 1 val, 2 test
  std::vector<std::uint32_t> eligible;
  for (std::uint32_t u = 0; u < dataset.n_users; ++u) {
    auto& pos = by_user[u];
    if (pos.size() < 3) continue;
    std::stable_sort(pos.begin(), pos.end(), [&](std::size_t a, std::size_t b) {
      return dataset.interactions[a].timestamp < dataset.interactions[b].timestamp;
    });
    role[pos.back()] = 2;
    role[pos[pos.size() - 2]] = 1;
    eligible.push_back(u);
  }

  Split split;
  for (std::size_t i = 0; i < dataset.interactions.size(); ++i)
    if (role[i] == 0) split.train.push_back(dataset.interactions[i]);

  std::mt19937_64 val_rng(derive_seed(seed, "split/validation"));
  std::mt19937_64 test_rng(derive_seed(seed, "split/test"));
  for (auto u : eligible) {
    const auto& pos = by_user[u];
    std::vector<std::uint32_t> interacted;
    interacted.reserve(pos.size());
    for (auto p : pos) interacted.push_back(dataset.interactions[p].item);
    std::sort(interacted.begin(), interacted.end());
    const auto val_item = dataset.interactions[pos[pos.size() - 2]].item;
    const auto test_item = dataset.interactions[pos.back()].item;
    split.validation.push_back(sample_case(u, val_item, interacted, dataset.n_items, val_rng));
    split.test.push_back(sample_case(u, test_item, interacted, dataset.n_items, test_rng));
  }
  return split;
}

std::size_t decile_count(const Dataset& dataset) { return std::min<std::size_t>(10, dataset.n_items); }

std::vector<std::uint8_t> popularity_deciles(const Dataset& dataset) {
  const std::size_t m = dataset.n_items;
  std::vector<std::uint32_t> order(m);
  std::iota(order.begin(), order.end(), 0u);
  std::vector<double> log_count(m);
  for (std::size_t i = 0; i < m; ++i) log_count[i] = std::log1p(double(dataset.item_popularity[i]));
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return log_count[a] < log_count[b]; });
  const std::size_t bins = decile_count(dataset);
  std::vector<std::uint8_t> decile(m, 0);
  for (std::size_t r = 0; r < m; ++r)
    decile[order[r]] = static_cast<std::uint8_t>(r * bins / m);
  return decile;
}

std::vector<bool> long_tail_items(const Dataset& dataset) {
  auto decile = popularity_deciles(dataset);
  std::vector<bool> tail(decile.size());
  for (std::size_t i = 0; i < decile.size(); ++i) tail[i] = decile[i] == 0;
  return tail;
}

// --- prepared directory ------------------------------------------------------

namespace {

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) throw DataError(fmt::format("cannot write {}", p.string()));
  return out;
}

std::ifstream open_in(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw DataError(fmt::format("cannot open {}", p.string()));
  return in;
}

void write_cases(const std::filesystem::path& p, const std::vector<EvalCase>& cases) {
  auto out = open_out(p);
  out << "# user\tpositive\tpositive_slot\tshortfall\tnegatives\n";
  for (const auto& c : cases) {
    out << c.user << '\t' << c.positive << '\t' << c.positive_slot << '\t' << int(c.shortfall)
        << '\t';
    for (std::size_t i = 0; i < c.negatives.size(); ++i)
      out << (i ? "," : "") << c.negatives[i];
    out << '\n';
  }
}

std::vector<EvalCase> read_cases(const std::filesystem::path& p, const Dataset& ds) {
  auto in = open_in(p);
  std::vector<EvalCase> cases;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = trim_cr(raw);
    if (line.empty() || line.front() == '#') continue;
    auto f = split_on(line, "\t");
    auto fail = [&] { return DataError(fmt::format("{}:{}: malformed case", p.string(), line_no)); };
    if (f.size() != 5) throw fail();
    EvalCase c;
    int shortfall = 0;
    if (!parse_number(f[0], c.user) || !parse_number(f[1], c.positive) ||
        !parse_number(f[2], c.positive_slot) || !parse_number(f[3], shortfall))
      throw fail();
    c.shortfall = shortfall != 0;
    if (!f[4].empty()) {
      for (auto tok : split_on(f[4], ",")) {
        std::uint32_t v = 0;
        if (!parse_number(tok, v) || v >= ds.n_items) throw fail();
        c.negatives.push_back(v);
      }
    }
    if (c.user >= ds.n_users || c.positive >= ds.n_items || c.positive_slot > c.negatives.size())
      throw fail();
    cases.push_back(std::move(c));
  }
  return cases;
}

}  // namespace

void write_prepared(const std::filesystem::path& dir, const Dataset& dataset, const Split& split) {
  std::filesystem::create_directories(dir);
  {
    auto out = open_out(dir / "interactions.tsv");
    write_interactions_tsv(dataset, out);
  }
  {
    auto out = open_out(dir / "items.tsv");
    out << "# item\tpopularity\tgroup\n";
    for (std::size_t i = 0; i < dataset.n_items; ++i)
      out << dataset.item_keys[i] << '\t' << dataset.item_popularity[i] << '\t'
          << to_string(dataset.item_group[i]) << '\n';
  }
  {
    auto out = open_out(dir / "train.tsv");
    for (const auto& x : split.train) out << x.user << '\t' << x.item << '\t' << x.timestamp << '\n';
  }
  write_cases(dir / "validation.tsv", split.validation);
  write_cases(dir / "test.tsv", split.test);
}

Prepared read_prepared(const std::filesystem::path& dir) {
  Prepared p;
  p.dataset = load_interactions(dir / "interactions.tsv", InteractionFormat::tsv);
  auto& ds = p.dataset;
  {
    auto path = dir / "items.tsv";
    auto in = open_in(path);
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
      ++line_no;
      std::string_view line = trim_cr(raw);
      if (line.empty() || line.front() == '#') continue;
      auto f = split_on(line, "\t");
      auto it = f.size() == 3 ? ds.item_index.find(std::string(f[0])) : ds.item_index.end();
      if (it == ds.item_index.end())
        throw DataError(fmt::format("{}:{}: unknown item row", path.string(), line_no));
      try {
        ds.item_group[it->second] = parse_group(f[2]);
      } catch (const UsageError& e) {
        throw DataError(fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
      }
    }
  }
  {
    auto path = dir / "train.tsv";
    auto in = open_in(path);
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
      ++line_no;
      std::string_view line = trim_cr(raw);
      if (line.empty()) continue;
      auto f = split_on(line, "\t");
      Interaction x;
      if (f.size() != 3 || !parse_number(f[0], x.user) || !parse_number(f[1], x.item) ||
          !parse_number(f[2], x.timestamp) || x.user >= ds.n_users || x.item >= ds.n_items)
        throw DataError(fmt::format("{}:{}: malformed train row", path.string(), line_no));
      p.split.train.push_back(x);
    }
  }
  p.split.validation = read_cases(dir / "validation.tsv", ds);
  p.split.test = read_cases(dir / "test.tsv", ds);
  return p;
}

}  // namespace protorec
