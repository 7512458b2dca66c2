#include "protorec/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include <fmt/core.h>

#include "protorec/seed.hpp"

namespace protorec {

SyntheticData make_synthetic(const SyntheticSpec& spec) {
  std::mt19937_64 rng(derive_seed(spec.seed, "synthetic"));
  const std::size_t m = spec.n_items;

  std::vector<double> base(m);
  for (std::size_t i = 0; i < m; ++i) base[i] = std::pow(double(i + 1), -spec.zipf_exponent);
  std::vector<std::size_t> cluster(m);
  std::uniform_int_distribution<std::size_t> pick_cluster(0, spec.n_clusters - 1);
  for (auto& c : cluster) c = pick_cluster(rng);

  // Item keys are a permutation so the key order does not leak popularity.
  std::vector<std::size_t> key_of(m);
  std::iota(key_of.begin(), key_of.end(), std::size_t{0});
  std::shuffle(key_of.begin(), key_of.end(), rng);

  std::uniform_int_distribution<std::size_t> pick_count(spec.min_per_user, spec.max_per_user);
  std::vector<std::size_t> counts(m, 0);
  std::ostringstream tsv;
  std::int64_t clock = 1'000'000;
  std::vector<double> w(m);
  for (std::size_t u = 0; u < spec.n_users; ++u) {
    const std::size_t home = pick_cluster(rng);
    for (std::size_t i = 0; i < m; ++i)
      w[i] = base[i] * (cluster[i] == home ? spec.cluster_boost : 1.0);
    const std::size_t n = std::min(pick_count(rng), m);
    // Weighted sampling without replacement (exponential keys).
    std::vector<std::pair<double, std::size_t>> keys(m);
    std::exponential_distribution<double> expo(1.0);
    for (std::size_t i = 0; i < m; ++i) keys[i] = {expo(rng) / w[i], i};
    std::partial_sort(keys.begin(), keys.begin() + n, keys.end());
    std::shuffle(keys.begin(), keys.begin() + n, rng);
    for (std::size_t j = 0; j < n; ++j) {
      const auto item = keys[j].second;
      ++counts[item];
      tsv << 'u' << u << "\ti" << key_of[item] << '\t' << clock++ << '\n';
    }
  }

  // Group attributes from realised counts, ties by item key.
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < m; ++i)
    if (counts[i] > 0) order.push_back(i);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return counts[a] != counts[b] ? counts[a] < counts[b] : key_of[a] < key_of[b];
  });
  std::vector<std::string> attr(m, "mid");
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (r < spec.tail_items) attr[order[r]] = "tail";
    if (r + spec.head_items >= order.size()) attr[order[r]] = "head";
  }
  std::ostringstream attrs;
  for (std::size_t i : order) attrs << 'i' << key_of[i] << '\t' << attr[i] << '\n';

  SyntheticData out;
  out.interactions_tsv = tsv.str();
  out.attributes_tsv = attrs.str();
  out.mapping = {{"head", Group::over}, {"tail", Group::under}};
  return out;
}

Dataset synthetic_dataset(const SyntheticData& data) {
  std::istringstream in(data.interactions_tsv);
  auto ds = read_interactions(in, InteractionFormat::tsv, "<synthetic>");
  std::istringstream attrs(data.attributes_tsv);
  return read_item_groups(attrs, std::move(ds), data.mapping);
}

}  // namespace protorec
