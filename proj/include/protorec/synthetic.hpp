#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "protorec/data.hpp"

namespace protorec {

// Clustered implicit-feedback data with Zipf-distributed item popularity.
// Each user favours one item cluster; item draws are weighted by
// rank^-zipf_exponent times a boost for the user's cluster.
struct SyntheticSpec {
  std::size_t n_users = 500;
  std::size_t n_items = 300;
  double zipf_exponent = 1.0;
  std::size_t n_clusters = 10;
  double cluster_boost = 6.0;
  std::size_t min_per_user = 12;
  std::size_t max_per_user = 40;
  std::size_t tail_items = 30;  // least popular, attribute "tail"
  std::size_t head_items = 30;  // most popular, attribute "head"
  std::uint64_t seed = 1;
};

struct SyntheticData {
  std::string interactions_tsv;  // user<TAB>item<TAB>timestamp
  std::string attributes_tsv;    // item<TAB>{head,tail,mid}
  GroupMapping mapping;          // head -> over, tail -> under
};

SyntheticData make_synthetic(const SyntheticSpec& spec);

// Parses both generated files into a labelled Dataset.
Dataset synthetic_dataset(const SyntheticData& data);

}  // namespace protorec
