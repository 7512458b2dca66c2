#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "protorec/data.hpp"
#include "protorec/eval.hpp"
#include "protorec/matrix.hpp"
#include "protorec/model.hpp"

namespace protorec {

// Mean over items in each popularity bin of the average cosine distance
// (1 - similarity) to the item's k nearest item prototypes.
struct DistanceProfile {
  std::vector<std::size_t> k_values;
  std::vector<std::size_t> bin_sizes;
  Matrix mean_distance;  // bins x k_values; NaN for an empty bin
};

// Throws UsageError for mf parameters or k outside [1, L_t].
DistanceProfile distance_profile(const ModelParams& params, const Dataset& dataset,
                                 std::span<const std::size_t> k_values,
                                 Exec exec = Exec::parallel);

std::string distance_profile_csv(const DistanceProfile& profile);

struct GramStats {
  double mean_abs_offdiag = 0.0;
  double max_abs_offdiag = 0.0;
  double penalty_value = 0.0;
};

// Statistics of the normalized prototype Gram matrix. Needs >= 2 rows.
GramStats gram_stats(const Matrix& prototypes);

// Flat CSV: kind,index,key,popularity,group,v0..v{d-1}. One row per item
// (kind=item) and per item prototype (kind=prototype, empty key,
// popularity and group). Values use shortest round-trip formatting.
void write_embeddings_csv(std::ostream& out, const ModelParams& params, const Dataset& dataset);
void export_embeddings(const ModelParams& params, const Dataset& dataset,
                       const std::filesystem::path& path);

struct EmbeddingRow {
  std::string kind;
  std::size_t index = 0;
  std::string key;
  std::string popularity;
  std::string group;
  std::vector<double> values;
};

std::vector<EmbeddingRow> read_embeddings_csv(std::istream& in);

}  // namespace protorec
